"""Run configuration: a single JSON document in fixed SI units."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from . import __version__
from .errors import ConfigError, DomainError
from .fluid import Ambient, FluidModel
from .geometry import CD_TABLE, DischargeCoefficient, EffectiveAreaModel, ValveGeometry
from .fluid import choking_factor
from .pdm import InflowSchedule, RunSettings
from .system import ValveSystem


@dataclass
class FluidConfig:
    kind: str = "gas"
    kappa: float = 1.4
    R: float = 288.0
    T: float = 293.0
    rho: Optional[float] = None  # gas: derived from p_set / (R T) when omitted
    bulk_modulus: Optional[float] = None


@dataclass
class AmbientConfig:
    p_b: float = 1e5
    p_set: float = 5e5


@dataclass
class ValveConfig:
    D: float = 0.03205
    phi: float = math.pi / 2
    cd: Union[float, str] = 0.93  # a number or a named table
    x_max: Optional[float] = None
    x_stop: Optional[float] = None
    k: float = 5000.0
    c: float = 20.0
    m: float = 0.45
    e0: float = 0.2
    e1: float = 0.2
    x_pre: Optional[float] = None


@dataclass
class EffectiveAreaConfig:
    model: str = "constant"  # constant | analytic | polynomial | tabulated
    coeffs: list = field(default_factory=list)
    table: Optional[str] = None


@dataclass
class PipeConfig:
    L: float = 1.0
    n_nodes: int = 101
    lam: float = 0.0
    scheme: str = "auto"
    convection: bool = True
    inlet_loss: bool = True


@dataclass
class InflowConfig:
    kind: str = "constant"
    q: float = 0.5  # peak inflow relative to capacity
    base_q: float = 0.0
    t_ramp: float = 0.0
    t_hold: float = 0.0
    t_down: float = 0.0


@dataclass
class TankConfig:
    V: float = 1.0
    p_r0: float = 0.99  # initial tank pressure as a fraction of p_set
    inflow: InflowConfig = field(default_factory=InflowConfig)


@dataclass
class RunConfig:
    t_end: float = 1.0
    sample_dt: float = 1e-4
    rtol: float = 1e-8
    v_threshold: float = 1e-4
    cfl: float = 0.9
    event_tol: float = 1e-10
    settle_window: float = 0.25
    gas_pstar: str = "absolute"


@dataclass
class SimConfig:
    fluid: FluidConfig = field(default_factory=FluidConfig)
    ambient: AmbientConfig = field(default_factory=AmbientConfig)
    valve: ValveConfig = field(default_factory=ValveConfig)
    effective_area: EffectiveAreaConfig = field(default_factory=EffectiveAreaConfig)
    pipe: PipeConfig = field(default_factory=PipeConfig)
    tank: TankConfig = field(default_factory=TankConfig)
    run: RunConfig = field(default_factory=RunConfig)

    # -- derived objects --------------------------------------------------
    def ambient_obj(self) -> Ambient:
        return Ambient(self.ambient.p_b, self.ambient.p_set)

    def fluid_obj(self) -> FluidModel:
        f, amb = self.fluid, self.ambient_obj()
        if f.kind == "gas":
            fl = FluidModel.gas(amb, f.kappa, f.R, f.T)
            return fl if f.rho is None else dataclasses.replace(fl, rho=f.rho)
        kw = {"T": f.T}
        if f.rho is not None:
            kw["rho"] = f.rho
        if f.bulk_modulus is not None:
            kw["E"] = f.bulk_modulus
        return FluidModel.liquid(**kw)

    def geometry_obj(self) -> ValveGeometry:
        v = self.valve
        cd = DischargeCoefficient.from_table(v.cd) if isinstance(v.cd, str) else DischargeCoefficient(float(v.cd))
        return ValveGeometry(v.D, v.phi, cd, v.x_max, v.x_stop, v.k, v.c, v.m, v.e0, v.e1, v.x_pre)

    def aeff_obj(self, geom: ValveGeometry, fluid: FluidModel) -> EffectiveAreaModel:
        e = self.effective_area
        if e.model == "constant":
            return EffectiveAreaModel()
        if e.model == "analytic":
            return EffectiveAreaModel.analytic(geom, choking_factor(fluid))
        if e.model == "polynomial":
            return EffectiveAreaModel.polynomial(*e.coeffs)
        return EffectiveAreaModel.from_csv(e.table)

    def system(self) -> ValveSystem:
        try:
            fluid = self.fluid_obj()
            geom = self.geometry_obj()
            return ValveSystem(
                fluid,
                self.ambient_obj(),
                geom,
                self.aeff_obj(geom, fluid),
                L=self.pipe.L,
                lam=self.pipe.lam,
                V=self.tank.V,
                gas_pstar=self.run.gas_pstar,
                inlet_loss=self.pipe.inlet_loss,
            )
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    def schedule(self, system: Optional[ValveSystem] = None) -> InflowSchedule:
        cap = (system or self.system()).capacity()
        f = self.tank.inflow
        return InflowSchedule(f.kind, peak=f.q * cap, base=f.base_q * cap, t_ramp=f.t_ramp, t_hold=f.t_hold, t_down=f.t_down)

    def run_settings(self) -> RunSettings:
        r = self.run
        return RunSettings(
            t_end=r.t_end,
            sample_dt=r.sample_dt,
            n_nodes=self.pipe.n_nodes,
            scheme=self.pipe.scheme,
            rtol=r.rtol,
            v_threshold=r.v_threshold,
            cfl=r.cfl,
            event_tol=r.event_tol,
            convection=self.pipe.convection,
            settle_window=r.settle_window,
        )

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"prvdyn {__version__} config {self.config_hash()}"


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{path + key}'")
    kw = {}
    for name, f in known.items():
        if name not in data:
            continue
        val = data[name]
        sub = _SUBBLOCKS.get((cls, name))
        kw[name] = _build(sub, val, f"{path}{name}.") if sub else val
    return cls(**kw)


_SUBBLOCKS = {
    (SimConfig, "fluid"): FluidConfig,
    (SimConfig, "ambient"): AmbientConfig,
    (SimConfig, "valve"): ValveConfig,
    (SimConfig, "effective_area"): EffectiveAreaConfig,
    (SimConfig, "pipe"): PipeConfig,
    (SimConfig, "tank"): TankConfig,
    (SimConfig, "run"): RunConfig,
    (TankConfig, "inflow"): InflowConfig,
}


def _num(path, v, lo=None, hi=None, lo_open=False, hi_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path} must be a finite number, got {v!r}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"{path} = {v} is below its admissible range")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(f"{path} = {v} is above its admissible range")


def validate(cfg: SimConfig) -> SimConfig:
    """Check field ranges, naming the offending field; returns cfg."""
    f = cfg.fluid
    if f.kind not in ("gas", "liquid"):
        raise ConfigError(f"fluid.kind must be 'gas' or 'liquid', got {f.kind!r}")
    if f.kind == "gas" and f.bulk_modulus is not None:
        warnings.warn("fluid.bulk_modulus is ignored for gas service", UserWarning, stacklevel=2)
        f.bulk_modulus = None
    _num("ambient.p_b", cfg.ambient.p_b, 0, lo_open=True)
    _num("ambient.p_set", cfg.ambient.p_set, cfg.ambient.p_b, lo_open=True)
    v = cfg.valve
    for name in ("D", "k", "m"):
        _num(f"valve.{name}", getattr(v, name), 0, lo_open=True)
    _num("valve.c", v.c, 0)
    _num("valve.phi", v.phi, 0, math.pi, True, True)
    _num("valve.e0", v.e0, 0, 1)
    _num("valve.e1", v.e1, 0, 1)
    if isinstance(v.cd, str):
        if v.cd not in CD_TABLE:
            raise ConfigError(f"valve.cd names an unknown table {v.cd!r}")
    else:
        _num("valve.cd", v.cd, 0, 1.2, lo_open=True)
    if cfg.effective_area.model not in ("constant", "analytic", "polynomial", "tabulated"):
        raise ConfigError(f"effective_area.model {cfg.effective_area.model!r} is not recognised")
    if cfg.effective_area.model == "tabulated" and not cfg.effective_area.table:
        raise ConfigError("effective_area.table is required for the tabulated model")
    p = cfg.pipe
    _num("pipe.L", p.L, 0, lo_open=True)
    _num("pipe.lam", p.lam, 0)
    if not isinstance(p.n_nodes, int) or p.n_nodes < 8:
        raise ConfigError("pipe.n_nodes must be an integer of at least 8")
    if p.scheme not in ("auto", "moc", "lw"):
        raise ConfigError(f"pipe.scheme {p.scheme!r} is not recognised")
    _num("tank.V", cfg.tank.V, 0, lo_open=True)
    _num("tank.p_r0", cfg.tank.p_r0, 0, lo_open=True)
    fl = cfg.tank.inflow
    if fl.kind not in ("constant", "ramp-hold", "ramp-up-ramp-down"):
        raise ConfigError(f"tank.inflow.kind {fl.kind!r} is not recognised")
    _num("tank.inflow.q", fl.q, 0)
    _num("tank.inflow.base_q", fl.base_q, 0)
    r = cfg.run
    _num("run.t_end", r.t_end, 0, lo_open=True)
    _num("run.sample_dt", r.sample_dt, 0, lo_open=True)
    _num("run.cfl", r.cfl, 0, 1, lo_open=True)
    if r.gas_pstar not in ("absolute", "gauge"):
        raise ConfigError("run.gas_pstar must be 'absolute' or 'gauge'")
    cfg.system()  # cross-field checks
    return cfg


def from_dict(data: dict) -> SimConfig:
    return validate(_build(SimConfig, data, ""))


def load_config(path=None, overrides=()) -> SimConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for item in overrides:
        apply_override(data, item)
    return from_dict(data)


def apply_override(data: dict, item: str) -> None:
    """Set a dotted key from ``key=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = value
