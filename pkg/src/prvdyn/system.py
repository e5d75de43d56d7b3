"""The assembled valve-pipe-tank system and the algebra every model shares."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Literal

from .errors import DomainError
from .fluid import (
    Ambient,
    FluidModel,
    choking_factor,
    inlet_loss_chi,
    inlet_pressure,
    inlet_pressure_partials,
    sonic_speed,
)
from .geometry import (
    EffectiveAreaModel,
    ValveGeometry,
    flow_through_area,
    flow_through_area_derivative,
)


@dataclass(frozen=True)
class ValveSystem:
    """A spring-loaded relief valve on an inlet pipe of length ``L`` fed by a tank.

    ``gas_pstar`` selects the pressure driving gas discharge through the valve:
    ``"absolute"`` uses p_v, ``"gauge"`` uses p_v - p_b (liquids always use the
    gauge form).
    """

    fluid: FluidModel
    ambient: Ambient = field(default_factory=Ambient)
    geom: ValveGeometry = field(default_factory=ValveGeometry)
    aeff: EffectiveAreaModel = field(default_factory=EffectiveAreaModel)
    L: float = 1.0
    lam: float = 0.0
    V: float = 1.0
    gas_pstar: Literal["absolute", "gauge"] = "absolute"
    inlet_loss: bool = True

    def __post_init__(self):
        if not (self.L > 0 and self.V > 0 and self.lam >= 0):
            raise DomainError("need L > 0, V > 0 and lam >= 0")
        if self.gas_pstar not in ("absolute", "gauge"):
            raise DomainError(f"gas_pstar must be 'absolute' or 'gauge', got {self.gas_pstar!r}")
        self.aeff.validate(self.geom)
        g = self.geom
        x_pre = g.x_pre
        if x_pre is None:
            # gauge convention: p_set = p_b + k x_pre / A0
            x_pre = (self.ambient.p_set - self.ambient.p_b) * g.A0 / g.k
        cache = {
            "A0": g.A0,
            "rho": self.fluid.rho,
            "a": sonic_speed(self.fluid),
            "C_kappa": choking_factor(self.fluid),
            "x_pre": x_pre,
            "p_b": self.ambient.p_b,
            "p_set": self.ambient.p_set,
            "gauge": (not self.fluid.is_gas) or self.gas_pstar == "gauge",
        }
        for k, v in cache.items():
            object.__setattr__(self, "_" + k, v)

    # -- cached scalars ---------------------------------------------------
    A0 = property(lambda self: self._A0)
    rho = property(lambda self: self._rho)
    a = property(lambda self: self._a)
    C_kappa = property(lambda self: self._C_kappa)
    x_pre = property(lambda self: self._x_pre)
    p_b = property(lambda self: self._p_b)
    p_set = property(lambda self: self._p_set)
    gauge_discharge = property(lambda self: self._gauge)

    @property
    def x_stop(self) -> float:
        return self.geom.x_stop

    def replace(self, **changes) -> "ValveSystem":
        return dataclasses.replace(self, **changes)

    def with_geometry(self, **changes) -> "ValveSystem":
        return self.replace(geom=dataclasses.replace(self.geom, **changes))

    # -- valve forces -----------------------------------------------------
    def aeff_ratio(self, x: float) -> float:
        return self.aeff.ratio(self.geom, x)

    def effective_area(self, x: float) -> float:
        return self._A0 * self.aeff.ratio(self.geom, x)

    def effective_area_slope(self, x: float) -> float:
        return self._A0 * self.aeff.ratio_derivative(self.geom, x)

    def spring_force(self, x: float) -> float:
        return self.geom.k * (self._x_pre + x)

    def accel(self, x: float, xdot: float, p_v: float) -> float:
        """Unconstrained valve acceleration for valve-inlet pressure p_v."""
        g = self.geom
        return ((p_v - self._p_b) * self.effective_area(x) - g.c * xdot - g.k * (self._x_pre + x)) / g.m

    # -- discharge through the valve -------------------------------------
    def discharge_coefficient(self, x: float) -> float:
        return self.geom.cd(x / self.geom.x_max)

    def beta(self, x: float) -> float:
        """v_L = beta(x) * sqrt(p*)."""
        if x <= 0.0:
            return 0.0
        cd = self.discharge_coefficient(x)
        return cd * self._C_kappa * flow_through_area(self.geom, x) / (self._A0 * math.sqrt(self._rho))

    def beta_slope(self, x: float) -> float:
        g = self.geom
        frac = x / g.x_max
        cd, dcd = g.cd(frac), g.cd.slope(frac) / g.x_max
        aft, daft = flow_through_area(g, x), flow_through_area_derivative(g, x)
        return self._C_kappa * (dcd * aft + cd * daft) / (self._A0 * math.sqrt(self._rho))

    def pstar(self, p_v: float) -> float:
        return p_v - self._p_b if self._gauge else p_v

    def pstar_offset(self) -> float:
        """p_v - p* (p_b for gauge discharge, 0 otherwise)."""
        return self._p_b if self._gauge else 0.0

    def valve_end_velocity(self, x: float, p_v: float) -> float:
        """Pipe velocity at the valve; zero when the driving pressure is not positive."""
        ps = self.pstar(p_v)
        if x <= 0.0 or ps <= 0.0:
            return 0.0
        return self.beta(x) * math.sqrt(ps)

    def valve_mass_flow(self, x: float, p_v: float) -> float:
        return self._rho * self._A0 * self.valve_end_velocity(x, p_v)

    # -- pipe entry -------------------------------------------------------
    def entry_pressure(self, p_r: float, v0: float) -> float:
        """Pressure at the pipe entry; the entry loss acts only on inflow."""
        if not self.inlet_loss or v0 <= 0.0:
            return p_r
        return inlet_pressure(self.fluid, p_r, v0)

    def entry_pressure_partials(self, p_r: float, v0: float) -> tuple[float, float]:
        if not self.inlet_loss or v0 <= 0.0:
            return 1.0, 0.0
        return inlet_pressure_partials(self.fluid, p_r, v0)

    def chi(self, p_r: float, v0: float) -> float:
        if not self.inlet_loss or v0 <= 0.0:
            return 0.0
        return inlet_loss_chi(self.fluid, p_r, v0)

    def capacity(self) -> float:
        """Mass flow through the valve at the stop lift and 10 % overpressure."""
        return self.valve_mass_flow(self.geom.x_stop, 1.1 * self._p_set)

    def mdot_for_q(self, q: float) -> float:
        return q * self.capacity()
