"""Coupled valve, inlet pipe and tank dynamics.

The pipe is discretised on ``n_nodes`` equally spaced nodes (node 0 at the
tank, the last node at the valve).  Liquids use the method of characteristics
with ``dt = dxi/a``; gases use a two-step Lax-Wendroff scheme with a CFL
limited step.  The pipe step is the master step: the characteristic invariants
reaching both ends are frozen from the old arrays and the valve and tank ODEs
are sub-integrated across the step with an adaptive Cash-Karp pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, FlowReversal, StepSizeError
from .system import ValveSystem

Contact = Literal["free", "seat-contact", "stop-contact"]
EVENT_KINDS = (
    "seat-impact",
    "stop-impact",
    "stick-seat",
    "stick-stop",
    "release",
    "valve-open",
    "blowdown-close",
    "flow-reversal",
)


# ---------------------------------------------------------------------------
# state containers


@dataclass
class PipeGrid:
    L: float
    n_nodes: int
    p: np.ndarray
    v: np.ndarray
    lam: float = 0.0
    D: float = 0.03205

    def __post_init__(self):
        if self.n_nodes < 8:
            raise DomainError("the pipe grid needs at least 8 nodes")
        self.p = np.asarray(self.p, float)
        self.v = np.asarray(self.v, float)
        if self.p.shape != (self.n_nodes,) or self.v.shape != (self.n_nodes,):
            raise DomainError("pressure and velocity arrays must have n_nodes entries")

    @property
    def dxi(self) -> float:
        return self.L / (self.n_nodes - 1)

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n_nodes)

    @classmethod
    def uniform(cls, L, n_nodes, p, v=0.0, lam=0.0, D=0.03205) -> "PipeGrid":
        return cls(L, n_nodes, np.full(n_nodes, float(p)), np.full(n_nodes, float(v)), lam, D)

    def copy(self) -> "PipeGrid":
        return replace(self, p=self.p.copy(), v=self.v.copy())


@dataclass
class ValveState:
    x: float = 0.0
    xdot: float = 0.0
    contact: Contact = "seat-contact"


@dataclass
class TankState:
    p_r: float
    mdot_in: float = 0.0


@dataclass
class SystemState:
    t: float
    valve: ValveState
    tank: TankState
    pipe: PipeGrid


@dataclass(frozen=True)
class SimEvent:
    t: float
    kind: str
    impact_speed: float = float("nan")
    p_r: float = float("nan")


@dataclass(frozen=True)
class BoundaryValues:
    """New values at the tank end (p0, v0) and the valve end (pL, vL)."""

    p0: float
    v0: float
    pL: float
    vL: float


@dataclass(frozen=True)
class InflowSchedule:
    """Prescribed tank inflow in kg/s.

    ``ramp-hold`` rises linearly from ``base`` to ``peak`` over ``t_ramp`` and
    holds; ``ramp-up-ramp-down`` additionally holds for ``t_hold`` and returns
    to ``base`` over ``t_down``.
    """

    kind: Literal["constant", "ramp-hold", "ramp-up-ramp-down"] = "constant"
    peak: float = 0.0
    base: float = 0.0
    t_ramp: float = 0.0
    t_hold: float = 0.0
    t_down: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "ramp-hold", "ramp-up-ramp-down"):
            raise DomainError(f"unknown inflow schedule {self.kind!r}")
        if min(self.t_ramp, self.t_hold, self.t_down) < 0:
            raise DomainError("schedule durations must be non-negative")
        if self.peak < 0 or self.base < 0:
            raise DomainError("inflow must be non-negative")

    @classmethod
    def constant(cls, mdot: float) -> "InflowSchedule":
        return cls("constant", peak=mdot)

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return self.peak
        up = self.t_ramp
        if t < up:
            return self.base + (self.peak - self.base) * t / up
        if self.kind == "ramp-hold" or t < up + self.t_hold:
            return self.peak
        t2 = t - up - self.t_hold
        if t2 < self.t_down:
            return self.peak + (self.base - self.peak) * t2 / self.t_down
        return self.base


@dataclass(frozen=True)
class RunSettings:
    t_end: float = 1.0
    sample_dt: float = 1e-4
    n_nodes: int = 101
    scheme: Literal["auto", "moc", "lw"] = "auto"
    rtol: float = 1e-8
    v_threshold: float = 1e-4
    cfl: float = 0.9
    event_tol: float = 1e-10
    convection: bool = True
    settle_window: float = 0.25

    def __post_init__(self):
        if not (self.t_end > 0 and self.sample_dt > 0):
            raise DomainError("t_end and sample_dt must be positive")
        if self.n_nodes < 8:
            raise DomainError("n_nodes must be at least 8")
        if self.scheme not in ("auto", "moc", "lw"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.cfl <= 1:
            raise DomainError("cfl must lie in (0, 1]")
        if not (self.rtol > 0 and self.v_threshold >= 0 and self.event_tol > 0):
            raise DomainError("tolerances must be positive")
        if not 0 < self.settle_window <= 1:
            raise DomainError("settle_window is a fraction of the horizon in (0, 1]")


# ---------------------------------------------------------------------------
# valve, tank and boundary relations


def valve_accel(system: ValveSystem, x: float, xdot: float, p_v: float) -> float:
    """Free acceleration of the valve for valve-inlet pressure p_v."""
    return system.accel(x, xdot, p_v)


def valve_end_velocity(system: ValveSystem, x: float, p_v: float) -> float:
    return system.valve_end_velocity(x, p_v)


def tank_rhs(system: ValveSystem, mdot_in: float, v0: float) -> float:
    """d p_r / dt for inflow mdot_in and pipe-entry velocity v0."""
    return system.a ** 2 / system.V * (mdot_in - system.A0 * system.rho * v0)


def valve_end_state(system: ValveSystem, x: float, K_plus: float) -> tuple[float, float, bool]:
    """Close the valve end: p_v + rho a v_L = K_plus with the discharge law.

    Returns (p_v, v_L, clamped); ``clamped`` is True when an open valve sees no
    positive driving pressure and the outflow is set to zero.
    """
    b = system.beta(x)
    off = system.pstar_offset()
    c = K_plus - off
    if b == 0.0:
        return K_plus, 0.0, False
    if c <= 0.0:
        return K_plus, 0.0, True
    rab = system.rho * system.a * b
    s = 2.0 * c / (rab + math.sqrt(rab * rab + 4.0 * c))
    return off + s * s, b * s, False


def tank_end_state(system: ValveSystem, p_r: float, K_minus: float, v_guess: Optional[float] = None) -> tuple[float, float]:
    """Close the tank end: p0 - rho a v0 = K_minus with p0 from the entry loss.

    ``v_guess`` warm-starts the Newton iteration used for gases.
    """
    rho, a = system.rho, system.a
    rhoa = rho * a
    dp = p_r - K_minus
    if dp <= 0.0 or not system.inlet_loss:
        return p_r, dp / rhoa
    if not system.fluid.is_gas:
        v0 = 2.0 * dp / (rhoa + math.sqrt(rhoa * rhoa + 2.0 * rho * dp))
        return p_r - 0.5 * rho * v0 * v0, v0
    fl = system.fluid
    v_lim = math.sqrt(2.0 * fl.cp * fl.T)
    n = fl.kappa / (fl.kappa - 1.0)
    # g(v) = p_r (1 - v^2/v_lim^2)^n - rho a v - K_minus is decreasing and
    # concave, so Newton from the loss-free root converges monotonically
    v = min(dp / rhoa, 0.999999 * v_lim)
    if v_guess is not None and 0.0 < v_guess < v:
        v = v_guess
    for _ in range(60):
        s = 1.0 - (v / v_lim) ** 2
        p0 = p_r * s ** n
        g = p0 - rhoa * v - K_minus
        if g > 0.0 and v >= 0.999999 * v_lim:
            raise FlowReversal("pipe-entry velocity exceeds the stagnation limit")
        dg = -p_r * n * s ** (n - 1.0) * 2.0 * v / v_lim ** 2 - rhoa
        step = g / dg
        v -= step
        if abs(step) <= 1e-14 * max(abs(v), 1.0):
            break
    s = 1.0 - (v / v_lim) ** 2
    return p_r * s ** n, v


def characteristic_invariants_moc(pipe: PipeGrid, rho: float, a: float, dt: float) -> tuple[float, float]:
    """(K_minus at the tank end, K_plus at the valve end) for MOC stepping."""
    f = pipe.lam / (2.0 * pipe.D)
    rhoa = rho * a
    vA, vB = float(pipe.v[-2]), float(pipe.v[1])
    Kp = pipe.p[-2] + rhoa * vA - rhoa * dt * f * vA * abs(vA)
    Km = pipe.p[1] - rhoa * vB + rhoa * dt * f * vB * abs(vB)
    return float(Km), float(Kp)


def characteristic_invariants_lw(pipe: PipeGrid, rho: float, a: float, dt: float) -> tuple[float, float]:
    """As :func:`characteristic_invariants_moc` with feet interpolated on the grid."""
    f = pipe.lam / (2.0 * pipe.D)
    rhoa = rho * a
    dx = pipe.dxi
    p, v = pipe.p.tolist(), pipe.v.tolist()
    # C+ foot inside the last cell
    w = min(max((v[-1] + a) * dt / dx, 0.0), 1.0)
    pf, vf = (1 - w) * p[-1] + w * p[-2], (1 - w) * v[-1] + w * v[-2]
    Kp = pf + rhoa * vf - rhoa * dt * f * vf * abs(vf)
    w = min(max((a - v[0]) * dt / dx, 0.0), 1.0)
    pf, vf = (1 - w) * p[0] + w * p[1], (1 - w) * v[0] + w * v[1]
    Km = pf - rhoa * vf + rhoa * dt * f * vf * abs(vf)
    return float(Km), float(Kp)


def _check_pressure(p: np.ndarray) -> None:
    if not np.all(np.isfinite(p)) or np.min(p) <= 0.0:
        raise FlowReversal("non-positive or non-finite pipe pressure")


def pipe_step_moc(pipe: PipeGrid, bc: BoundaryValues, dt: float, rho: float, a: float) -> PipeGrid:
    """Advance the pipe by one characteristic step dt = dxi/a."""
    if abs(dt * a - pipe.dxi) > 1e-9 * pipe.dxi:
        raise StepSizeError("method of characteristics needs dt = dxi/a", pipe.dxi / a)
    p, v = pipe.p, pipe.v
    f = pipe.lam / (2.0 * pipe.D)
    rhoa = rho * a
    pA, pB, vA, vB = p[:-2], p[2:], v[:-2], v[2:]
    fA, fB = f * vA * np.abs(vA), f * vB * np.abs(vB)
    pn = np.empty_like(p)
    vn = np.empty_like(v)
    pn[1:-1] = 0.5 * ((pA + pB) + rhoa * (vA - vB) - rhoa * dt * (fA - fB))
    vn[1:-1] = 0.5 * ((vA + vB) + (pA - pB) / rhoa - dt * (fA + fB))
    pn[0], vn[0], pn[-1], vn[-1] = bc.p0, bc.v0, bc.pL, bc.vL
    _check_pressure(pn)
    return replace(pipe, p=pn, v=vn)


def lw_stable_step(pipe: PipeGrid, a: float, cfl: float = 0.9) -> float:
    return cfl * pipe.dxi / (a + float(np.max(np.abs(pipe.v))))


def pipe_step_lw(
    pipe: PipeGrid,
    bc: BoundaryValues,
    dt: float,
    rho: float,
    a: float,
    cfl: float = 0.9,
    convection: bool = True,
) -> PipeGrid:
    """Advance the pipe by a two-step (Richtmyer) Lax-Wendroff step."""
    dt_max = lw_stable_step(pipe, a, cfl)
    if dt > dt_max * (1 + 1e-12):
        raise StepSizeError(f"step {dt:.3e} exceeds the CFL limit {dt_max:.3e}", dt_max)
    p, v = pipe.p, pipe.v
    dx = pipe.dxi
    f = pipe.lam / (2.0 * pipe.D)
    rho_a2 = rho * a * a
    cv = 1.0 if convection else 0.0
    r = dt / dx
    F = 0.5 * cv * v * v + p / rho
    pm, vm = 0.5 * (p[1:] + p[:-1]), 0.5 * (v[1:] + v[:-1])
    ph = pm - 0.5 * r * (cv * vm * (p[1:] - p[:-1]) + rho_a2 * (v[1:] - v[:-1]))
    vh = vm - 0.5 * r * (F[1:] - F[:-1]) - 0.5 * dt * f * vm * np.abs(vm)
    Fh = 0.5 * cv * vh * vh + ph / rho
    vc = 0.5 * (vh[1:] + vh[:-1])
    pn = np.empty_like(p)
    vn = np.empty_like(v)
    pn[1:-1] = p[1:-1] - r * (cv * vc * (ph[1:] - ph[:-1]) + rho_a2 * (vh[1:] - vh[:-1]))
    vn[1:-1] = v[1:-1] - r * (Fh[1:] - Fh[:-1]) - dt * f * vc * np.abs(vc)
    pn[0], vn[0], pn[-1], vn[-1] = bc.p0, bc.v0, bc.pL, bc.vL
    _check_pressure(pn)
    return replace(pipe, p=pn, v=vn)


# ---------------------------------------------------------------------------
# impacts and sustained contact


def handle_impact(valve: ValveState, boundary: Literal["seat", "stop"], geom) -> ValveState:
    """Newtonian restitution at the seat or the stop."""
    if boundary == "seat":
        if not (valve.x <= 0.0 and valve.xdot < 0.0):
            raise RuntimeError("seat impact requires x = 0 and a closing velocity")
        return ValveState(0.0, -geom.e0 * valve.xdot, "free")
    if boundary == "stop":
        if not (valve.x >= geom.x_stop and valve.xdot > 0.0):
            raise RuntimeError("stop impact requires x = x_stop and an opening velocity")
        return ValveState(geom.x_stop, -geom.e1 * valve.xdot, "free")
    raise ValueError(f"unknown boundary {boundary!r}")


def coalesce_chatter(valve: ValveState, boundary: Literal["seat", "stop"], v_threshold: float, geom) -> ValveState:
    """Pin the valve to the boundary when the impact speed is below threshold.

    Above the threshold the restitution law applies instead.
    """
    if abs(valve.xdot) < v_threshold:
        if boundary == "seat":
            return ValveState(0.0, 0.0, "seat-contact")
        return ValveState(geom.x_stop, 0.0, "stop-contact")
    return handle_impact(valve, boundary, geom)


def contact_release_check(system: ValveSystem, valve: ValveState, p_v: float) -> bool:
    """True when the free acceleration points strictly away from the contact."""
    if valve.contact == "free":
        raise ValueError("release check needs a valve in contact")
    acc = system.accel(valve.x, 0.0, p_v)
    return acc > 0.0 if valve.contact == "seat-contact" else acc < 0.0


# ---------------------------------------------------------------------------
# embedded Runge-Kutta pair

_CK_C = (0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8)
_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = (37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771)
_CK_B4 = (2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4)


def cash_karp_step(f: Callable, t: float, y: np.ndarray, h: float):
    """One Cash-Karp step; returns (4th-order solution, error estimate)."""
    ks = []
    for i in range(6):
        yi = y.copy()
        for aij, kj in zip(_CK_A[i], ks):
            yi += h * aij * kj
        ks.append(f(t + _CK_C[i] * h, yi))
    y4 = y.copy()
    y5 = y.copy()
    for b4, b5, k in zip(_CK_B4, _CK_B5, ks):
        y4 += h * b4 * k
        y5 += h * b5 * k
    return y4, y5 - y4


def _hermite(x0, v0, x1, v1, h, s):
    u = s / h
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u * u * (3 - 2 * u)
    h11 = u * u * (u - 1)
    return h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1


def _hermite_extremum(x0, v0, x1, v1, h) -> Optional[float]:
    """Interior time where the Hermite cubic has zero slope (velocity sign change)."""
    # dx/ds = v0 + (6d - 4v0 - 2v1) u + (3v0 + 3v1 - 6d) u^2 with u = s/h
    d = (x1 - x0) / h
    c0, c1, c2 = v0, 6 * d - 4 * v0 - 2 * v1, 3 * v0 + 3 * v1 - 6 * d
    # roots of c2 u^2 + c1 u + c0 in (0, 1)
    if abs(c2) < 1e-300:
        roots = [-c0 / c1] if c1 != 0 else []
    else:
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            return None
        sq = math.sqrt(disc)
        q = -0.5 * (c1 + math.copysign(sq, c1))
        roots = [q / c2] + ([c0 / q] if q != 0 else [])
    inside = sorted(u for u in roots if 0.0 < u < 1.0)
    return inside[0] * h if inside else None


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SimResult:
    samples: dict
    events: list
    summary: dict
    section: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    final_state: Optional[SystemState] = None

    @property
    def status(self) -> str:
        return self.summary["status"]


TRAJECTORY_COLUMNS = ("t", "x", "xdot", "p_r", "p_v", "v0", "vL", "contact")
_CONTACT_CODE = {"free": 0, "seat-contact": 1, "stop-contact": 2}


def initial_state(system: ValveSystem, n_nodes: int = 101, p_r: Optional[float] = None) -> SystemState:
    """Closed valve, fluid at rest and uniform pressure (p_set by default)."""
    p = system.p_set if p_r is None else p_r
    pipe = PipeGrid.uniform(system.L, n_nodes, p, 0.0, system.lam, system.geom.D)
    return SystemState(0.0, ValveState(0.0, 0.0, "seat-contact"), TankState(p), pipe)


class _Integrator:
    """Valve and tank ODEs with impacts, across one frozen pipe step."""

    def __init__(self, system: ValveSystem, schedule: InflowSchedule, run: RunSettings):
        self.sys = system
        self.sched = schedule
        self.run = run
        g = system.geom
        self.x_stop = g.x_stop
        self.scale = np.array([g.x_stop, 1.0, system.p_set])
        self.a2V = system.a ** 2 / system.V
        self.rhoA0 = system.rho * system.A0
        self.h = None
        self.events: list[SimEvent] = []
        self.section: list[tuple[float, float]] = []
        self.clamped = False
        self.opened = False
        self.Km = self.Kp = 0.0
        self.v0_guess = None

    # right-hand sides with K_minus and K_plus frozen
    def _free(self, t, y):
        pv, _, _ = valve_end_state(self.sys, float(y[0]), self.Kp)
        _, v0 = tank_end_state(self.sys, float(y[2]), self.Km, self.v0_guess)
        self.v0_guess = v0
        return np.array([y[1], self.sys.accel(y[0], y[1], pv), self.a2V * (self.sched(t) - self.rhoA0 * v0)])

    def _stuck(self, t, y):
        _, v0 = tank_end_state(self.sys, float(y[2]), self.Km, self.v0_guess)
        self.v0_guess = v0
        return np.array([0.0, 0.0, self.a2V * (self.sched(t) - self.rhoA0 * v0)])

    def _err_norm(self, err):
        return float(np.max(np.abs(err) / (self.run.rtol * self.scale)))

    def _log(self, t, kind, speed=float("nan"), p_r=float("nan")):
        self.events.append(SimEvent(t, kind, speed, p_r))

    def _boundary_accel(self, contact):
        x = 0.0 if contact == "seat-contact" else self.x_stop
        pv, _, _ = valve_end_state(self.sys, x, self.Kp)
        return self.sys.accel(x, 0.0, pv)

    def _maybe_release(self, t, valve: ValveState, p_r):
        acc = self._boundary_accel(valve.contact)
        if valve.contact == "seat-contact" and acc > 0.0:
            self._log(t, "valve-open", p_r=p_r)
            self.opened = True
            valve.contact = "free"
        elif valve.contact == "stop-contact" and acc < 0.0:
            self._log(t, "release", p_r=p_r)
            valve.contact = "free"

    def advance(self, t0: float, dt: float, valve: ValveState, p_r: float, Km: float, Kp: float) -> float:
        """Integrate over [t0, t0 + dt]; updates ``valve`` in place, returns p_r."""
        self.Km, self.Kp = Km, Kp
        if valve.contact != "free":
            # with frozen K_plus the contact force is constant across the step
            self._maybe_release(t0, valve, p_r)
        tau, t1 = t0, t0 + dt
        y = np.array([valve.x, valve.xdot, p_r])
        h = dt if self.h is None else min(self.h, dt)
        while t1 - tau > 1e-15 * max(1.0, t1):
            h = min(h, t1 - tau)
            free = valve.contact == "free"
            rhs = self._free if free else self._stuck
            y4, err = cash_karp_step(rhs, tau, y, h)
            en = self._err_norm(err)
            if en > 1.0:
                h *= max(0.2, 0.9 * en ** -0.25)
                continue
            h_next = h * (5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2)))
            if free:
                hit = self._crossing(tau, y, y4, h)
                if hit is not None:
                    s, boundary = hit
                    y = self._impact(tau, y, s, boundary, valve)
                    tau += s
                    h = max(h_next, 1e-12)
                    continue
                self._section(tau, y, y4, h)
            y = y4
            tau += h
            if free:
                valve.x, valve.xdot = y[0], y[1]
            h = h_next
        self.h = h
        p_r = float(y[2])
        if valve.contact == "free":
            valve.x = min(max(float(y[0]), 0.0), self.x_stop)
            valve.xdot = float(y[1])
        return p_r

    def _crossing(self, tau, y, y4, h):
        """(time offset bracket end, boundary) of the first boundary crossing, if any."""
        x0, v0, x1, v1 = y[0], y[1], y4[0], y4[1]
        if x1 > self.x_stop:
            return self._locate(tau, y, h, "stop")
        if x1 < 0.0:
            return self._locate(tau, y, h, "seat")
        s_ext = _hermite_extremum(x0, v0, x1, v1, h)
        if s_ext is None:
            return None
        xe = _hermite(x0, v0, x1, v1, h, s_ext)
        if xe > self.x_stop or xe < 0.0:
            boundary = "stop" if xe > self.x_stop else "seat"
            ym, _ = cash_karp_step(self._free, tau, y, s_ext)
            if (boundary == "stop" and ym[0] > self.x_stop) or (boundary == "seat" and ym[0] < 0.0):
                return self._locate(tau, y, s_ext, boundary)
        return None

    def _locate(self, tau, y, s_hi, boundary):
        xb = self.x_stop if boundary == "stop" else 0.0
        g = lambda s: cash_karp_step(self._free, tau, y, s)[0][0] - xb
        g0 = y[0] - xb
        if g0 == 0.0:
            return 0.0, boundary
        tol = self.run.event_tol * self.x_stop
        s = brentq(g, 0.0, s_hi, xtol=1e-16, rtol=1e-15, maxiter=200)
        # brentq stops on the bracket width; tighten on the residual if needed
        lo, hi = 0.0, s_hi
        for _ in range(100):
            gs = g(s)
            if abs(gs) < tol:
                break
            if (gs > 0) == (g0 > 0):
                lo = s
            else:
                hi = s
            s = 0.5 * (lo + hi)
        return s, boundary

    def _impact(self, tau, y, s, boundary, valve: ValveState):
        if s > 0.0:
            ys, _ = cash_karp_step(self._free, tau, y, s)
        else:
            ys = y.copy()
        t_hit = tau + s
        xb = self.x_stop if boundary == "stop" else 0.0
        speed = float(ys[1])
        pre = ValveState(xb, speed, "free")
        if boundary == "stop" and speed > 0.0:
            self.section.append((t_hit, xb))
        if (boundary == "stop" and speed <= 0.0) or (boundary == "seat" and speed >= 0.0):
            # touched while already turning back: treat as a zero-speed contact
            speed = 0.0
            pre = ValveState(xb, 0.0, "free")
        if abs(speed) < self.run.v_threshold:
            new = ValveState(xb, 0.0, "seat-contact" if boundary == "seat" else "stop-contact")
            kind = "stick-seat" if boundary == "seat" else "stick-stop"
            self._log(t_hit, kind, abs(speed), float(ys[2]))
            if boundary == "seat" and self.opened:
                self._log(t_hit, "blowdown-close", p_r=float(ys[2]))
                self.opened = False
        else:
            new = handle_impact(pre, boundary, self.sys.geom)
            self._log(t_hit, f"{boundary}-impact", abs(speed), float(ys[2]))
        valve.x, valve.xdot, valve.contact = new.x, new.xdot, new.contact
        if valve.contact != "free":
            self._maybe_release(t_hit, valve, float(ys[2]))
        return np.array([valve.x, valve.xdot, ys[2]])

    def _section(self, tau, y, y4, h):
        if y[1] > 0.0 >= y4[1]:
            s = _hermite_extremum(y[0], y[1], y4[0], y4[1], h)
            if s is None:
                s = h
            self.section.append((tau + s, _hermite(y[0], y[1], y4[0], y4[1], h, s)))


def _resolve_scheme(system: ValveSystem, run: RunSettings) -> str:
    if run.scheme != "auto":
        return run.scheme
    return "lw" if system.fluid.is_gas else "moc"


def simulate(
    system: ValveSystem,
    schedule: InflowSchedule,
    run: RunSettings = RunSettings(),
    initial: Optional[SystemState] = None,
) -> SimResult:
    """Time-integrate the coupled model from ``initial`` (closed valve at p_set by default)."""
    state = initial if initial is not None else initial_state(system, run.n_nodes)
    pipe = state.pipe.copy()
    valve = ValveState(state.valve.x, state.valve.xdot, state.valve.contact)
    p_r = state.tank.p_r
    t = state.t
    scheme = _resolve_scheme(system, run)
    rho, a = system.rho, system.a
    ode = _Integrator(system, schedule, run)
    if valve.contact == "free" or valve.x > 0:
        ode.opened = True

    rows = []
    next_sample = t
    x_min = x_max = valve.x
    status = "completed"
    n_steps = 0

    def record():
        rows.append((t, valve.x, valve.xdot, p_r, pipe.p[-1], pipe.v[0], pipe.v[-1], _CONTACT_CODE[valve.contact]))

    record()
    next_sample += run.sample_dt
    t_end = t + run.t_end
    while t < t_end - 1e-12 * t_end:
        if scheme == "moc":
            dt = pipe.dxi / a
            Km, Kp = characteristic_invariants_moc(pipe, rho, a, dt)
        else:
            dt = lw_stable_step(pipe, a, run.cfl)
            Km, Kp = characteristic_invariants_lw(pipe, rho, a, dt)
        try:
            p_r = ode.advance(t, dt, valve, p_r, Km, Kp)
            if not (p_r > 0 and math.isfinite(p_r)):
                raise FlowReversal("tank pressure left the valid range")
            pv, vL, clamped = valve_end_state(system, valve.x, Kp)
            if clamped and not ode.clamped:
                ode._log(t + dt, "flow-reversal", p_r=p_r)
            ode.clamped = clamped
            p0, v0 = tank_end_state(system, p_r, Km)
            bc = BoundaryValues(p0, v0, pv, vL)
            if scheme == "moc":
                pipe = pipe_step_moc(pipe, bc, dt, rho, a)
            else:
                pipe = pipe_step_lw(pipe, bc, dt, rho, a, run.cfl, run.convection)
        except (FlowReversal, DomainError):
            status = "flow-reversal"
            ode._log(t + dt, "flow-reversal", p_r=p_r)
            t += dt
            break
        t += dt
        n_steps += 1
        x_min = min(x_min, valve.x)
        x_max = max(x_max, valve.x)
        if t >= next_sample - 1e-12:
            record()
            next_sample += run.sample_dt * max(1, math.floor((t - next_sample) / run.sample_dt) + 1)

    arr = np.array(rows, float) if rows else np.zeros((0, len(TRAJECTORY_COLUMNS)))
    samples = {name: arr[:, i] for i, name in enumerate(TRAJECTORY_COLUMNS)}
    events = sorted(ode.events, key=lambda e: e.t)
    final = SystemState(t, ValveState(valve.x, valve.xdot, valve.contact), TankState(p_r, schedule(t)), pipe)
    summary = summarize(samples, events, status, system, run, t_start=state.t, t_final=t)
    summary.update(scheme=scheme, n_steps=n_steps, x_min=x_min, x_max=x_max)
    section = np.array(ode.section, float).reshape(-1, 2)
    return SimResult(samples, events, summary, section, final)


def summarize(samples, events, status, system: ValveSystem, run: RunSettings, t_start=0.0, t_final=None) -> dict:
    t = samples["t"]
    x = samples["x"]
    t_final = float(t[-1]) if t_final is None else t_final
    impacts = [e for e in events if e.kind in ("seat-impact", "stop-impact")]
    closes = [e.p_r for e in events if e.kind == "blowdown-close"]
    releases = [e.p_r for e in events if e.kind == "release"]
    horizon = t_final - t_start
    w0 = t_final - run.settle_window * horizon
    tail = x[t >= w0]
    late_impacts = sum(1 for e in impacts if e.t >= w0)
    settled = (
        status == "completed"
        and tail.size > 1
        and float(np.ptp(tail)) < 0.01 * system.x_stop
        and late_impacts == 0
    )
    contact_code = int(samples["contact"][-1]) if samples["contact"].size else 0
    final_contact = {v: k for k, v in _CONTACT_CODE.items()}[contact_code]
    return {
        "status": status,
        "t_final": t_final,
        "x_min": float(np.min(x)) if x.size else 0.0,
        "x_max": float(np.max(x)) if x.size else 0.0,
        "impact_count": len(impacts),
        "seat_impacts": sum(1 for e in impacts if e.kind == "seat-impact"),
        "stop_impacts": sum(1 for e in impacts if e.kind == "stop-impact"),
        "final_contact": final_contact,
        "blowdown_close_pressure": closes[0] if closes else None,
        "stop_release_pressure": releases[0] if releases else None,
        "settled": bool(settled),
        "coupling": "pipe step is the master step; valve and tank sub-integrated",
    }
