"""Steady-flow equilibria of the valve and the lift-pressure characteristic.

Equilibria are parameterised by the lift ``x_e``: the force balance fixes the
valve pressure, the discharge law fixes the flow and the entry loss fixes the
tank pressure P(x_e).  For gas service the discharge law uses the gauge
pressure difference by default; ``exact_gas=True`` keeps the system's own
discharge convention instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .csvio import fmt, write_csv
from .errors import DomainError
from .geometry import flow_through_area
from .system import ValveSystem


@dataclass(frozen=True)
class EquilibriumPoint:
    x_e: float
    p_v: float
    p_r: float
    mdot: float
    v_L: float


@dataclass(frozen=True)
class FoldPoint:
    x_fold: float
    p_fold: float


@dataclass
class CharacteristicCurve:
    samples: list
    folds: list
    system: ValveSystem
    exact_gas: bool = False
    k_eff: Optional[np.ndarray] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    @property
    def x(self) -> np.ndarray:
        return self.column("x_e")

    @property
    def p_r(self) -> np.ndarray:
        return self.column("p_r")


def equilibrium_system(system: ValveSystem, exact_gas: bool = False) -> ValveSystem:
    """The system whose discharge law the equilibrium relations use."""
    if system.fluid.is_gas and not exact_gas and system.gas_pstar != "gauge":
        return system.replace(gas_pstar="gauge")
    return system


def _tank_pressure(system: ValveSystem, p_v: float, v_L: float, rtol: float = 1e-12) -> float:
    """Damped fixed point of p_r = p_v / (1 - chi(p_r, v_L))."""
    p = p_v
    omega = 1.0
    prev = math.inf
    for _ in range(500):
        chi = system.chi(p, v_L)
        if chi >= 1.0:
            raise DomainError("entry loss consumes the whole tank pressure")
        new = p_v / (1.0 - chi)
        step = new - p
        if abs(step) >= abs(prev):
            omega *= 0.5
        prev = step
        p += omega * step
        if abs(step) <= rtol * abs(p):
            return p
    raise DomainError("tank pressure iteration did not converge")


def equilibrium_for_lift(system: ValveSystem, x_e: float, exact_gas: bool = False) -> EquilibriumPoint:
    """Dynamic equilibrium with the valve at lift x_e and the pipe in steady flow."""
    s = equilibrium_system(system, exact_gas)
    if not 0.0 < x_e <= s.x_stop * (1 + 1e-12):
        raise DomainError(f"equilibrium lift {x_e} outside (0, x_stop]")
    A_eff = s.effective_area(x_e)
    if not A_eff > 0:
        raise DomainError("effective area is not positive at this lift")
    p_v = s.p_b + s.spring_force(x_e) / A_eff
    v_L = s.valve_end_velocity(x_e, p_v)
    mdot = s.rho * s.A0 * v_L
    p_r = _tank_pressure(s, p_v, v_L)
    return EquilibriumPoint(x_e, p_v, p_r, mdot, v_L)


def equilibrium_residuals(system: ValveSystem, pt: EquilibriumPoint, exact_gas: bool = False) -> tuple:
    """Relative residuals of the discharge law, force balance and entry loss."""
    s = equilibrium_system(system, exact_gas)
    x = pt.x_e
    cd = s.discharge_coefficient(x)
    aft = flow_through_area(s.geom, x)
    # discharge law written for the pressure: p* = mdot^2 / (rho (Cd Ck Aft)^2)
    r1 = (s.pstar(pt.p_v) - pt.mdot ** 2 / (s.rho * (cd * s.C_kappa * aft) ** 2)) / s.p_set
    F = s.spring_force(x)
    r2 = ((pt.p_v - s.p_b) * s.effective_area(x) - F) / F
    v0 = pt.mdot / (s.rho * s.A0)
    r3 = (pt.p_r * (1.0 - s.chi(pt.p_r, v0)) - pt.p_v) / pt.p_v
    return r1, r2, r3


def tank_pressure_curve(system: ValveSystem, x_e: float, exact_gas: bool = False) -> float:
    return equilibrium_for_lift(system, x_e, exact_gas).p_r


def _dP(system, x, h, exact_gas):
    xs = system.x_stop
    lo, hi = max(x - h, 0.5 * h), min(x + h, xs)
    return (tank_pressure_curve(system, hi, exact_gas) - tank_pressure_curve(system, lo, exact_gas)) / (hi - lo)


def characteristic_curve(
    system: ValveSystem, n_samples: int = 256, exact_gas: bool = False, with_stiffness: bool = True
) -> CharacteristicCurve:
    """Sample P(x_e) uniformly on (0, x_stop] and locate its folds."""
    if n_samples < 32:
        raise DomainError("n_samples must be at least 32")
    xs = system.x_stop * np.arange(1, n_samples + 1) / n_samples
    samples = [equilibrium_for_lift(system, float(x), exact_gas) for x in xs]
    h = 1e-6 * system.x_stop
    # derivative scan starts just above zero lift so a fold below the first
    # sample is still seen
    probe = np.concatenate(([1e-3 * xs[0]], xs))
    slopes = [_dP(system, float(x), min(h, 0.25 * float(x)), exact_gas) for x in probe]
    folds = []
    for i in range(len(probe) - 1):
        s0, s1 = slopes[i], slopes[i + 1]
        if s0 == 0.0 or (s0 > 0) == (s1 > 0):
            continue
        lo, hi = float(probe[i]), float(probe[i + 1])
        f_lo = s0
        while hi - lo > 1e-8 * system.x_stop:
            mid = 0.5 * (lo + hi)
            fm = _dP(system, mid, min(h, 0.25 * mid), exact_gas)
            if (fm > 0) == (f_lo > 0):
                lo, f_lo = mid, fm
            else:
                hi = mid
        xf = 0.5 * (lo + hi)
        folds.append(FoldPoint(xf, tank_pressure_curve(system, xf, exact_gas)))
    curve = CharacteristicCurve(samples, folds, system, exact_gas)
    if with_stiffness:
        curve.k_eff = np.array([effective_stiffness(system, float(x), exact_gas) for x in xs])
    return curve


def steady_valve_pressure(system: ValveSystem, x: float, p_r: float, exact_gas: bool = False) -> float:
    """Valve pressure in steady flow at lift x with the tank held at p_r."""
    s = equilibrium_system(system, exact_gas)
    off = s.pstar_offset()
    if p_r <= off:
        return p_r

    def h(pv):
        return p_r * (1.0 - s.chi(p_r, s.valve_end_velocity(x, pv))) - pv

    lo = off
    if h(p_r) >= 0.0:
        return p_r
    return brentq(h, lo, p_r, xtol=1e-14 * p_r, rtol=4 * np.finfo(float).eps)


def effective_stiffness(system: ValveSystem, x_e: float, exact_gas: bool = False) -> float:
    """Net stiffness of the valve about the equilibrium at x_e.

    The valve is linearised with the tank pressure held at P(x_e); the entry
    loss then varies with lift only through the valve flow, and
    k_eff = k - (P(1 - chi) - p_b) A_eff' + P chi' A_eff.
    Its sign is the sign of dP/dx_e, so it vanishes at folds.
    """
    s = equilibrium_system(system, exact_gas)
    pt = equilibrium_for_lift(system, x_e, exact_gas)
    P = pt.p_r
    xs = s.x_stop
    h = 1e-6 * xs
    lo, hi = max(x_e - h, 0.5 * h), min(x_e + h, xs)

    def chi_at(x):
        return 1.0 - steady_valve_pressure(s, x, P, exact_gas=True) / P

    chi = 1.0 - pt.p_v / P
    dchi = (chi_at(hi) - chi_at(lo)) / (hi - lo)
    k = s.geom.k
    return k - (P * (1.0 - chi) - s.p_b) * s.effective_area_slope(x_e) + P * dchi * s.effective_area(x_e)


def blowdown(curve_or_system, x_ref: float, exact_gas: Optional[bool] = None) -> float:
    """Signed blowdown (P(x_ref) - p_set)/p_set; negative when closing below set pressure."""
    if isinstance(curve_or_system, CharacteristicCurve):
        system = curve_or_system.system
        eg = curve_or_system.exact_gas if exact_gas is None else exact_gas
    else:
        system, eg = curve_or_system, bool(exact_gas)
    if not 0.0 < x_ref <= system.x_stop * (1 + 1e-12):
        raise DomainError("x_ref must lie in (0, x_stop]")
    return (tank_pressure_curve(system, x_ref, eg) - system.p_set) / system.p_set


def reference_lift(curve: CharacteristicCurve) -> float:
    """Lift at which closure is read: the first fold, else the stop."""
    return curve.folds[0].x_fold if curve.folds else curve.system.x_stop


def equilibrium_for_mdot(system: ValveSystem, mdot: float, exact_gas: bool = False) -> EquilibriumPoint:
    """Equilibrium passing the flow mdot; the flow rises monotonically with lift."""
    xs = system.x_stop
    f = lambda x: equilibrium_for_lift(system, x, exact_gas).mdot - mdot
    lo = 1e-9 * xs
    if f(xs) < 0.0:
        raise DomainError("no dynamic equilibrium below the stop carries this flow")
    if f(lo) > 0.0:
        raise DomainError("flow too small to resolve an equilibrium lift")
    x = brentq(f, lo, xs, xtol=1e-15 * xs, rtol=4 * np.finfo(float).eps, maxiter=200)
    return equilibrium_for_lift(system, x, exact_gas)


def write_curve_csv(curve: CharacteristicCurve, path, header_lines=()) -> None:
    k_eff = curve.k_eff
    if k_eff is None:
        k_eff = [effective_stiffness(curve.system, s.x_e, curve.exact_gas) for s in curve.samples]
    rows = [(s.x_e, s.p_v, s.p_r, s.mdot, k) for s, k in zip(curve.samples, k_eff)]
    footer = [f"fold,{fmt(f.x_fold)},{fmt(f.p_fold)}" for f in curve.folds]
    write_csv(path, ["x_e", "p_v", "p_r", "mdot", "k_eff"], rows, header_lines, footer)
