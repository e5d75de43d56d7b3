"""Quarter-wave reduced-order model.

The pipe is represented by its fundamental quarter-wave mode,
p = p0 + B sin(pi xi / 2L) and v = v_L + C cos(pi xi / 2L), and the pipe
equations are collocated at the midpoint.  With the valve and tank this
gives five ODEs in y = (x, xdot, p_r, B, C).  The entry pressure p0 and the
valve velocity v_L are algebraic functions of the state; their rates are
eliminated by implicit differentiation so that M(y) y' = F(y) is solved
directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import root

from .csvio import write_csv
from .equilibrium import equilibrium_for_mdot
from .errors import AssemblyError, DomainError, NotApplicableError, TransversalityError
from .system import ValveSystem

SQRT2 = math.sqrt(2.0)
STATE_NAMES = ("x", "xdot", "p_r", "B", "C")


@dataclass(frozen=True)
class QwmOptions:
    convection: bool = True
    inlet_loss: bool = True
    frozen_valve: bool = False

    def apply(self, system: ValveSystem) -> ValveSystem:
        if system.inlet_loss != self.inlet_loss:
            return system.replace(inlet_loss=self.inlet_loss)
        return system


@dataclass
class QwmJacobian:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    classification: str
    state: np.ndarray = None
    richardson_error: float = float("nan")


@dataclass
class HopfBoundary:
    samples: list  # (q, L_c or nan, status)
    options: QwmOptions = field(default_factory=QwmOptions)

    @property
    def q(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def L_c(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])


def algebraic_closure(system: ValveSystem, x: float, p_r: float, B: float, C: float, tol: float = 1e-14):
    """Solve p0 = P0(p_r, v_L + C) and v_L = beta(x) sqrt(p*(p0 + B)) for (p0, v_L)."""
    b = system.beta(x) if x > 0 else 0.0
    p0, vL = p_r, 0.0
    for _ in range(200):
        ps = system.pstar(p0 + B)
        vL_new = b * math.sqrt(ps) if ps > 0 else 0.0
        p0_new = system.entry_pressure(p_r, vL_new + C)
        done = abs(p0_new - p0) <= tol * abs(p_r) and abs(vL_new - vL) <= tol * max(1.0, abs(vL))
        p0, vL = p0_new, vL_new
        if done:
            return p0, vL
    raise DomainError("entry pressure and valve velocity did not converge")


def _partials(system: ValveSystem, x, p_r, B, C, p0, vL):
    """Gradients of p0 and v_L with respect to (x, p_r, B, C)."""
    b = system.beta(x) if x > 0 else 0.0
    bx = system.beta_slope(x) if x > 0 else 0.0
    ps = system.pstar(p0 + B)
    sq = math.sqrt(ps) if ps > 0 else 0.0
    g = b / (2.0 * sq) if sq > 0 else 0.0
    dpr, du = system.entry_pressure_partials(p_r, vL + C)
    den = 1.0 - du * g
    if abs(den) < 1e-12:
        raise AssemblyError("algebraic closure is singular")
    p0_grad = np.array([du * bx * sq, dpr, du * g, du]) / den
    vL_grad = np.array([bx * sq + g * p0_grad[0], g * p0_grad[1], g * (p0_grad[2] + 1.0), g * p0_grad[3]])
    return p0_grad, vL_grad


def qwm_assemble(system: ValveSystem, y, L: float, mdot_in: float, options: QwmOptions = QwmOptions()):
    """Return (M, F) with M y' = F."""
    x, xd, p_r, B, C = (float(v) for v in y)
    p0, vL = algebraic_closure(system, x, p_r, B, C)
    p0_g, vL_g = _partials(system, x, p_r, B, C, p0, vL)
    rho, a = system.rho, system.a
    w = math.pi / (2.0 * L)
    cv = 1.0 if options.convection else 0.0
    u = SQRT2 * vL + C
    F = np.empty(5)
    if options.frozen_valve:
        F[0] = F[1] = 0.0
    else:
        F[0] = xd
        F[1] = system.accel(x, xd, p0 + B)
    F[2] = system.a ** 2 / system.V * (mdot_in - system.A0 * rho * (vL + C))
    F[3] = a * a * rho * w * C - cv * u * w / SQRT2 * B
    F[4] = cv * u * w / SQRT2 * C - w * B / rho - system.lam / (2.0 * SQRT2 * system.geom.D) * u * abs(u)
    M = np.eye(5)
    cols = [0, 2, 3, 4]
    M[3, cols] += SQRT2 * p0_g
    M[4, cols] += SQRT2 * vL_g
    return M, F


def qwm_rhs(system: ValveSystem, y, L: float, mdot_in: float, options: QwmOptions = QwmOptions()) -> np.ndarray:
    M, F = qwm_assemble(system, y, L, mdot_in, options)
    sc = _scales(system)
    # condition number of the nondimensional matrix; M itself mixes units
    c = np.linalg.cond(M * sc[None, :] / sc[:, None])
    if not np.isfinite(c) or c > 1e12:
        raise AssemblyError(f"mass matrix is singular (condition number {c:.3g})")
    return np.linalg.solve(M, F)


def reconstruct_pressure(system: ValveSystem, y, L: float, xi) -> np.ndarray:
    x, _, p_r, B, C = y
    p0, _ = algebraic_closure(system, x, p_r, B, C)
    return p0 + B * np.sin(np.pi * np.asarray(xi) / (2.0 * L))


def _scales(system: ValveSystem) -> np.ndarray:
    return np.array([system.x_stop, 1.0, system.p_set, system.p_set, 1.0])


def qwm_equilibrium(system: ValveSystem, mdot_in: float, L: float = 1.0, options: QwmOptions = QwmOptions()) -> np.ndarray:
    """Equilibrium of the QWM for constant inflow, found as a root of its vector field.

    The steady lift from the characteristic curve seeds the root finder.
    """
    s = options.apply(system)
    seed = equilibrium_for_mdot(s, mdot_in, exact_gas=True)
    sc = _scales(s)
    y0 = np.array([seed.x_e * (1 + 1e-4), 0.0, seed.p_r * (1 - 1e-4), 0.0, 0.0])

    def fun(z):
        y = z * sc
        return qwm_rhs(s, y, L, mdot_in, options) * np.array([1.0 / s.x_stop, 1e-3, 1.0 / s.p_set, 1.0 / s.p_set, 1e-3])

    sol = root(fun, y0 / sc, method="hybr", options={"xtol": 1e-14})
    y = sol.x * sc
    if np.max(np.abs(fun(sol.x))) > 1e-9:
        raise DomainError("QWM equilibrium did not converge")
    y[1] = 0.0
    return y


def _fd_jacobian(system, y, L, mdot_in, options, factor=1.0):
    sc = _scales(system)
    J = np.empty((5, 5))
    for i in range(5):
        h = factor * max(1e-7 * abs(y[i]), 1e-9 * sc[i])
        yp, ym = np.array(y, float), np.array(y, float)
        yp[i] += h
        ym[i] -= h
        J[:, i] = (qwm_rhs(system, yp, L, mdot_in, options) - qwm_rhs(system, ym, L, mdot_in, options)) / (2 * h)
    return J


def richardson_jacobian(system, y, L, mdot_in, options=QwmOptions()) -> np.ndarray:
    """Richardson-extrapolated central differences from steps h and h/2."""
    s = options.apply(system)
    J1 = _fd_jacobian(s, y, L, mdot_in, options, 1.0)
    J2 = _fd_jacobian(s, y, L, mdot_in, options, 0.5)
    return (4.0 * J2 - J1) / 3.0


def classify_spectrum(ev: np.ndarray, tol_rel: float = 1e-6) -> str:
    rad = float(np.max(np.abs(ev))) if ev.size else 0.0
    tol = tol_rel * rad
    lead = ev[np.argmax(ev.real)]
    if lead.real > tol:
        return "unstable-oscillatory" if abs(lead.imag) > tol else "unstable-static"
    if lead.real >= -tol:
        return "hopf-marginal"
    return "stable"


def qwm_jacobian(
    system: ValveSystem,
    y_eq,
    L: float,
    mdot_in: float,
    options: QwmOptions = QwmOptions(),
    check: bool = True,
) -> QwmJacobian:
    """Jacobian at an equilibrium by central differences, with its spectrum."""
    s = options.apply(system)
    y_eq = np.asarray(y_eq, float)
    f = qwm_rhs(s, y_eq, L, mdot_in, options)
    norm = np.abs(f) / np.array([s.x_stop, 1.0, s.p_set, s.p_set * s.a / L, s.a / L])
    if check and np.max(norm) > 1e-6:
        raise DomainError("state is not an equilibrium of the quarter-wave model")
    J = _fd_jacobian(s, y_eq, L, mdot_in, options)
    ev = np.linalg.eigvals(J)
    return QwmJacobian(J, ev, classify_spectrum(ev), y_eq)


def jacobian_richardson_discrepancy(system, y, L, mdot_in, options=QwmOptions()) -> float:
    """Largest gap between plain and extrapolated differences.

    Both matrices are put in state-scaled form and the gap is measured
    relative to the largest scaled entry, so round-off in entries that are
    zero up to cancellation does not dominate.
    """
    s = options.apply(system)
    J = _fd_jacobian(s, y, L, mdot_in, options)
    JR = richardson_jacobian(system, y, L, mdot_in, options)
    sc = _scales(s)
    D = (J - JR) * sc[None, :] / sc[:, None]
    R = JR * sc[None, :] / sc[:, None]
    return float(np.max(np.abs(D)) / np.max(np.abs(R)))


def oscillatory_growth(system, y_eq, L, mdot_in, options=QwmOptions()) -> float:
    """Largest real part among complex eigenvalues (the acoustic pair)."""
    jac = qwm_jacobian(system, y_eq, L, mdot_in, options, check=False)
    ev = jac.eigenvalues
    osc = ev[np.abs(ev.imag) > 1e-9 * np.max(np.abs(ev))]
    if osc.size == 0:
        return -math.inf
    return float(np.max(osc.real))


def _hopf_one(system, q, L_lo, L_hi, options, n_scan, tol):
    s = options.apply(system)
    mdot = q * system.capacity()
    try:
        y = qwm_equilibrium(s, mdot, 1.0, options)
    except DomainError:
        return (q, math.nan, "no-equilibrium")
    Ls = np.geomspace(L_lo, L_hi, n_scan)
    g = [oscillatory_growth(s, y, float(L), mdot, options) for L in Ls]
    for i in range(n_scan - 1):
        if g[i] < 0.0 <= g[i + 1]:
            lo, hi = float(Ls[i]), float(Ls[i + 1])
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if oscillatory_growth(s, y, mid, mdot, options) < 0.0:
                    lo = mid
                else:
                    hi = mid
            return (q, 0.5 * (lo + hi), "ok")
    return (q, math.nan, "boundary-outside-bracket")


def hopf_boundary(
    system: ValveSystem,
    q_grid: Sequence[float],
    L_bracket=(0.05, 10.0),
    options: QwmOptions = QwmOptions(),
    n_scan: int = 60,
    tol: float = 1e-4,
    jobs: int = 1,
) -> HopfBoundary:
    """Critical pipe length L_c(q) where the acoustic pair crosses the imaginary axis.

    The capacity that scales q is always that of ``system`` itself.
    """
    for q in q_grid:
        if not 0.0 < q <= 1.0:
            raise DomainError("q must lie in (0, 1]")
    args = [(system, float(q), L_bracket[0], L_bracket[1], options, n_scan, tol) for q in q_grid]
    if jobs > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            samples = list(ex.map(_hopf_star, args))
    else:
        samples = [_hopf_one(*a) for a in args]
    return HopfBoundary(samples, options)


def _hopf_star(a):
    return _hopf_one(*a)


def write_boundary_csv(boundary: HopfBoundary, path, header_lines=()) -> None:
    o = boundary.options
    flags = f"convection={int(o.convection)};inlet_loss={int(o.inlet_loss)}"
    rows = [(q, Lc, flags if status == "ok" else f"{flags};{status}") for q, Lc, status in boundary.samples]
    write_csv(path, ["q", "L_c", "flags"], rows, header_lines)


# ---------------------------------------------------------------------------
# sustained contact with the stop


def sliding_jacobian(J0: np.ndarray, B_col: np.ndarray, C_row: np.ndarray) -> np.ndarray:
    """A_s = (I - B (C J0) / (C J0 B)) J0 for the constraint C y = const.

    For a position constraint C the first derivative of C y is the row C J0,
    here the velocity selector.  The projector annihilates B, and the row
    C J0 annihilates A_s from the left, so (C J0) A_s B = 0.
    """
    J0 = np.asarray(J0, float)
    B = np.asarray(B_col, float).reshape(-1)
    C = np.asarray(C_row, float).reshape(-1)
    CJ = C @ J0
    denom = float(CJ @ B)
    if abs(denom) < 1e-12 * np.linalg.norm(J0):
        raise TransversalityError("C J0 B vanishes; the sliding vector field is undefined")
    P = np.eye(J0.shape[0]) - np.outer(B, CJ) / denom
    return P @ J0


STOP_B = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
STOP_C = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
# velocity selector, equal to STOP_C @ J0 for any QWM Jacobian
STOP_CV = np.array([0.0, 1.0, 0.0, 0.0, 0.0])


@dataclass
class PseudoEquilibrium:
    state: np.ndarray
    J0: np.ndarray
    A_s: np.ndarray
    eigenvalues: np.ndarray
    free_eigenvalues: np.ndarray
    contact_force: float
    classification: str


def stop_equilibrium_state(system: ValveSystem, mdot_in: float, options: QwmOptions = QwmOptions()):
    """Steady state with the valve on the stop, and the net force pressing it there."""
    s = options.apply(system)
    xs = s.x_stop
    b = s.beta(xs)
    v = mdot_in / (s.rho * s.A0)
    p_v = s.pstar_offset() + (v / b) ** 2
    p_r = p_v
    for _ in range(200):
        new = p_v / (1.0 - s.chi(p_r, v))
        if abs(new - p_r) <= 1e-14 * p_r:
            p_r = new
            break
        p_r = new
    force = (p_v - s.p_b) * s.effective_area(xs) - s.spring_force(xs)
    return np.array([xs, 0.0, p_r, 0.0, 0.0]), force


def pseudo_equilibrium_stability(
    system: ValveSystem, mdot_in: float, L: float, options: QwmOptions = QwmOptions(), tol_rel: float = 1e-6
) -> PseudoEquilibrium:
    """Stability of the valve held on its stop by the flow."""
    s = options.apply(system)
    y, force = stop_equilibrium_state(s, mdot_in, options)
    if force <= 0.0:
        raise NotApplicableError("the flow does not press the valve onto the stop")
    J0 = _fd_jacobian(s, y, L, mdot_in, options)
    A_s = sliding_jacobian(J0, STOP_B, STOP_C)
    ev = np.linalg.eigvals(A_s)
    tol = tol_rel * float(np.max(np.abs(ev)))
    order = np.argsort(np.abs(ev))
    free = ev[order[2:]]
    cls = "stable" if np.all(free.real < -tol) else ("marginal" if np.all(free.real <= tol) else "unstable")
    return PseudoEquilibrium(y, J0, A_s, ev, np.linalg.eigvals(J0), force, cls)
