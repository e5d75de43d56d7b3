"""Closed-form opening and closing forces for enhanced-blowdown valves.

Everything is dimensionless: forces are scaled by p_set * p0 * A_seat and the
lift y runs from 0 (closed) to 1 (full lift).  ``eta`` and ``k_geom`` are
opaque shape parameters of the blowdown curve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csvio import write_csv
from .errors import DomainError


@dataclass(frozen=True)
class BlowdownDesign:
    delta: float  # p_set / p_b
    eta: float
    k_geom: float
    Delta_bd: float

    def __post_init__(self):
        if self.k_geom == 1.0 or self.Delta_bd == 1.0:
            raise DomainError("k_geom = 1 or Delta_bd = 1 makes the force formulas singular")
        if not self.delta > 1.0:
            raise DomainError("delta = p_set/p_b must exceed 1")
        if not 0.0 <= self.Delta_bd < 1.0:
            raise DomainError("Delta_bd must lie in [0, 1)")
        if not self.k_geom > 1.0:
            raise DomainError("k_geom must exceed 1")


def opening_coefficients(d: BlowdownDesign) -> tuple[float, float]:
    """(a2, a1) with F_op = a2 y^2 + a1 y."""
    k, dl, eta, bd = d.k_geom, d.delta, d.eta, d.Delta_bd
    den = dl * k * (bd - 1.0) * (k - 1.0)
    a2 = (((k - 1.0) * dl + eta * k) * bd + dl) / den
    a1 = -(((k * k - 1.0) * dl + eta * k * k) * bd + dl) / den
    return a2, a1


def closing_coefficients(d: BlowdownDesign) -> tuple[float, float, float]:
    """(b2, b1, b0) with F_cl = b2 y^2 + b1 y + b0."""
    k, dl, eta, bd = d.k_geom, d.delta, d.eta, d.Delta_bd
    den = dl * k * (k - 1.0)
    b2 = (((k - 1.0) * bd + 1.0) * dl + eta * k * bd) / den
    b1 = -(((k * k - 1.0) * bd + 1.0) * dl + eta * k * bd) / den
    return b2, b1, bd


def _check_lift(y):
    y = np.asarray(y, dtype=float)
    if np.any((y < 0.0) | (y > 1.0)):
        raise DomainError("dimensionless lift must lie in [0, 1]")
    return y


def opening_force(d: BlowdownDesign, y):
    a2, a1 = opening_coefficients(d)
    y = _check_lift(y)
    out = a2 * y * y + a1 * y
    return float(out) if out.ndim == 0 else out


def closing_force(d: BlowdownDesign, y):
    b2, b1, b0 = closing_coefficients(d)
    y = _check_lift(y)
    out = b2 * y * y + b1 * y + b0
    return float(out) if out.ndim == 0 else out


def opening_force_at_full_lift(d: BlowdownDesign) -> float:
    return d.Delta_bd * (d.delta + d.eta) / ((1.0 - d.Delta_bd) * d.delta)


def opening_work(d: BlowdownDesign) -> float:
    """Integral of F_op over y in [0, 1]."""
    a2, a1 = opening_coefficients(d)
    return a1 / 2.0 + a2 / 3.0


def opening_energy(p_set: float, p0: float, A_seat: float, s: float, D: float, A_hat: float, a2: float) -> float:
    """Work done on the valve over the full opening stroke, in joules per unit lift scale.

    The lifting force is p_set p0 A_seat [(A_hat - s D / (4 p_set p0 A_seat)) y + a2 y^2].
    """
    if min(p_set, p0, A_seat, D) <= 0 or s < 0:
        raise DomainError("valve parameters must be positive")
    scale = p_set * p0 * A_seat
    return scale * ((A_hat - s * D / (4.0 * scale)) / 2.0 + a2 / 3.0)


def small_lift_slope(d: BlowdownDesign) -> float:
    """Tabulated small-lift slope c1 of the opening force."""
    k, bd = d.k_geom, d.Delta_bd
    return 1.0 / ((k - 1.0) * k) + k * bd * (d.eta + 1.0) / ((1.0 - bd) * (k - 1.0))


def opening_force_slope(d: BlowdownDesign, y: float = 0.0) -> float:
    """dF_op/dy evaluated directly from the quadratic."""
    a2, a1 = opening_coefficients(d)
    return 2.0 * a2 * y + a1


def to_dimensional(force_hat, p_set: float, p0: float, A_seat: float):
    return np.asarray(force_hat) * p_set * p0 * A_seat


def write_force_csv(d: BlowdownDesign, path, n: int = 101, header_lines=()) -> None:
    y = np.linspace(0.0, 1.0, n)
    write_csv(path, ["y", "F_op", "F_cl"], zip(y, opening_force(d, y), closing_force(d, y)), header_lines)
