"""Valve geometry: seat and flow-through areas, discharge coefficient and effective area."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .errors import DomainError

# Discharge coefficient against relative lift x/x_max from axisymmetric CFD of
# three disc valves (collar angle 0, 45, 90 deg) and one cone (135 deg).
CD_TABLE_LIFT = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2)
CD_TABLE = {
    "disc_0": (0.9032, 0.6989, 0.6234, 0.6070, 0.5786, 0.5496),
    "disc_45": (0.9192, 0.7835, 0.7133, 0.6785, 0.6275, 0.6064),
    "disc_90": (0.9082, 0.7655, 0.7501, 0.7070, 0.6707, 0.6553),
    "cone_135": (0.9635, 0.8722, 0.8565, 0.8520, 0.8877),
}

AEFF_FLOOR = 1e-3


@dataclass(frozen=True)
class DischargeCoefficient:
    """Constant Cd, or a table of Cd against relative lift x/x_max.

    Tables are interpolated linearly and held constant beyond their end points.
    """

    value: Optional[float] = 0.93
    lift_fraction: Optional[tuple] = None
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.table is None:
            if self.value is None or not 0 < self.value <= 1.2:
                raise DomainError(f"Cd must lie in (0, 1.2], got {self.value}")
            return
        xs = np.asarray(self.lift_fraction, float)
        cs = np.asarray(self.table, float)
        if xs.shape != cs.shape or xs.size < 2:
            raise DomainError("Cd table needs matching abscissae and values (at least two)")
        if np.any(np.diff(xs) <= 0):
            raise DomainError("Cd table abscissae must be strictly increasing")
        if np.any(cs <= 0) or np.any(cs > 1.2):
            raise DomainError("Cd table values must lie in (0, 1.2]")

    @classmethod
    def from_table(cls, name: str) -> "DischargeCoefficient":
        values = CD_TABLE[name]
        return cls(value=None, lift_fraction=CD_TABLE_LIFT[: len(values)], table=tuple(values))

    @property
    def is_constant(self) -> bool:
        return self.table is None

    def __call__(self, lift_fraction: float) -> float:
        if self.table is None:
            return self.value
        return float(np.interp(lift_fraction, self.lift_fraction, self.table))

    def slope(self, lift_fraction: float) -> float:
        """d Cd / d(x/x_max); right-hand slope at table knots."""
        if self.table is None:
            return 0.0
        xs, cs = self.lift_fraction, self.table
        if lift_fraction < xs[0] or lift_fraction >= xs[-1]:
            return 0.0
        i = int(np.searchsorted(xs, lift_fraction, side="right")) - 1
        return (cs[i + 1] - cs[i]) / (xs[i + 1] - xs[i])


@dataclass(frozen=True)
class ValveGeometry:
    """Seat diameter, discharge angle, stops and the spring-mass-damper data.

    ``phi`` is the discharge angle; the half-cone angle is ``alpha = pi - phi``.
    ``x_pre`` may be left as None and derived from the set pressure later.
    """

    D: float = 0.03205
    phi: float = math.pi / 2
    cd: DischargeCoefficient = field(default_factory=DischargeCoefficient)
    x_max: Optional[float] = None
    x_stop: Optional[float] = None
    k: float = 5000.0
    c: float = 20.0
    m: float = 0.45
    e0: float = 0.2
    e1: float = 0.2
    x_pre: Optional[float] = None

    def __post_init__(self):
        if not self.D > 0:
            raise DomainError("seat diameter D must be positive")
        if not 0 < self.phi < math.pi:
            raise DomainError("discharge angle phi must lie in (0, pi)")
        if self.x_max is None:
            object.__setattr__(self, "x_max", self.D / 4)
        if self.x_stop is None:
            object.__setattr__(self, "x_stop", self.x_max)
        if not 0 < self.x_stop <= self.x_max:
            raise DomainError(f"need 0 < x_stop <= x_max, got x_stop={self.x_stop}, x_max={self.x_max}")
        for name in ("e0", "e1"):
            e = getattr(self, name)
            if not 0.0 <= e <= 1.0:
                raise DomainError(f"restitution coefficient {name}={e} outside [0, 1]")
        if not (self.k > 0 and self.m > 0 and self.c >= 0):
            raise DomainError("need k > 0, m > 0, c >= 0")
        if self.x_pre is not None and not self.x_pre > 0:
            raise DomainError("x_pre must be positive")
        xs = np.linspace(0.0, self.x_stop, 65)
        if np.any(np.array([flow_through_area(self, x) for x in xs[1:]]) <= 0):
            raise DomainError("flow-through area is not positive over the admissible lift range")

    @property
    def alpha(self) -> float:
        return math.pi - self.phi

    @property
    def A0(self) -> float:
        return seat_area(self)

    def lift_to_y(self, x: float) -> float:
        return 4.0 * x / self.D


def seat_area(geom: ValveGeometry) -> float:
    return math.pi * geom.D ** 2 / 4.0


def _aft(D: float, phi: float, x: float) -> float:
    s, c = math.sin(phi), math.cos(phi)
    return math.pi * x * s * (D - x * c * s)


def _aft_slope(D: float, phi: float, x: float) -> float:
    s, c = math.sin(phi), math.cos(phi)
    return math.pi * s * (D - 2.0 * x * c * s)


def flow_through_area(geom: ValveGeometry, x: float) -> float:
    """Narrowest flow cross-section of a conical seat at lift x."""
    if x < 0:
        raise DomainError(f"negative lift {x}")
    return _aft(geom.D, geom.phi, x)


def flow_through_area_derivative(geom: ValveGeometry, x: float) -> float:
    return _aft_slope(geom.D, geom.phi, x)


def quartic_coefficients(phi: float, Cd: float, C_kappa: float) -> tuple[float, float, float, float]:
    """Coefficients of A_eff/A0 = 1 + a1 y + a2 y^2 + a3 y^3 + a4 y^4 with y = 4x/D."""
    if not 0 < phi < math.pi:
        raise DomainError("phi must lie in (0, pi)")
    if not (Cd > 0 and C_kappa > 0):
        raise DomainError("Cd and C_kappa must be positive")
    K = C_kappa ** 2 * Cd ** 2
    s, c = math.sin(phi), math.cos(phi)
    return (
        K * math.sin(2 * phi) / 2,
        K * s ** 2 * (4 - c ** 2) / 4,
        -K * s ** 3 * c / 2,
        K * s ** 4 * c ** 2 / 16,
    )


Variant = Literal["constant", "analytic", "polynomial", "tabulated"]


@dataclass(frozen=True)
class EffectiveAreaModel:
    """Dimensionless effective area A_eff/A0 as a function of y = 4x/D.

    * ``constant``: 1 everywhere.
    * ``analytic``: momentum-force model from phi, Cd and C_kappa.  With a
      constant Cd this is exactly the quartic of :func:`quartic_coefficients`.
    * ``polynomial``: 1 + sum a_i y^i with user coefficients.
    * ``tabulated``: piecewise linear in lift fraction x/x_max; must start at
      (0, 1) and is not extrapolated.
    """

    variant: Variant = "constant"
    coeffs: tuple = ()
    phi: Optional[float] = None
    cd: Optional[DischargeCoefficient] = None
    C_kappa: Optional[float] = None
    lift_fraction: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.variant == "analytic":
            if self.phi is None or self.cd is None or self.C_kappa is None:
                raise DomainError("analytic effective area needs phi, cd and C_kappa")
        elif self.variant == "tabulated":
            xs = np.asarray(self.lift_fraction, float)
            vs = np.asarray(self.values, float)
            if xs.size < 2 or xs.shape != vs.shape:
                raise DomainError("tabulated effective area needs two matching columns")
            if np.any(np.diff(xs) <= 0):
                raise DomainError("effective area table abscissae must be strictly increasing")
            if xs[0] != 0.0 or abs(vs[0] - 1.0) > 1e-12:
                raise DomainError("effective area table must start at (0, 1)")
        elif self.variant == "polynomial":
            if len(self.coeffs) == 0:
                raise DomainError("polynomial effective area needs coefficients")
        elif self.variant != "constant":
            raise DomainError(f"unknown effective area variant {self.variant!r}")

    @classmethod
    def analytic(cls, geom: ValveGeometry, C_kappa: float) -> "EffectiveAreaModel":
        return cls("analytic", phi=geom.phi, cd=geom.cd, C_kappa=C_kappa)

    @classmethod
    def polynomial(cls, *coeffs: float) -> "EffectiveAreaModel":
        return cls("polynomial", coeffs=tuple(float(a) for a in coeffs))

    @classmethod
    def from_csv(cls, path) -> "EffectiveAreaModel":
        xs, vs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    x, v = float(row[0]), float(row[1])
                except ValueError:
                    continue  # header
                xs.append(x)
                vs.append(v)
        return cls("tabulated", lift_fraction=tuple(xs), values=tuple(vs))

    # -- evaluation in terms of lift -------------------------------------
    def ratio(self, geom: ValveGeometry, x: float) -> float:
        """A_eff(x)/A0."""
        if self.variant == "constant" or x == 0.0:
            return 1.0
        if self.variant == "polynomial":
            y = geom.lift_to_y(x)
            return 1.0 + sum(a * y ** (i + 1) for i, a in enumerate(self.coeffs))
        if self.variant == "tabulated":
            f = x / geom.x_max
            if f > self.lift_fraction[-1] * (1 + 1e-12):
                raise DomainError(f"lift fraction {f} beyond the effective area table")
            return float(np.interp(f, self.lift_fraction, self.values))
        r = _aft(geom.D, self.phi, x) / geom.A0
        cd = self.cd(x / geom.x_max)
        return 1.0 + (self.C_kappa * cd) ** 2 * r * (r + math.cos(self.phi))

    def ratio_derivative(self, geom: ValveGeometry, x: float) -> float:
        """d(A_eff/A0)/dx, right-hand at x = 0 and at table knots."""
        if self.variant == "constant":
            return 0.0
        dy = 4.0 / geom.D
        if self.variant == "polynomial":
            y = geom.lift_to_y(x)
            return dy * sum((i + 1) * a * y ** i for i, a in enumerate(self.coeffs))
        if self.variant == "tabulated":
            xs, vs = self.lift_fraction, self.values
            f = x / geom.x_max
            i = min(int(np.searchsorted(xs, f, side="right")) - 1, len(xs) - 2)
            return (vs[i + 1] - vs[i]) / (xs[i + 1] - xs[i]) / geom.x_max
        r = _aft(geom.D, self.phi, x) / geom.A0
        dr = _aft_slope(geom.D, self.phi, x) / geom.A0
        frac = x / geom.x_max
        cd, dcd = self.cd(frac), self.cd.slope(frac) / geom.x_max
        K = self.C_kappa ** 2
        cphi = math.cos(self.phi)
        return K * (2 * cd * dcd * r * (r + cphi) + cd ** 2 * dr * (2 * r + cphi))

    def validate(self, geom: ValveGeometry) -> None:
        xs = np.linspace(0.0, geom.x_stop, 257)
        vals = np.array([self.ratio(geom, x) for x in xs])
        if np.any(vals < AEFF_FLOOR):
            raise DomainError("effective area drops below its positive floor on [0, x_stop]")


def effective_area(model: EffectiveAreaModel, geom: ValveGeometry, x: float) -> float:
    if x < 0 or x > geom.x_stop * (1 + 1e-12):
        raise DomainError(f"lift {x} outside [0, x_stop]")
    if x == 0.0:
        return geom.A0
    return geom.A0 * model.ratio(geom, x)


def effective_area_derivative(model: EffectiveAreaModel, geom: ValveGeometry, x: float) -> float:
    if x < 0 or x > geom.x_stop * (1 + 1e-12):
        raise DomainError(f"lift {x} outside [0, x_stop]")
    return geom.A0 * model.ratio_derivative(geom, x)

