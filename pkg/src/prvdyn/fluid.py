"""Fluid models and the closure relations shared by the valve, pipe and tank."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

from .errors import DomainError

WATER_DENSITY = 1000.0
WATER_BULK_MODULUS = 2.1e9


@dataclass(frozen=True)
class Ambient:
    """Back-pressure and set pressure, both absolute [Pa]."""

    p_b: float = 1.0e5
    p_set: float = 5.0e5

    def __post_init__(self):
        if not (self.p_set > self.p_b > 0):
            raise DomainError(f"need p_set > p_b > 0, got p_set={self.p_set}, p_b={self.p_b}")


@dataclass(frozen=True)
class FluidModel:
    """Gas or liquid with (near) constant density in the pipe.

    For gas, ``rho`` is the reference density; use :meth:`gas` to anchor it at
    the set pressure.  ``cp`` is derived from ``kappa`` and ``R``.
    """

    kind: Literal["gas", "liquid"]
    rho: float
    kappa: float = 1.4
    R: float = 288.0
    T: float = 293.0
    E: Optional[float] = None
    cp: float = field(init=False)

    def __post_init__(self):
        if self.kind not in ("gas", "liquid"):
            raise DomainError(f"unknown fluid kind {self.kind!r}")
        if not self.rho > 0:
            raise DomainError("rho must be positive")
        if self.kind == "gas":
            if not (self.kappa > 1 and self.R > 0 and self.T > 0):
                raise DomainError("gas requires kappa > 1, R > 0, T > 0")
            object.__setattr__(self, "cp", self.kappa * self.R / (self.kappa - 1.0))
        else:
            if self.E is None or not self.E > 0:
                raise DomainError("liquid requires a positive bulk modulus E")
            object.__setattr__(self, "cp", float("nan"))

    @classmethod
    def gas(cls, ambient: Ambient, kappa=1.4, R=288.0, T=293.0) -> "FluidModel":
        return cls("gas", rho=ambient.p_set / (R * T), kappa=kappa, R=R, T=T)

    @classmethod
    def liquid(cls, rho=WATER_DENSITY, E=WATER_BULK_MODULUS, T=293.0) -> "FluidModel":
        return cls("liquid", rho=rho, E=E, T=T)

    @property
    def is_gas(self) -> bool:
        return self.kind == "gas"


def sonic_speed(fluid: FluidModel) -> float:
    if fluid.is_gas:
        return math.sqrt(fluid.kappa * fluid.R * fluid.T)
    return math.sqrt(fluid.E / fluid.rho)


def choking_factor(fluid: FluidModel) -> float:
    """C_kappa: sqrt(2) for liquids, the critical-flow factor for gases."""
    if not fluid.is_gas:
        return math.sqrt(2.0)
    k = fluid.kappa
    if not k > 1.0 + 1e-3:
        # exponent (k+1)/(k-1) blows up; values this close to 1 are not physical
        raise DomainError(f"choking factor undefined for kappa={k}")
    return math.sqrt(k * (2.0 / (1.0 + k)) ** ((k + 1.0) / (k - 1.0)))


def _kinetic_fraction(fluid: FluidModel, v0: float) -> float:
    u = v0 * v0 / (2.0 * fluid.cp * fluid.T)
    if u >= 1.0:
        raise DomainError(f"inlet velocity {v0} m/s exceeds the stagnation limit")
    return u


def inlet_loss_chi(fluid: FluidModel, p_r: float, v0: float) -> float:
    """Fractional pressure drop chi between tank and pipe entry, p(0) = p_r (1 - chi)."""
    if not p_r > 0:
        raise DomainError("tank pressure must be positive")
    if fluid.is_gas:
        u = _kinetic_fraction(fluid, v0)
        n = fluid.kappa / (fluid.kappa - 1.0)
        return -math.expm1(n * math.log1p(-u))
    chi = fluid.rho * v0 * v0 / (2.0 * p_r)
    if chi >= 1.0:
        raise DomainError("entry velocity head exceeds the tank pressure")
    return chi


def inlet_pressure(fluid: FluidModel, p_r: float, v0: float) -> float:
    """Pipe-entry pressure p(0) = p_r (1 - chi)."""
    if fluid.is_gas:
        s = 1.0 - _kinetic_fraction(fluid, v0)
        return p_r * s ** (fluid.kappa / (fluid.kappa - 1.0))
    return p_r - 0.5 * fluid.rho * v0 * v0


def inlet_pressure_partials(fluid: FluidModel, p_r: float, v0: float) -> tuple[float, float]:
    """(d p0/d p_r, d p0/d v0) of :func:`inlet_pressure`."""
    if fluid.is_gas:
        n = fluid.kappa / (fluid.kappa - 1.0)
        s = 1.0 - _kinetic_fraction(fluid, v0)
        return s ** n, -p_r * n * s ** (n - 1.0) * v0 / (fluid.cp * fluid.T)
    return 1.0, -fluid.rho * v0
