"""Converter parameters and the operating point they imply."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


class InfeasibleOperatingPoint(ValueError):
    """The power-balance quadratic has no real root."""


class ConfigurationError(ValueError):
    """Inconsistent timing, window or file configuration."""


def feasible_current(p: "ConverterParams") -> float:
    """Smaller root of 0.5*E*I = 0.5*r*I**2 + G*V_d**2 + P.

    This is the AC current amplitude that delivers the DC load power at
    unity power factor. With r == 0 the quadratic degenerates to a linear
    equation.
    """
    demand = p.G * p.V_d ** 2 + p.P
    if demand == 0.0:
        return 0.0
    if p.r == 0.0:
        return 2.0 * demand / p.E
    a, b, c = 0.5 * p.r, -0.5 * p.E, demand
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise InfeasibleOperatingPoint(
            f"no unity-power-factor operating point: discriminant {disc:.6g} < 0")
    # numerically stable form of the smaller root
    return 2.0 * c / (-b + math.sqrt(disc))


@dataclass(frozen=True)
class ConverterParams:
    """Circuit constants and control objectives of the AC-DC converter.

    Units are SI throughout. ``dt_sample`` is the sensor sampling period;
    one AC period holds ``samples_per_period`` samples.
    """

    L: float = 1e-3
    C: float = 4560e-6
    G: float = 0.01
    P: float = 25.0
    r: float = 0.08
    E: float = 28.0 * math.sqrt(2.0)
    omega: float = 2.0 * math.pi * 50.0
    V_d: float = 48.0
    f_sw: float = 20e3
    i_limit: float = 4.0
    v_min: float = 5.0
    dt_sample: float = 200e-6
    I_d: float = field(init=False)

    def __post_init__(self):
        for name in ("L", "C", "omega", "f_sw", "v_min", "dt_sample"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("G", "P", "r", "E"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "I_d", feasible_current(self))
        # the AC period must hold an integer number of samples
        n = self.period / self.dt_sample
        if abs(n - round(n)) > 1e-6:
            raise ConfigurationError(
                f"AC period {self.period} is not a multiple of dt_sample {self.dt_sample}")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def samples_per_period(self) -> int:
        return int(round(self.period / self.dt_sample))

    def with_(self, **changes) -> "ConverterParams":
        return replace(self, **changes)


def nominal_inputs(p: ConverterParams) -> tuple[float, float]:
    """Steady SPWM amplitudes (u1, u2) that hold v = V_d and i = I_d sin(wt)."""
    if p.I_d == 0.0:
        return 0.0, 0.0
    u1 = -2.0 * (p.G * p.V_d + p.P / p.V_d) / p.I_d
    u2 = p.omega * p.L * p.I_d / p.V_d
    return u1, u2
