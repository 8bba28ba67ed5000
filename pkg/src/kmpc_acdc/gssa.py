"""Windowed harmonic averages, the lifted observable and the averaged model.

A window is the N samples of one AC period that precede a control onset,
i.e. sample indices ``(k-1)N .. kN-1``; this keeps the average of a
constant exactly equal to that constant.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .params import ConfigurationError, ConverterParams

LIFTED_NAMES = ("z1", "z2", "z3", "z4")


def _window_length(omega: float, dt: float) -> int:
    n = 2.0 * math.pi / (omega * dt)
    return int(round(n))


def gssa(window, h: int, omega: float, dt: float, start_index: int = 0) -> complex:
    """Index-``h`` harmonic average of one period of samples.

    ``start_index`` is the absolute sample index of the first entry, so the
    phase reference is the simulation clock rather than the window start.
    """
    y = np.asarray(window, dtype=float)
    n = _window_length(omega, dt)
    if y.ndim != 1 or len(y) != n:
        raise ConfigurationError(f"window holds {y.size} samples, one period needs {n}")
    if h == 0:
        # offset by the first sample so a constant window averages to itself exactly
        return complex(y[0] + np.mean(y - y[0]))
    j = start_index + np.arange(n)
    return complex(np.mean(y * np.exp(-1j * omega * h * j * dt)))


def lift(i_window, v_window, omega: float, dt: float, start_index: int = 0,
         v_min: float = 0.0) -> np.ndarray:
    """Lifted state [Im<i>_1, Re<i>_1, <v>_0, <1/v>_0] of one window."""
    v = np.asarray(v_window, dtype=float)
    if np.any(v < v_min) or np.any(v <= 0.0):
        raise ConfigurationError(f"DC voltage sample {v.min():.4g} V below guard {v_min} V")
    i1 = gssa(i_window, 1, omega, dt, start_index)
    return np.array([i1.imag, i1.real, gssa(v, 0, omega, dt).real, gssa(1.0 / v, 0, omega, dt).real])


def lift_trajectory(i, v, omega: float, dt: float, v_min: float = 0.0) -> np.ndarray:
    """Lift every complete period of a sampled run; row k is window k."""
    n = _window_length(omega, dt)
    i, v = np.asarray(i, float), np.asarray(v, float)
    periods = len(i) // n
    return np.array([lift(i[k * n:(k + 1) * n], v[k * n:(k + 1) * n], omega, dt, k * n, v_min)
                     for k in range(periods)]).reshape(periods, 4)


def phasor(z) -> complex:
    """<i>_1 packed back from a lifted state."""
    return complex(z[1], z[0])


def reconstruct_current(i1: complex, t: float, omega: float) -> float:
    """Instantaneous current implied by a first-harmonic phasor."""
    return 2.0 * (i1.real * math.cos(omega * t) - i1.imag * math.sin(omega * t))


def reference_vector(p: ConverterParams) -> np.ndarray:
    return np.array([-p.I_d / 2.0, 0.0, p.V_d, 1.0 / p.V_d])


def averaged_dynamics(i1: complex, v0: float, u: Sequence[float], p: ConverterParams,
                      P: float | None = None) -> tuple[complex, float]:
    """Time derivatives of (<i>_1, <v>_0) under constant SPWM input ``u``.

    Same bridge polarity as :mod:`kmpc_acdc.plant`; the CPL average is
    closed as P / <v>_0.
    """
    P = p.P if P is None else P
    if P > 0.0 and v0 < p.v_min:
        raise ConfigurationError(f"<v>_0 = {v0:.4g} V below CPL guard {p.v_min} V")
    w = complex(u[1] / 2.0, -u[0] / 2.0)
    di1 = (w * v0 - (p.r + 1j * p.omega * p.L) * i1 - 0.5j * p.E) / p.L
    dc_power = (w * i1.conjugate() + w.conjugate() * i1).real
    dv0 = (-dc_power - p.G * v0 - P / v0) / p.C
    return complex(di1), float(dv0)


def simulate_averaged_oracle(x0: tuple[complex, float], u_sequence, p: ConverterParams,
                             horizon: int, h: float = 20e-6) -> np.ndarray:
    """RK4 integration of :func:`averaged_dynamics`, one lifted row per period.

    Row 0 is ``x0``; row k follows k periods with ``u_sequence[k-1]`` held.
    The fourth component is set to 1/<v>_0.
    """
    u_sequence = np.asarray(u_sequence, dtype=float).reshape(-1, 2)
    if horizon > len(u_sequence):
        raise ConfigurationError("horizon exceeds the input sequence")
    steps = int(round(p.period / h))
    i1, v0 = complex(x0[0]), float(x0[1])
    out = [_pack(i1, v0)]
    for k in range(horizon):
        u = u_sequence[k]
        for _ in range(steps):
            a1, b1 = averaged_dynamics(i1, v0, u, p)
            a2, b2 = averaged_dynamics(i1 + 0.5 * h * a1, v0 + 0.5 * h * b1, u, p)
            a3, b3 = averaged_dynamics(i1 + 0.5 * h * a2, v0 + 0.5 * h * b2, u, p)
            a4, b4 = averaged_dynamics(i1 + h * a3, v0 + h * b3, u, p)
            i1 += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            v0 += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        out.append(_pack(i1, v0))
    return np.array(out)


def _pack(i1: complex, v0: float) -> np.ndarray:
    return np.array([i1.imag, i1.real, v0, 1.0 / v0])

