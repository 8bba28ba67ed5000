"""Switched and duty-averaged simulation of the single-phase boost rectifier.

Bridge polarity: with switch value ``s`` the AC loop sees ``+s*v`` and the
DC node receives ``-s*i``::

    L di/dt = E sin(wt) - r i + s v
    C dv/dt = -s i - G v - P / v

This orientation makes the nominal SPWM inputs of :func:`nominal_inputs`
(u1 < 0, u2 > 0) an equilibrium, and it makes a positive proportional
current gain stabilising.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .params import ConfigurationError, ConverterParams

H_SWITCHED = 0.5e-6
H_AVERAGED = 20e-6

DutySource = Callable[[float], float]
LoadProfile = Callable[[float], float]


class DegenerateState(ArithmeticError):
    """DC voltage fell below the CPL guard while strict checking was on."""


@dataclass
class PlantState:
    i: float
    v: float
    t: float = 0.0


@dataclass
class Trajectory:
    t: np.ndarray
    i: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    s: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    def write_csv(self, path):
        cols = ["t", "i", "v", "mu"] + (["s"] if self.s is not None else [])
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for row in zip(*(getattr(self, c) for c in cols)):
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def read_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        data = {name: body[:, k] for k, name in enumerate(header)}
        return cls(t=data["t"], i=data["i"], v=data["v"], mu=data["mu"], s=data.get("s"))


def clamp_duty(mu: float) -> float:
    return -1.0 if mu < -1.0 else (1.0 if mu > 1.0 else mu)


def spwm_duty(u, theta: float) -> float:
    """Duty ratio u1*sin(theta) + u2*cos(theta); saturation is the caller's job."""
    return u[0] * math.sin(theta) + u[1] * math.cos(theta)


def carrier(t: float, f_sw: float) -> float:
    """Symmetric triangle in [-1, 1]; -1 at every multiple of 1/f_sw."""
    phase = (t * f_sw) % 1.0
    return 4.0 * phase - 1.0 if phase < 0.5 else 3.0 - 4.0 * phase


def pwm_signal(mu: float, t: float, f_sw: float) -> int:
    if abs(mu) > 1.0:
        raise ValueError(f"duty ratio {mu} outside [-1, 1]")
    if abs(mu) == 1.0:
        return int(mu)
    return 1 if mu >= carrier(t, f_sw) else -1


def cpl_current(v: float, P: float, v_min: float) -> float:
    return P / max(v, v_min)


def plant_derivatives(x: PlantState, s: float, p: ConverterParams,
                      P: Optional[float] = None, strict: bool = True):
    """(di/dt, dv/dt) for switch value or averaged duty ``s``.

    ``P`` overrides the constant-power set-point (load steps). With
    ``strict`` a DC voltage below ``p.v_min`` under a non-zero CPL raises
    :class:`DegenerateState`; otherwise the CPL divisor saturates.
    """
    P = p.P if P is None else P
    if strict and P > 0.0 and x.v < p.v_min:
        raise DegenerateState(f"v = {x.v:.4g} V below CPL guard {p.v_min} V")
    di = (p.E * math.sin(p.omega * x.t) - p.r * x.i + s * x.v) / p.L
    dv = (-s * x.i - p.G * x.v - cpl_current(x.v, P, p.v_min)) / p.C
    return di, dv


class Plant:
    """Fixed-step RK4 simulator.

    Time is kept as an integer step count so that sampling instants and
    carrier valleys stay exactly aligned over long runs.
    """

    def __init__(self, params: ConverterParams, mode: str = "averaged",
                 h: Optional[float] = None, state: Optional[PlantState] = None,
                 load: Optional[LoadProfile] = None, strict_guard: bool = False):
        if mode not in ("switched", "averaged"):
            raise ConfigurationError(f"unknown plant mode {mode!r}")
        self.p = params
        self.mode = mode
        self.h = h if h is not None else (H_SWITCHED if mode == "switched" else H_AVERAGED)
        if self.h <= 0.0:
            raise ConfigurationError("h_sim must be positive")
        if mode == "switched":
            per_carrier = 1.0 / (params.f_sw * self.h)
            if abs(per_carrier - round(per_carrier)) > 1e-9:
                raise ConfigurationError("h_sim must divide the carrier period")
        self.steps_per_sample = _ratio(params.dt_sample, self.h, "dt_sample", "h_sim")
        st = state if state is not None else steady_state(params, 0.0)
        self.i, self.v = float(st.i), float(st.v)
        self._t0 = float(st.t)
        self._k = 0
        self.load = load
        self.strict_guard = strict_guard
        self.last_s = 0.0

    @property
    def t(self) -> float:
        return self._t0 + self._k * self.h

    @property
    def state(self) -> PlantState:
        return PlantState(self.i, self.v, self.t)

    def advance(self, duty: DutySource, n_steps: int) -> None:
        p, h = self.p, self.h
        L, C, r, G, E, w, vmin = p.L, p.C, p.r, p.G, p.E, p.omega, p.v_min
        switched = self.mode == "switched"
        i, v = self.i, self.v
        sin = math.sin
        for _ in range(n_steps):
            t = self._t0 + self._k * h
            P = p.P if self.load is None else self.load(t)
            if self.strict_guard and P > 0.0 and v < vmin:
                raise DegenerateState(f"v = {v:.4g} V below CPL guard at t = {t:.6g}")
            tm = t + 0.5 * h
            if switched:
                s = pwm_signal(clamp_duty(duty(tm)), tm, p.f_sw)
                s1 = s2 = s3 = s
            else:
                s1 = clamp_duty(duty(t))
                s2 = clamp_duty(duty(tm))
                s3 = clamp_duty(duty(t + h))
            e1, e2, e3 = E * sin(w * t), E * sin(w * tm), E * sin(w * (t + h))
            k1i = (e1 - r * i + s1 * v) / L
            k1v = (-s1 * i - G * v - P / max(v, vmin)) / C
            i2, v2 = i + 0.5 * h * k1i, v + 0.5 * h * k1v
            k2i = (e2 - r * i2 + s2 * v2) / L
            k2v = (-s2 * i2 - G * v2 - P / max(v2, vmin)) / C
            i3, v3 = i + 0.5 * h * k2i, v + 0.5 * h * k2v
            k3i = (e2 - r * i3 + s2 * v3) / L
            k3v = (-s2 * i3 - G * v3 - P / max(v3, vmin)) / C
            i4, v4 = i + h * k3i, v + h * k3v
            k4i = (e3 - r * i4 + s3 * v4) / L
            k4v = (-s3 * i4 - G * v4 - P / max(v4, vmin)) / C
            i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            self._k += 1
            self.last_s = s1
        self.i, self.v = i, v

    def simulate(self, duty: DutySource, duration: float, record_every: int = 1) -> Trajectory:
        """Advance ``duration`` seconds, recording every ``record_every`` steps."""
        n = _ratio(duration, self.h * record_every, "duration", "record interval")
        t, ii, vv, mm, ss = [], [], [], [], []
        for _ in range(n):
            tt = self.t
            t.append(tt)
            ii.append(self.i)
            vv.append(self.v)
            mu = clamp_duty(duty(tt))
            mm.append(mu)
            if self.mode == "switched":
                ss.append(pwm_signal(clamp_duty(duty(tt + 0.5 * self.h)), tt + 0.5 * self.h, self.p.f_sw))
            self.advance(duty, record_every)
        return Trajectory(np.array(t), np.array(ii), np.array(vv), np.array(mm),
                          np.array(ss, dtype=float) if self.mode == "switched" else None)


def steady_state(p: ConverterParams, t: float) -> PlantState:
    """Analytic operating point i = I_d sin(wt), v = V_d."""
    return PlantState(p.I_d * math.sin(p.omega * t), p.V_d, t)


def sample_outputs(traj: Trajectory, dt_sample: float, h_sim: float) -> Trajectory:
    """Decimate a per-step trajectory to the sensor sampling grid."""
    m = _ratio(dt_sample, h_sim, "dt_sample", "h_sim")
    sl = slice(None, None, m)
    return Trajectory(traj.t[sl], traj.i[sl], traj.v[sl], traj.mu[sl],
                      None if traj.s is None else traj.s[sl])


def _ratio(a: float, b: float, na: str, nb: str) -> int:
    q = a / b
    n = int(round(q))
    if n < 1 or abs(q - n) > 1e-6 * max(1.0, q):
        raise ConfigurationError(f"{na} = {a:g} is not an integer multiple of {nb} = {b:g}")
    return n
