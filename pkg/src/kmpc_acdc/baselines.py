"""Comparison controllers: IDA-PBC feedback and cascade PI + PR."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .params import ConverterParams


def ideal_phase(t: float, omega: float) -> float:
    """Grid phase from an ideal, error-free phase source."""
    return (omega * t) % (2.0 * math.pi)


def ida_pbc(i_ell: float, p: ConverterParams) -> tuple[float, float]:
    if p.I_d <= 0.0:
        raise ValueError("IDA-PBC needs a positive current amplitude I_d")
    return -2.0 * i_ell / p.I_d, p.omega * p.L * p.I_d / p.V_d


def dc_load_current_avg(v_window, p: ConverterParams, P_window=None) -> float:
    """Mean of G v + P / max(v, v_min) over the window."""
    v = np.asarray(v_window, dtype=float)
    P = p.P if P_window is None else np.asarray(P_window, dtype=float)
    return float(np.mean(p.G * v + P / np.maximum(v, p.v_min)))


class IdaPbcController:
    """IDA-PBC with the load current averaged over a trailing AC period.

    ``p`` is the controller's belief about the plant; a mismatch in r only
    enters through the I_d it computes.
    """

    def __init__(self, p: ConverterParams):
        self.p = p
        n = p.samples_per_period
        self.buf: deque[float] = deque([p.G * p.V_d + p.P / p.V_d] * n, maxlen=n)

    def step(self, load_current: float) -> tuple[float, float]:
        self.buf.append(load_current)
        return ida_pbc(sum(self.buf) / len(self.buf), self.p)


@dataclass
class PiPrGains:
    Kvp: float = 1.0
    Kvi: float = 2.0
    Kip: float = 0.04
    Kir: float = 4.0
    omega0: float = 2.0 * math.pi * 50.0
    omegac: float = 0.01 * 2.0 * math.pi * 50.0

    def __post_init__(self):
        if min(self.Kvp, self.Kvi, self.Kip, self.Kir) < 0.0:
            raise ValueError("PI/PR gains must be non-negative")
        if self.omega0 <= 0.0 or self.omegac <= 0.0:
            raise ValueError("resonant frequency and bandwidth must be positive")


@dataclass
class Biquad:
    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def response(self, w: float, dt: float) -> complex:
        zi = np.exp(-1j * w * dt)
        return complex((self.b0 + self.b1 * zi + self.b2 * zi ** 2) / (1.0 + self.a1 * zi + self.a2 * zi ** 2))

    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])


def discretize_pr(gains: PiPrGains, dt_ctrl: float) -> Biquad:
    """Resonant term 2 Kir wc s / (s^2 + 2 wc s + w0^2), Tustin with prewarp at w0."""
    w0, wc = gains.omega0, gains.omegac
    if not w0 * dt_ctrl < math.pi:
        raise ValueError("dt_ctrl too long for the resonant frequency")
    k = w0 / math.tan(0.5 * w0 * dt_ctrl)
    num = 2.0 * gains.Kir * wc * k
    a0 = k * k + 2.0 * wc * k + w0 * w0
    return Biquad(num / a0, 0.0, -num / a0,
                  2.0 * (w0 * w0 - k * k) / a0,
                  (k * k - 2.0 * wc * k + w0 * w0) / a0)


@dataclass
class PiPrState:
    integ_v: float = 0.0
    pr_state: list = field(default_factory=lambda: [0.0, 0.0])
    saturated: bool = False
    I_g: float = 0.0
    v_window: deque = field(default_factory=deque)
    v_sum: float = 0.0


def pi_pr_step(st: PiPrState, v_meas: float, i_meas: float, theta: float,
               gains: PiPrGains, dt_ctrl: float, V_d: float,
               samples_per_period: int, biquad: Biquad | None = None) -> tuple[float, PiPrState]:
    """One sample of the cascade controller; mutates and returns ``st``.

    The outer PI acts on the trailing one-period mean of v, which removes
    the double-frequency ripple, and produces the current amplitude I_g.
    The inner PR runs on I_g sin(theta) - i. Both integrators are frozen
    while the duty saturates.
    """
    bq = biquad or discretize_pr(gains, dt_ctrl)
    win = st.v_window
    if not win:
        win.extend([V_d] * samples_per_period)
        st.v_sum = V_d * samples_per_period
    st.v_sum += v_meas - win.popleft()
    win.append(v_meas)
    e_v = V_d - st.v_sum / samples_per_period
    if not st.saturated:
        st.integ_v += e_v * dt_ctrl
    st.I_g = gains.Kvp * e_v + gains.Kvi * st.integ_v

    e_i = st.I_g * math.sin(theta) - i_meas
    s1, s2 = st.pr_state
    y_r = bq.b0 * e_i + s1
    mu = gains.Kip * e_i + y_r
    st.saturated = abs(mu) > 1.0
    if st.saturated:
        mu = max(-1.0, min(1.0, mu))
    else:
        st.pr_state = [bq.b1 * e_i - bq.a1 * y_r + s2, bq.b2 * e_i - bq.a2 * y_r]
    return mu, st


class PiPrController:
    def __init__(self, p: ConverterParams, gains: PiPrGains | None = None,
                 I_g0: float | None = None):
        self.p = p
        self.gains = gains or PiPrGains()
        self.dt = p.dt_sample
        self.biquad = discretize_pr(self.gains, self.dt)
        I_g0 = p.I_d if I_g0 is None else I_g0
        integ = I_g0 / self.gains.Kvi if self.gains.Kvi > 0.0 else 0.0
        self.state = PiPrState(integ_v=integ, I_g=I_g0)

    def step(self, v_meas: float, i_meas: float, theta: float) -> float:
        mu, _ = pi_pr_step(self.state, v_meas, i_meas, theta, self.gains, self.dt,
                           self.p.V_d, self.p.samples_per_period, self.biquad)
        return mu
