"""Receding-horizon controller on the lifted linear model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .edmd import KoopmanModel
from .gssa import reference_vector
from .params import ConfigurationError, ConverterParams, nominal_inputs
from .qp import INF, OPTIMAL, QpProblem, QpSettings, QpSolution, kkt_residuals, solve_qp

DIAG_HEADER = ["k", "z1", "z2", "z3", "z4", "u1", "u2", "cost", "slack_max", "solver_iters", "status"]


def build_bounds(p: ConverterParams, pf_min: float = 0.9, nominal=None,
                 input_band: float = 0.1):
    """Lifted-current box and input box.

    The current box holds every phasor of a sinusoid with amplitude at most
    ``p.i_limit`` and power factor at least ``pf_min``. Returns
    ``(z_lo, z_hi), (u_lo, u_hi)`` with the z bounds on (z1, z2).
    """
    if not 0.0 < pf_min <= 1.0:
        raise ValueError("pf_min must lie in (0, 1]")
    half = p.i_limit / 2.0
    z2max = half * math.sqrt(max(0.0, 1.0 - pf_min ** 2))
    z_lo = np.array([-half * pf_min, -z2max])
    z_hi = np.array([0.0, z2max])
    ubar = np.asarray(nominal if nominal is not None else nominal_inputs(p), dtype=float)
    return (z_lo, z_hi), (ubar - input_band, ubar + input_band)


@dataclass
class MpcConfig:
    r_ref: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    horizon: int = 3
    Q: np.ndarray = field(default_factory=lambda: np.diag([0.0, 1.0, 1.0, 0.0]))
    R: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(2))
    slack_weight: Optional[float] = 1e4
    qp: QpSettings = field(default_factory=QpSettings)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        for name in ("Q", "R"):
            M = np.asarray(getattr(self, name), dtype=float)
            if np.max(np.abs(M - M.T)) > 1e-12 or np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ConfigurationError(f"{name} must be symmetric positive semidefinite")
            setattr(self, name, M)

    @classmethod
    def for_converter(cls, p: ConverterParams, pf_min: float = 0.9, **kw) -> "MpcConfig":
        (z_lo, z_hi), (u_lo, u_hi) = build_bounds(p, pf_min)
        return cls(r_ref=reference_vector(p), u_lo=u_lo, u_hi=u_hi, z_lo=z_lo, z_hi=z_hi, **kw)


@dataclass
class CondensedMpc:
    """QP together with the affine maps needed to read its solution."""

    qp: QpProblem
    free: np.ndarray       # predicted lifted states with U = 0, (N, 4)
    gamma: np.ndarray      # d Zhat / d U, (4N, 2N)
    n_u: int
    n_slack: int

    def predicted(self, x) -> np.ndarray:
        U = np.asarray(x, float)[:self.n_u]
        return self.free + (self.gamma @ U).reshape(self.free.shape)


def prediction_matrices(model: KoopmanModel, z0, N: int):
    """Free response (N, nz) and input-to-state map (N*nz, N*nu)."""
    A, B, c = model.A, model.B, model.c
    nz, nu = B.shape
    free = np.zeros((N, nz))
    gamma = np.zeros((N * nz, N * nu))
    z = np.asarray(z0, dtype=float)
    powers = [np.eye(nz)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    for l in range(N):
        z = A @ z + c
        free[l] = z
        for m in range(l + 1):
            gamma[l * nz:(l + 1) * nz, m * nu:(m + 1) * nu] = powers[l - m] @ B
    return free, gamma


def condense(model: KoopmanModel, cfg: MpcConfig, z_meas, u_prev) -> CondensedMpc:
    """Dense QP over (u[k..k+N-1], slacks).

    Decision layout: the N inputs first, then one non-negative slack per
    bounded current component and prediction step when softening is on.
    """
    N = cfg.horizon
    nz, nu = model.B.shape
    free, gamma = prediction_matrices(model, z_meas, N)
    Qbar = np.kron(np.eye(N), cfg.Q)
    Rbar = np.kron(np.eye(N), cfg.R)
    D = np.eye(N * nu) - np.eye(N * nu, k=-nu)
    e0 = np.zeros((N * nu, nu))
    e0[:nu] = np.eye(nu)
    u_prev = np.asarray(u_prev, dtype=float)

    offset = free.reshape(-1) - np.tile(cfg.r_ref, N)
    Huu = 2.0 * (gamma.T @ Qbar @ gamma + D.T @ Rbar @ D)
    gu = 2.0 * gamma.T @ Qbar @ offset - 2.0 * D.T @ Rbar @ (e0 @ u_prev)

    soft = cfg.slack_weight is not None and np.isfinite(cfg.slack_weight)
    bounded = [j for j in range(len(cfg.z_lo)) if np.isfinite(cfg.z_lo[j]) or np.isfinite(cfg.z_hi[j])]
    ns = N * len(bounded) if soft else 0
    n = N * nu + ns
    H = np.zeros((n, n))
    H[:N * nu, :N * nu] = Huu
    H = 0.5 * (H + H.T)
    g = np.concatenate([gu, np.full(ns, cfg.slack_weight if soft else 0.0)])

    rows, lo, hi = [], [], []
    for l in range(N):
        for j in range(nu):
            r = np.zeros(n)
            r[l * nu + j] = 1.0
            rows.append(r)
            lo.append(cfg.u_lo[j])
            hi.append(cfg.u_hi[j])
    for l in range(N):
        for q, j in enumerate(bounded):
            gz = np.zeros(n)
            gz[:N * nu] = gamma[l * nz + j]
            zf = free[l, j]
            zlo = cfg.z_lo[j] if np.isfinite(cfg.z_lo[j]) else -INF
            zhi = cfg.z_hi[j] if np.isfinite(cfg.z_hi[j]) else INF
            if soft:
                si = N * nu + l * len(bounded) + q
                if zlo > -INF:
                    r = gz.copy()
                    r[si] = 1.0
                    rows.append(r)
                    lo.append(zlo - zf)
                    hi.append(INF)
                if zhi < INF:
                    r = gz.copy()
                    r[si] = -1.0
                    rows.append(r)
                    lo.append(-INF)
                    hi.append(zhi - zf)
            else:
                rows.append(gz)
                lo.append(zlo - zf if zlo > -INF else -INF)
                hi.append(zhi - zf if zhi < INF else INF)
    for q in range(ns):
        r = np.zeros(n)
        r[N * nu + q] = 1.0
        rows.append(r)
        lo.append(0.0)
        hi.append(INF)
    qp = QpProblem(H, g, np.array(rows), np.array(lo), np.array(hi))
    return CondensedMpc(qp, free, gamma, N * nu, ns)


def mpc_cost(cfg: MpcConfig, zhat: np.ndarray, U: np.ndarray, u_prev, slack=None) -> float:
    """Stage cost sum of the plan, slack penalty included."""
    U = np.asarray(U, float).reshape(-1, 2)
    du = np.diff(np.vstack([np.asarray(u_prev, float), U]), axis=0)
    e = zhat - cfg.r_ref
    cost = float(np.einsum("li,ij,lj->", e, cfg.Q, e) + np.einsum("li,ij,lj->", du, cfg.R, du))
    if slack is not None and len(slack):
        cost += float(cfg.slack_weight * np.sum(slack))
    return cost


class KoopmanMPC:
    """Controller state: model, configuration, last input and warm start."""

    def __init__(self, model: KoopmanModel, cfg: MpcConfig, u_init):
        if model.A.shape[0] != len(cfg.r_ref) or model.B.shape[1] != len(cfg.u_lo):
            raise ConfigurationError("model and MPC configuration dimensions disagree")
        self.model = model
        self.cfg = cfg
        self.u_prev = np.clip(np.asarray(u_init, dtype=float), cfg.u_lo, cfg.u_hi)
        self.warm: Optional[QpSolution] = None
        self.k = 0

    def step(self, z_meas) -> tuple[np.ndarray, dict]:
        cm = condense(self.model, self.cfg, z_meas, self.u_prev)
        x0 = y0 = None
        if self.warm is not None and self.warm.x.size == cm.qp.n:
            x0 = _shift(self.warm.x, cm.n_u, 2, cm.n_slack, cm.n_slack // self.cfg.horizon)
            y0 = self.warm.y if self.warm.y.size == cm.qp.m else None
        sol = solve_qp(cm.qp, self.cfg.qp, x0, y0)
        u = np.clip(sol.x[:2], self.cfg.u_lo, self.cfg.u_hi)
        zhat = cm.predicted(sol.x)
        slack = sol.x[cm.n_u:]
        stat, viol, comp = kkt_residuals(cm.qp, sol.x, sol.y)
        diag = {
            "k": self.k,
            "z": np.asarray(z_meas, float),
            "u": u,
            "zhat": zhat,
            "plan": sol.x[:cm.n_u].reshape(-1, 2),
            "cost": mpc_cost(self.cfg, zhat, sol.x[:cm.n_u], self.u_prev, slack),
            "slack_max": float(np.max(slack, initial=0.0)),
            "solver_iters": sol.iterations,
            "status": sol.status,
            "kkt": max(stat, viol, comp),
            "converged": sol.status == OPTIMAL,
        }
        self.warm = sol
        self.u_prev = u
        self.k += 1
        return u, diag


def _shift(x, n_u, nu, n_s, per_step):
    x = np.asarray(x, float)
    u = x[:n_u].reshape(-1, nu)
    u = np.vstack([u[1:], u[-1:]]).reshape(-1)
    s = x[n_u:]
    if n_s and per_step:
        s = s.reshape(-1, per_step)
        s = np.vstack([s[1:], s[-1:]]).reshape(-1)
    return np.concatenate([u, s])
