"""Dense operator-splitting QP solver.

Solves::

    minimise    0.5 x'Hx + g'x
    subject to  lo <= Aineq x <= hi

with the ADMM splitting x / z = Aineq x used by OSQP, including adaptive
step size and an active-set polishing pass. Sized for the tiny problems of
the MPC (tens of variables), so the linear systems are solved densely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .params import ConfigurationError

INF = 1e20

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible_detected"


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    Aineq: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.size
        self.Aineq = np.asarray(self.Aineq, dtype=float).reshape(-1, n)
        self.lo = np.asarray(self.lo, dtype=float).reshape(-1)
        self.hi = np.asarray(self.hi, dtype=float).reshape(-1)
        m = self.Aineq.shape[0]
        if self.H.shape != (n, n) or self.lo.size != m or self.hi.size != m:
            raise ConfigurationError("QP dimensions disagree")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-12 * max(1.0, np.abs(self.H).max(initial=0.0)):
            raise ConfigurationError("H is not symmetric")
        if np.any(self.lo > self.hi):
            raise ConfigurationError("lower bound above upper bound")

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def m(self) -> int:
        return self.Aineq.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, float)
        return float(0.5 * x @ self.H @ x + self.g @ x)

    def dump(self, path) -> None:
        """Plain-text dump: ``n m`` then H, g, Aineq, lo, hi row-major."""
        with open(path, "w") as f:
            f.write(f"{self.n} {self.m}\n")
            for block in (self.H, self.g[None, :], self.Aineq, self.lo[None, :], self.hi[None, :]):
                for row in block:
                    f.write(" ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, path) -> "QpProblem":
        lines = [ln.split() for ln in open(path).read().splitlines() if ln.strip()]
        n, m = int(lines[0][0]), int(lines[0][1])
        rows = [np.array(r, dtype=float) for r in lines[1:]]
        H = np.array(rows[:n]).reshape(n, n)
        g = rows[n]
        A = np.array(rows[n + 1:n + 1 + m]).reshape(m, n)
        return cls(H, g, A, rows[n + 1 + m], rows[n + 2 + m])


@dataclass
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_infeas: float = 1e-7
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho_interval: int = 25
    check_interval: int = 5
    polish: bool = True


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    polished: bool = False
    objective: float = field(default=float("nan"))


def kkt_residuals(p: QpProblem, x, y) -> tuple[float, float, float]:
    """(stationarity, primal violation, complementarity) in the infinity norm.

    Multipliers follow the convention y > 0 on an active upper bound and
    y < 0 on an active lower bound. A multiplier of the wrong sign for a
    missing bound counts as a complementarity violation.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    Ax = p.Aineq @ x
    stat = np.max(np.abs(p.H @ x + p.g + p.Aineq.T @ y), initial=0.0)
    viol = np.max(np.concatenate([np.maximum(p.lo - Ax, 0.0), np.maximum(Ax - p.hi, 0.0)]), initial=0.0)
    yp, yn = np.maximum(y, 0.0), np.maximum(-y, 0.0)
    # a multiplier on a missing bound is a violation on its own
    comp_up = np.where(p.hi >= INF, yp, yp * np.abs(p.hi - Ax))
    comp_lo = np.where(p.lo <= -INF, yn, yn * np.abs(Ax - p.lo))
    comp = np.max(np.concatenate([comp_up, comp_lo]), initial=0.0)
    return float(stat), float(viol), float(comp)


def solve_qp(p: QpProblem, settings: Optional[QpSettings] = None,
             x0=None, y0=None) -> QpSolution:
    s = settings or QpSettings()
    n, m = p.n, p.m
    lo = np.maximum(p.lo, -INF)
    hi = np.minimum(p.hi, INF)
    H, g, A = p.H, p.g, p.Aineq

    x = np.zeros(n) if x0 is None else np.asarray(x0, float).copy()
    y = np.zeros(m) if y0 is None else np.asarray(y0, float).copy()
    z = np.clip(A @ x, lo, hi)

    def rho_vector(rho):
        rv = np.full(m, rho)
        eq = np.abs(hi - lo) < 1e-12
        free = (lo <= -INF) & (hi >= INF)
        rv[eq] *= 1e3
        rv[free] = 1e-6
        return rv

    rho = s.rho
    rv = rho_vector(rho)
    Kinv = np.linalg.inv(H + s.sigma * np.eye(n) + A.T @ (rv[:, None] * A))

    status = MAX_ITER
    it = 0
    r_prim = r_dual = np.inf
    for it in range(1, s.max_iter + 1):
        x_prev, y_prev, z_prev = x, y, z
        xt = Kinv @ (s.sigma * x - g + A.T @ (rv * z - y))
        zt = A @ xt
        x = s.alpha * xt + (1.0 - s.alpha) * x_prev
        zr = s.alpha * zt + (1.0 - s.alpha) * z_prev
        z = np.clip(zr + y_prev / rv, lo, hi)
        y = y_prev + rv * (zr - z)

        if it % s.check_interval and it != s.max_iter:
            continue
        Ax, Hx, Aty = A @ x, H @ x, A.T @ y
        r_prim = np.max(np.abs(Ax - z), initial=0.0)
        r_dual = np.max(np.abs(Hx + g + Aty), initial=0.0)
        eps_p = s.eps_abs + s.eps_rel * max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(z), initial=0.0))
        eps_d = s.eps_abs + s.eps_rel * max(np.max(np.abs(Hx), initial=0.0),
                                            np.max(np.abs(Aty), initial=0.0),
                                            np.max(np.abs(g), initial=0.0))
        if r_prim <= eps_p and r_dual <= eps_d:
            status = OPTIMAL
            break
        dy = y - y_prev
        ndy = np.max(np.abs(dy), initial=0.0)
        if ndy > 0.0:
            lhs = np.max(np.abs(A.T @ dy), initial=0.0)
            support = hi @ np.maximum(dy, 0.0) + lo @ np.minimum(dy, 0.0)
            if lhs <= s.eps_infeas * ndy and support < -s.eps_infeas * ndy:
                status = INFEASIBLE
                break
        if s.adaptive_rho_interval and it % s.adaptive_rho_interval == 0:
            num = r_prim / max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(z), initial=0.0), 1e-30)
            den = r_dual / max(np.max(np.abs(Hx), initial=0.0), np.max(np.abs(Aty), initial=0.0),
                               np.max(np.abs(g), initial=0.0), 1e-30)
            new_rho = float(np.clip(rho * np.sqrt(num / max(den, 1e-30)), 1e-6, 1e6))
            if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                rho = new_rho
                rv = rho_vector(rho)
                Kinv = np.linalg.inv(H + s.sigma * np.eye(n) + A.T @ (rv[:, None] * A))

    sol = QpSolution(x, y, status, it, float(r_prim), float(r_dual))
    if s.polish and status != INFEASIBLE:
        _polish(p, sol, lo, hi, z)
    sol.objective = p.objective(sol.x)
    return sol


def _polish(p: QpProblem, sol: QpSolution, lo, hi, z, max_swaps: int = 50) -> None:
    """Refine the ADMM iterate on a guessed active set.

    Starts from the bounds the iterate leans on, then solves the equality
    constrained KKT system, adding the most violated bound or dropping the
    multiplier of wrong sign until the point is exactly optimal. The result
    replaces the iterate only if it is feasible and sign consistent.
    """
    y = sol.y
    side = np.zeros(p.m, dtype=int)       # -1 lower active, +1 upper active
    side[(z - lo < -y) & (lo > -INF)] = -1
    side[(hi - z < y) & (hi < INF)] = 1
    n = p.n
    scale = max(1.0, np.max(np.abs(p.g), initial=0.0), np.max(np.abs(p.H), initial=0.0))
    tol = 1e-9 * scale
    for _ in range(max_swaps):
        act = np.flatnonzero(side)
        Aa = p.Aineq[act]
        ba = np.where(side[act] < 0, lo[act], hi[act])
        K = np.block([[p.H, Aa.T], [Aa, np.zeros((act.size, act.size))]])
        rhs = np.concatenate([-p.g, ba])
        try:
            w = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            w, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        x = w[:n]
        if not np.all(np.isfinite(x)):
            return
        yp = np.zeros(p.m)
        yp[act] = w[n:]
        Ax = p.Aineq @ x
        viol = np.maximum(lo - Ax, Ax - hi)
        viol[side != 0] = -np.inf
        wrong = np.where(side < 0, yp, np.where(side > 0, -yp, -np.inf))
        if p.m == 0:
            break
        jv, jw = int(np.argmax(viol)), int(np.argmax(wrong))
        if viol[jv] > 1e-9 * max(1.0, abs(Ax[jv])):
            side[jv] = -1 if lo[jv] - Ax[jv] > 0 else 1
        elif wrong[jw] > tol:
            side[jw] = 0
        else:
            break
    else:
        return
    if max(kkt_residuals(p, x, yp)[:2]) > 1e-6 * scale:
        return
    sol.x, sol.y, sol.polished = x, yp, True
    sol.primal_residual = float(np.max(np.maximum(np.maximum(p.lo - Ax, Ax - p.hi), 0.0), initial=0.0))
    sol.dual_residual = float(np.max(np.abs(p.H @ x + p.g + p.Aineq.T @ yp), initial=0.0))
    if sol.status == MAX_ITER:
        sol.status = OPTIMAL
