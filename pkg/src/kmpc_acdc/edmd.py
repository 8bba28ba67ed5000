"""Least-squares identification of the lifted linear model.

The model is ``z[k+1] = A z[k] + B u[k] + c`` where ``c`` is the weight of
a constant observable; ``c`` is fixed at zero when fitting with
``affine=False``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gssa import lift_trajectory, phasor, reconstruct_current
from .params import ConfigurationError

log = logging.getLogger(__name__)

DATASET_HEADER = ["k", "z1", "z2", "z3", "z4", "u1", "u2"]


@dataclass
class KoopmanModel:
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray = field(default_factory=lambda: np.zeros(4))
    ridge_flag: bool = False

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        nz = self.A.shape[0]
        if self.A.shape != (nz, nz) or self.B.shape[0] != nz or self.c.shape != (nz,):
            raise ConfigurationError("inconsistent model dimensions")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))
                and np.all(np.isfinite(self.c))):
            raise ConfigurationError("model has non-finite entries")

    @property
    def affine(self) -> bool:
        return bool(np.any(self.c != 0.0))

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def step(self, z, u) -> np.ndarray:
        return self.A @ np.asarray(z, float) + self.B @ np.asarray(u, float) + self.c

    def save(self, path) -> None:
        blocks = [("A", self.A), ("B", self.B)]
        if self.affine:
            blocks.append(("c", self.c.reshape(-1, 1)))
        with open(path, "w") as f:
            for name, m in blocks:
                f.write(f"{name} {m.shape[0]} {m.shape[1]}\n")
                for row in m:
                    f.write(" ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, path) -> "KoopmanModel":
        lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
        mats, pos = {}, 0
        while pos < len(lines):
            head = lines[pos]
            if len(head) != 3 or head[0] not in ("A", "B", "c"):
                raise ConfigurationError(f"{path}: bad block header {' '.join(head)!r}")
            rows, cols = int(head[1]), int(head[2])
            body = lines[pos + 1:pos + 1 + rows]
            if len(body) != rows or any(len(r) != cols for r in body):
                raise ConfigurationError(f"{path}: block {head[0]} is not {rows}x{cols}")
            mats[head[0]] = np.array(body, dtype=float)
            pos += 1 + rows
        if "A" not in mats or "B" not in mats:
            raise ConfigurationError(f"{path}: model file needs A and B blocks")
        c = mats["c"].reshape(-1) if "c" in mats else np.zeros(mats["A"].shape[0])
        return cls(mats["A"], mats["B"], c)


@dataclass
class TrainingDataset:
    Z: np.ndarray      # 4 x K
    Zplus: np.ndarray  # 4 x K
    U: np.ndarray      # 2 x K

    @property
    def K(self) -> int:
        return self.Z.shape[1]


def generate_training_inputs(nominal, amplitude: float, K: int, seed: int) -> np.ndarray:
    """K x 2 input sequence, nominal plus independent uniform perturbations."""
    if amplitude < 0.0:
        raise ValueError("perturbation amplitude must be non-negative")
    rng = np.random.default_rng(seed)
    du = rng.uniform(-amplitude, amplitude, size=(K, 2))
    return np.asarray(nominal, dtype=float) + du


def build_dataset(i_samples, v_samples, inputs, omega: float, dt: float,
                  v_min: float = 0.0) -> TrainingDataset:
    """Pair consecutive windows with the input acting between their onsets.

    The run must hold K+1 complete periods for K inputs; ``inputs[k]``
    drives period k+1.
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 2)
    Zall = lift_trajectory(i_samples, v_samples, omega, dt, v_min)
    return dataset_from_lifted(Zall, inputs)


def dataset_from_lifted(Zall, inputs) -> TrainingDataset:
    Zall = np.asarray(Zall, float)
    inputs = np.asarray(inputs, float).reshape(-1, 2)
    K = len(inputs)
    if len(Zall) != K + 1:
        raise ConfigurationError(f"{len(Zall)} windows for {K} inputs; need K+1")
    return TrainingDataset(Zall[:-1].T.copy(), Zall[1:].T.copy(), inputs.T.copy())


def fit_model(ds: TrainingDataset, ridge: float = 1e-8, affine: bool = True) -> KoopmanModel:
    """Ridge-regularised least squares for [A B c].

    Minimises ||Z+ - A Z - B U - c 1'||_F^2 + ridge ||[A B c]||_F^2.  With
    ridge == 0 this is the minimum-norm solution (pseudoinverse).
    """
    if ridge < 0.0:
        raise ValueError("ridge must be non-negative")
    nz, nu = ds.Z.shape[0], ds.U.shape[0]
    rows = [ds.Z, ds.U] + ([np.ones((1, ds.K))] if affine else [])
    X = np.vstack(rows)
    p = X.shape[0]
    rank = np.linalg.matrix_rank(X)
    if rank < p and ridge == 0.0:
        warnings.warn(f"regressor rank {rank} < {p}; returning minimum-norm solution",
                      RuntimeWarning, stacklevel=2)
    W = _ridge_lstsq(X, ds.Zplus, ridge)
    flag = False
    if ridge > 0.0:
        W0 = _ridge_lstsq(X, ds.Zplus, 0.0)
        # flag the safeguard when it moves the fit by more than 1 %
        flag = bool(np.linalg.norm(W - W0) > 1e-2 * max(np.linalg.norm(W0), 1e-12))
        if flag:
            log.warning("ridge %.3g changes the least-squares solution materially", ridge)
    A, B = W[:, :nz], W[:, nz:nz + nu]
    c = W[:, nz + nu] if affine else np.zeros(nz)
    return KoopmanModel(A, B, c, ridge_flag=flag)


def _ridge_lstsq(X: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    # solve W X ~ Y, i.e. X' W' ~ Y', stacking sqrt(ridge) I for the penalty
    p = X.shape[0]
    M, rhs = X.T, Y.T
    if ridge > 0.0:
        M = np.vstack([M, np.sqrt(ridge) * np.eye(p)])
        rhs = np.vstack([rhs, np.zeros((p, Y.shape[0]))])
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return sol.T


def residual(m: KoopmanModel, ds: TrainingDataset) -> np.ndarray:
    return ds.Zplus - (m.A @ ds.Z + m.B @ ds.U + m.c[:, None])


def predict(m: KoopmanModel, z0, u_seq, steps: int) -> np.ndarray:
    """Iterate the model ``steps`` times; row 0 is ``z0``."""
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1, 2)
    if steps > len(u_seq):
        raise ConfigurationError("more prediction steps than inputs")
    out = [np.asarray(z0, dtype=float)]
    for k in range(steps):
        out.append(m.step(out[-1], u_seq[k]))
    return np.array(out)


@dataclass
class ValidationReport:
    rmse: np.ndarray
    current_error: np.ndarray
    voltage_error: np.ndarray

    def as_dict(self) -> dict:
        d = {f"rmse_{n}": float(x) for n, x in zip(("z1", "z2", "z3", "z4"), self.rmse)}
        d["max_current_error"] = float(np.max(self.current_error, initial=0.0))
        d["max_voltage_error"] = float(np.max(self.voltage_error, initial=0.0))
        return d


def validation_report(pred, measured, i_at_onsets, onset_times, omega: float) -> ValidationReport:
    """Compare predicted and measured lifted states.

    ``i_at_onsets`` are the instantaneous currents sampled at the onsets
    closing each compared window; predictions are turned into currents
    with :func:`~kmpc_acdc.gssa.reconstruct_current`.
    """
    pred = np.asarray(pred, float).reshape(-1, 4)
    measured = np.asarray(measured, float).reshape(-1, 4)
    if pred.shape != measured.shape or len(i_at_onsets) != len(pred):
        raise ConfigurationError("prediction and measurement lengths differ")
    rmse = np.sqrt(np.mean((pred - measured) ** 2, axis=0)) if len(pred) else np.zeros(4)
    i_hat = np.array([reconstruct_current(phasor(z), t, omega) for z, t in zip(pred, onset_times)])
    return ValidationReport(rmse, np.abs(i_hat - np.asarray(i_at_onsets, float)),
                            np.abs(pred[:, 2] - measured[:, 2]))


def write_lifted_csv(path, Z, U) -> None:
    """Rows ``k,z1..z4,u1,u2``; the input is the one applied from onset k on.

    A row without a following input leaves u1, u2 empty.
    """
    Z = np.asarray(Z, float)
    U = np.asarray(U, float).reshape(-1, 2)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DATASET_HEADER)
        for k, z in enumerate(Z):
            u = [repr(float(x)) for x in U[k]] if k < len(U) else ["", ""]
            w.writerow([k] + [repr(float(x)) for x in z] + u)


def read_lifted_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if rows[0] != DATASET_HEADER:
        raise ConfigurationError(f"{path}: expected header {','.join(DATASET_HEADER)}")
    Z = np.array([[float(x) for x in r[1:5]] for r in rows[1:]]).reshape(-1, 4)
    U = np.array([[float(x) for x in r[5:7]] for r in rows[1:] if r[5] != ""]).reshape(-1, 2)
    return Z, U
