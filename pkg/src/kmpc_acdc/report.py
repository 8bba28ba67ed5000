"""Vector-graphics renderings of the emitted CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .gssa import phasor, reconstruct_current  # noqa: E402
from .kmpc import build_bounds  # noqa: E402

# fixed ids and no timestamp keep the SVG bytes reproducible
_RC = {"svg.hashsalt": "kmpc-acdc", "svg.fonttype": "path"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_validation(res, p, out_dir) -> Path:
    """Duty, current and voltage of the held-out run against model predictions."""
    out = Path(out_dir)
    s = res.samples
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
        ax[0].plot(s.t, s.mu, lw=0.6, label="mu")
        T = p.period
        k = np.arange(len(res.inputs) + 1)
        u = np.vstack([res.inputs, res.inputs[-1:]])
        ax[0].step((k + 1) * T, u[:, 0], where="post", label="u1")
        ax[0].step((k + 1) * T, u[:, 1], where="post", label="u2")
        ax[0].legend(loc="upper right", fontsize=7)
        ax[1].plot(s.t, s.i, lw=0.6, label="i")
        i_hat = [reconstruct_current(phasor(z), t, p.omega) for z, t in zip(res.predicted, res.onset_times)]
        ax[1].plot(res.onset_times, i_hat, "r+", ms=10, label="i_hat")
        ax[1].set_ylabel("i [A]")
        ax[1].legend(loc="upper right", fontsize=7)
        ax[2].plot(s.t, s.v, lw=0.6, label="v")
        ax[2].plot(res.onset_times, res.measured[:, 2], "kx", label="<v>0 measured")
        ax[2].plot(res.onset_times, res.predicted[:, 2], "r+", ms=10, label="<v>0 predicted")
        ax[2].set_ylabel("v [V]")
        ax[2].set_xlabel("t [s]")
        ax[2].legend(loc="upper right", fontsize=7)
        return _save(fig, out / "validation.svg")


def plot_waveforms(res, out_dir) -> Path:
    out = Path(out_dir)
    s, cfg = res.samples, res.cfg
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
        ax[0].plot(s["t"], s["v"], lw=0.7)
        ax[0].axhline(cfg.V_d, color="k", ls=":", lw=0.6)
        ax[0].set_ylabel("v [V]")
        ax[1].plot(s["t"], s["v_ac"] / 10.0, lw=0.6, label="v_ac / 10")
        ax[1].plot(s["t"], s["i"], lw=0.7, label="i")
        ax[1].axhline(cfg.i_limit, color="r", ls=":", lw=0.6)
        ax[1].axhline(-cfg.i_limit, color="r", ls=":", lw=0.6)
        ax[1].set_ylabel("i [A]")
        ax[1].legend(loc="upper right", fontsize=7)
        ax[2].plot(s["t"], s["mu"], lw=0.6)
        ax[2].set_ylabel("mu")
        ax[2].set_xlabel("t [s]")
        for a in ax:
            a.axvline(cfg.t_start, color="grey", ls=":", lw=0.6)
            a.axvline(cfg.t_end, color="grey", ls=":", lw=0.6)
            a.set_xlim(0.0, cfg.duration)
        fig.suptitle(cfg.controller)
        return _save(fig, out / "waveforms.svg")


def plot_lifted(res, out_dir) -> Path:
    out = Path(out_dir)
    cfg = res.cfg
    (z_lo, z_hi), (u_lo, u_hi) = build_bounds(cfg.params(), cfg.pf_min, input_band=cfg.input_band)
    t = res.onset_times
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(4, 1, sharex=True, figsize=(7, 8))
        for row, (j, name) in enumerate([(0, "z1 = Im<i>1"), (1, "z2 = Re<i>1"), (2, "z3 = <v>0")]):
            ax[row].plot(t, res.Z[:, j], "o-", ms=3)
            ax[row].set_ylabel(name)
            if j < 2:
                ax[row].axhline(z_lo[j], color="r", ls=":", lw=0.6)
                ax[row].axhline(z_hi[j], color="r", ls=":", lw=0.6)
        ax[2].axhline(cfg.V_d, color="k", ls=":", lw=0.6)
        ax[3].step(t, res.U[:, 0], where="post", label="u1")
        ax[3].step(t, res.U[:, 1], where="post", label="u2")
        ax[3].set_ylabel("u")
        ax[3].set_xlabel("onset time [s]")
        ax[3].legend(loc="upper right", fontsize=7)
        for a in ax:
            a.axvline(cfg.t_start, color="grey", ls=":", lw=0.6)
            a.axvline(cfg.t_end, color="grey", ls=":", lw=0.6)
        return _save(fig, out / "lifted.svg")
