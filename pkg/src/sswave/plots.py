"""Figure rendering for the CLI report path.

Every run that emits a series also renders the matching figures next to it;
matplotlib runs on the Agg backend so this works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def monitor_figures(series, outdir, prefix="run") -> list:
    """Decay, energy and frame-parameter figures for a monitor series."""
    outdir = Path(outdir)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(series.s, np.maximum(series.q_norm, 1e-300), "o-", ms=3, label=r"$\|q\|_H$")
    ax.semilogy(series.s, np.maximum(np.abs(series.alpha_1_1), 1e-300), "s--", ms=3,
                label=r"$|\alpha_{1,1}|$")
    ax.set_xlabel("s")
    ax.set_ylabel("remainder size")
    ax.legend()
    ax.grid(True, alpha=0.3)
    paths.append(_save(fig, outdir / f"{prefix}_decay.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(series.s, series.E, "o-", ms=3)
    ax.set_xlabel("s")
    ax.set_ylabel("E")
    ax.grid(True, alpha=0.3)
    paths.append(_save(fig, outdir / f"{prefix}_energy.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(series.s, series.lam, "o-", ms=3, label=r"$\mathrm{artanh}\,d$")
    for j in range(series.theta.shape[1]):
        ax.plot(series.s, series.theta[:, j], ".-", ms=3, label=rf"$\theta_{j + 2}$")
    ax.set_xlabel("s")
    ax.set_ylabel("frame parameters")
    ax.legend()
    ax.grid(True, alpha=0.3)
    paths.append(_save(fig, outdir / f"{prefix}_frame.png"))
    return paths


def ode_figure(traj, outdir, prefix="ode") -> list:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(traj.xi, traj.rho_val)
    ax1.set_xlabel(r"$\xi$")
    ax1.set_ylabel(r"$|\bar w|$")
    ax1.grid(True, alpha=0.3)
    drift = np.abs(traj.first_integral - traj.first_integral[0])
    ax2.semilogy(traj.xi, np.maximum(drift, 1e-18))
    ax2.set_xlabel(r"$\xi$")
    ax2.set_ylabel("first-integral drift")
    ax2.grid(True, alpha=0.3)
    return [_save(fig, Path(outdir) / f"{prefix}_trajectory.png")]


def blowup_figure(times, norms, T_est, p, outdir, prefix="physical") -> list:
    fig, ax = plt.subplots(figsize=(6, 4))
    mask = norms > 0
    ax.semilogy(times[mask], norms[mask], label="windowed amplitude")
    if np.isfinite(T_est):
        tt = times[mask]
        ref = norms[mask][0] * ((T_est - tt[0]) / np.maximum(T_est - tt, 1e-300)) ** (2 / (p - 1))
        ax.semilogy(tt, ref, "--", label=r"$(T-t)^{-2/(p-1)}$ fit")
    ax.set_xlabel("t")
    ax.set_ylabel("local norm")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return [_save(fig, Path(outdir) / f"{prefix}_growth.png")]


def residual_figure(nodes, residual, outdir, prefix="stationary") -> list:
    fig, ax = plt.subplots(figsize=(6, 4))
    r = np.abs(residual)
    if r.ndim == 2:
        r = r.max(axis=1)
    ax.semilogy(nodes, np.maximum(r, 1e-18))
    ax.set_xlabel("y")
    ax.set_ylabel("|stationarity residual|")
    ax.grid(True, alpha=0.3)
    return [_save(fig, Path(outdir) / f"{prefix}_residual.png")]


def spectral_figure(ds, eig_res, biorth_err, outdir, prefix="spectral") -> list:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(ds, np.maximum(eig_res, 1e-18), "o", label="eigen-residual")
    ax.semilogy(ds, np.maximum(biorth_err, 1e-18), "s", label="|gram - I|")
    ax.set_xlabel("d")
    ax.set_ylabel("residual")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return [_save(fig, Path(outdir) / f"{prefix}_residuals.png")]


def rotation_figure(residuals, outdir, prefix="rotation") -> list:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.log10(np.maximum(np.asarray(residuals), 1e-18)), bins=40)
    ax.set_xlabel("log10 identity residual")
    ax.set_ylabel("count")
    ax.grid(True, alpha=0.3)
    return [_save(fig, Path(outdir) / f"{prefix}_identities.png")]


def energy_step_figure(s, E, outdir, prefix="selfsim") -> list:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(s, E)
    ax1.set_xlabel("s")
    ax1.set_ylabel("E")
    ax1.grid(True, alpha=0.3)
    inc = np.diff(E)
    ax2.semilogy(s[1:], np.maximum(inc, 1e-18), label="E increase")
    ax2.semilogy(s[1:], np.maximum(-inc, 1e-18), label="E decrease")
    ax2.set_xlabel("s")
    ax2.legend()
    ax2.grid(True, alpha=0.3)
    return [_save(fig, Path(outdir) / f"{prefix}_lyapunov.png")]
