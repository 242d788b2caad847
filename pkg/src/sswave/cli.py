"""Configuration-driven experiment runner.

Usage:

    sswave <command> [key=value ...] [--config cfg.json] [--out DIR]

Commands: stationary-check, spectral-check, rotation-check, classify-ode,
simulate-physical, simulate-selfsim, trapping.  Keys accept comma lists where
a sweep makes sense (p, d, mu, eps).  A config file holds the same keys; the
command line wins on conflicts.  Exit codes: 0 pass, 1 assertion failure,
2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evolution, modulation, plots, rotations, solitons, spectral
from .reporting import RunReport, emit_series
from .space import GridConstructionError, HState, Params, ResolventError, h_norm, make_grid

COMMANDS = ("stationary-check", "spectral-check", "rotation-check", "classify-ode",
            "simulate-physical", "simulate-selfsim", "trapping")


class UsageError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    options: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.options.get(key, default)


def _parse_value(raw: str):
    parts = raw.split(",")
    vals = []
    for tok in parts:
        tok = tok.strip()
        try:
            vals.append(int(tok))
            continue
        except ValueError:
            pass
        try:
            vals.append(float(tok))
            continue
        except ValueError:
            vals.append(tok)
    return vals if len(vals) > 1 else vals[0]


def parse_config(argv) -> ExperimentConfig:
    ap = argparse.ArgumentParser(prog="sswave", add_help=True,
                                 description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("pairs", nargs="*", help="key=value options")
    ap.add_argument("--config", default=None, help="JSON file with the same keys")
    ap.add_argument("--out", default=None, help="output directory")
    ns = ap.parse_args(argv)

    opts = {}
    if ns.config:
        try:
            opts.update(json.loads(Path(ns.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
    for pair in ns.pairs:
        if "=" not in pair:
            raise UsageError(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        opts[key.strip().replace("-", "_")] = _parse_value(raw)
    if ns.out:
        opts["out"] = ns.out
    opts.setdefault("out", f"runs/{ns.command}")
    return ExperimentConfig(ns.command, opts)


def _as_list(v):
    if v is None:
        return []
    return list(v) if isinstance(v, list) else [v]


def _rng(cfg):
    return np.random.default_rng(int(cfg.get("seed", 0)))


def _random_unit(m, rng):
    v = rng.standard_normal(m)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _run_stationary(cfg: ExperimentConfig, report: RunReport, outdir: Path):
    ps = [float(v) for v in _as_list(cfg.get("p", 3.0))]
    ds = [float(v) for v in _as_list(cfg.get("d", [0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9]))]
    n = int(cfg.get("n", 128))
    m = int(cfg.get("m", 3))
    trials = int(cfg.get("trials", 5))
    rng = _rng(cfg)

    worst = 0.0
    worst_energy = 0.0
    last_res = None
    last_nodes = None
    for p in ps:
        grid = make_grid(Params(p, m, n))
        e_ref = solitons.soliton_energy(p, grid)
        if p == 3.0:
            report.add_check("soliton-energy-closed-form", abs(e_ref - 4.0 / 3.0) <= 1e-10,
                             abs(e_ref - 4.0 / 3.0), 1e-10, "E(kappa0,0) = 4/3 at p=3")
        for d in ds:
            for _ in range(trials):
                omega = _random_unit(m, rng)
                w = solitons.kappa(d, grid.nodes, p)[:, None] * omega[None, :]
                res = np.abs(solitons.stationary_residual(w, grid, p)).max()
                worst = max(worst, res)
                e = solitons.energy(HState(w, np.zeros_like(w)), grid, p)
                worst_energy = max(worst_energy, abs(e - e_ref) / e_ref)
                last_res = solitons.stationary_residual(w, grid, p)
                last_nodes = grid.nodes
    report.add_check("stationarity-residual-max", worst <= 1e-8, worst, 1e-8)
    report.add_check("energy-family-invariance", worst_energy <= 1e-6, worst_energy, 1e-6)
    report.figure_paths += plots.residual_figure(last_nodes, last_res, outdir)


def _run_rotation(cfg: ExperimentConfig, report: RunReport, outdir: Path):
    ms = [int(v) for v in _as_list(cfg.get("m", [2, 3, 4, 5, 6]))]
    trials = int(cfg.get("trials", 1000))
    rng = _rng(cfg)
    worst = dict(ortho=0.0, closed=0.0, ident=0.0, contract=0.0)
    ident_samples = []
    for m in ms:
        for _ in range(max(1, trials // len(ms))):
            theta = rng.uniform(-np.pi / 3, np.pi / 3, m - 1)
            R = rotations.compose_R(theta)
            worst["ortho"] = max(worst["ortho"], np.abs(R.T @ R - np.eye(m)).max())
            worst["closed"] = max(worst["closed"],
                                  np.abs(R - rotations.closed_form_R(theta)).max())
            c = np.cos(theta)
            for j in range(2, m + 1):
                A = rotations.generator_A(theta, j)
                col = A @ np.eye(m)[:, 0]
                tgt = np.zeros(m)
                tgt[j - 1] = np.prod(c[j - 1:])
                ident_res = max(np.abs(col - tgt).max(), abs(col[0]))
                ident_samples.append(ident_res)
                worst["ident"] = max(worst["ident"], ident_res)
                z = rng.standard_normal(m)
                worst["contract"] = max(worst["contract"],
                                        np.linalg.norm(A @ z) / np.linalg.norm(z))
    report.add_check("orthonormality", worst["ortho"] <= 1e-12, worst["ortho"], 1e-12)
    report.add_check("closed-form-vs-product", worst["closed"] <= 1e-13, worst["closed"], 1e-13)
    report.add_check("generator-identities", worst["ident"] <= 1e-12, worst["ident"], 1e-12)
    report.add_check("contraction", worst["contract"] <= 1.0 + 1e-12,
                     worst["contract"], 1.0 + 1e-12)
    report.figure_paths += plots.rotation_figure(ident_samples, outdir)


def _coercivity_fit(grid, p, d, samples, rng):
    worst = 1.0
    for _ in range(samples):
        rem = spectral.random_bar_remainder(d, grid, p, rng)
        val = spectral.form_bar(d, rem, rem, grid, p)
        nrm = spectral.phi_pair(rem, rem, grid)
        if val <= 0:
            return worst, False
        worst = max(worst, nrm / val, val / nrm)
        rem = spectral.random_tilde_remainder(d, grid, p, rng)
        val = spectral.form_tilde(d, rem, rem, grid, p)
        nrm = spectral.phi_pair(rem, rem, grid)
        if val <= 0:
            return worst, False
        worst = max(worst, nrm / val, val / nrm)
    return worst, True


def _run_spectral(cfg: ExperimentConfig, report: RunReport, outdir: Path):
    p = float(cfg.get("p", 3.0))
    n = int(cfg.get("n", 128))
    n2 = int(cfg.get("n_refined", 192))
    m = int(cfg.get("m", 3))
    ds = [float(v) for v in _as_list(cfg.get("d", [0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9]))]
    samples = int(cfg.get("samples", 100))
    grid = make_grid(Params(p, m, n))

    eig_by_d, bi_by_d = [], []
    for d in ds:
        worst_eig_d = 0.0
        for lam in (0, 1):
            F = spectral.F_bar(d, lam, grid, p)
            out = spectral.apply_Lbar(d, F, grid, p)
            diff = spectral.ScalarPair(out.first - lam * F.first, out.second - lam * F.second)
            worst_eig_d = max(worst_eig_d, np.sqrt(spectral.phi_pair(diff, diff, grid)))
        Ft = spectral.F_tilde(d, grid, p)
        out = spectral.apply_Ltilde(d, Ft, grid, p)
        worst_eig_d = max(worst_eig_d, np.sqrt(spectral.phi_pair(out, out, grid)))
        bar = spectral.bar_system(d, grid, p)
        til = spectral.tilde_system(d, grid, p)
        eig_by_d.append(worst_eig_d)
        bi_by_d.append(max(np.abs(bar.gram_raw_aux - np.eye(2)).max(),
                           abs(til.pairing_raw_aux - 1.0)))
    report.add_check("eigen-residuals", max(eig_by_d) <= 1e-7, max(eig_by_d), 1e-7)
    report.add_check("biorthogonality-raw", max(bi_by_d) <= 1e-6, max(bi_by_d), 1e-6)
    report.figure_paths += plots.spectral_figure(ds, eig_by_d, bi_by_d, outdir)

    rng = _rng(cfg)
    grid2 = make_grid(Params(p, m, n2))
    stable = True
    positive = True
    fitted = {}
    for d in ds:
        seed_d = int(rng.integers(2**32))
        c1, ok1 = _coercivity_fit(grid, p, d, samples, np.random.default_rng(seed_d))
        c2, ok2 = _coercivity_fit(grid2, p, d, samples, np.random.default_rng(seed_d))
        positive = positive and ok1 and ok2
        fitted[f"C0(d={d:+.2f}, n={n})"] = c1
        fitted[f"C0(d={d:+.2f}, n={n2})"] = c2
        stable = stable and abs(c1 - c2) / c1 <= 0.10
    report.fitted.update(fitted)
    report.add_check("coercivity-positive", positive, 1.0 if positive else 0.0, 1.0)
    report.add_check("coercivity-stable-10pct", stable, 1.0 if stable else 0.0, 1.0)


def _run_classify(cfg: ExperimentConfig, report: RunReport, outdir: Path):
    p = float(cfg.get("p", 3.0))
    mus = [float(v) for v in _as_list(cfg.get("mu", [0.0, 0.1, 1.0]))]
    xi_max = float(cfg.get("xi_max", 50.0))
    k0 = solitons.kappa0(p)
    rho0 = float(cfg.get("rho0", k0))
    drho0 = float(cfg.get("drho0", 0.0))

    for mu in mus:
        init = solitons.OdeState(rho_val=rho0, rho_deriv=drho0, mu=mu)
        if mu == 0.0:
            tf = solitons.classify_ode_integrate(init, 10.0, p)
            tb = solitons.classify_ode_integrate(init, -10.0, p)
            # locate the translate from the first integral being ~0 on the orbit
            xi0 = float(np.arccosh(np.clip((k0 / rho0) ** ((p - 1) / 2), 1.0, None)))
            if drho0 > 0:
                xi0 = -xi0
            err = max(np.abs(tf.rho_val - solitons.kbar(tf.xi + xi0, p)).max(),
                      np.abs(tb.rho_val - solitons.kbar(tb.xi + xi0, p)).max())
            report.add_check("kbar-translate-sup", err <= 1e-6, err, 1e-6,
                             "mu=0 shooting vs closed form over |xi|<=10")
            drift = max(tf.energy_drift, tb.energy_drift)
            traj = tf
        else:
            traj = solitons.classify_ode_integrate(init, xi_max, p)
            drift = traj.energy_drift
            report.add_check(f"min-rho(mu={mu:g})", traj.min_rho > 0.01,
                             traj.min_rho, 0.01, "observed lower bound, > is pass")
            report.fitted[f"eps0_observed(mu={mu:g})"] = traj.min_rho
        report.add_check(f"first-integral-drift(mu={mu:g})", drift <= 1e-8, drift, 1e-8)
        csv = outdir / f"ode_mu{mu:g}.csv"
        rows = ["xi,rho,drho,h,first_integral"]
        for i in range(len(traj.xi)):
            rows.append(",".join(f"{v:.17g}" for v in
                                 (traj.xi[i], traj.rho_val[i], traj.rho_deriv[i],
                                  traj.h_val[i], traj.first_integral[i])))
        csv.write_text("\n".join(rows) + "\n")
        report.series_paths.append(csv)
        report.figure_paths += plots.ode_figure(traj, outdir, prefix=f"ode_mu{mu:g}")


def _run_physical(cfg: ExperimentConfig, report: RunReport, outdir: Path):
    p = float(cfg.get("p", 3.0))
    m = int(cfg.get("m", 3))
    profile = str(cfg.get("profile", "ode-blowup"))
    nx = int(cfg.get("nx", 64))
    T = float(cfg.get("T", 1.0))
    rng = _rng(cfg)
    omega = _random_unit(m, rng)
    k0 = solitons.kappa0(p)

    if profile == "ode-blowup":
        x = evolution.uniform_grid(0.0, 1.0, nx)
        ex = 2.0 / (p - 1.0)
        u0 = np.tile(k0 * T ** (-ex) * omega, (nx, 1))
        ut0 = np.tile(k0 * ex * T ** (-ex - 1.0) * omega, (nx, 1))
        state = evolution.PhysicalState(x, u0, ut0, 0.0)
        traj = evolution.simulate_physical(
            state, p, t_end=T, dt_shrink=lambda t: 5e-4 * (T - t), amp_stop=1e3)
        exact = k0 * (T - traj.local_norm_times) ** (-ex)
        rel = np.abs(traj.local_norms[0.0] - exact) / exact
        report.add_check("ode-blowup-rel-err", rel.max() <= 1e-4, rel.max(), 1e-4)
        est = evolution.estimate_blowup(traj, 0.0)
        terr = abs(est.T_est - T) if est else float("inf")
        report.add_check("T-estimate", terr <= 1e-3, terr, 1e-3)
        T_plot = est.T_est if est else float("nan")
    elif profile == "gaussian":
        amp = float(cfg.get("amp", 5.0))
        half = float(cfg.get("half_width", 4.0))
        probes = [float(v) for v in _as_list(cfg.get("probes", [0.0, 0.05]))]
        x = evolution.uniform_grid(0.0, half, nx)
        u0 = amp * np.exp(-x * x)[:, None] * omega[None, :]
        state = evolution.PhysicalState(x, u0, np.zeros_like(u0), 0.0)
        traj = evolution.simulate_physical(state, p, t_end=10.0, probe_points=probes,
                                           amp_stop=1e3)
        ests = evolution.blowup_curve(traj, probes)
        if any(e is None for e in ests):
            report.add_check("blowup-detected", False, 0.0, 1.0)
            return
        slope = max(e.noncharacteristic_slope for e in ests)
        report.fitted["lipschitz_slope"] = slope
        tol = 1.0 + 20 * max(e.fit_quality for e in ests)
        report.add_check("T-lipschitz", slope <= tol, slope, tol,
                         "1-Lipschitz blow-up curve within fit error")
        est = ests[0]
        T_plot = est.T_est
    elif profile == "small":
        x = evolution.uniform_grid(0.0, 2.0, nx)
        u0 = 0.01 * np.exp(-4 * x * x)[:, None] * omega[None, :]
        state = evolution.PhysicalState(x, u0, np.zeros_like(u0), 0.0)
        traj = evolution.simulate_physical(state, p, t_end=float(cfg.get("t_end", 5.0)))
        peak = max(np.abs(s.u).max() for s in traj.snapshots)
        report.add_check("small-data-bounded", not traj.blew_up and peak < 1.0,
                         peak, 1.0)
        T_plot = float("nan")
    else:
        raise UsageError(f"unknown profile {profile!r}")

    csv = outdir / "amplitude.csv"
    rows = ["t,local_norm"]
    for t, a in zip(traj.local_norm_times, traj.local_norms[0.0]):
        rows.append(f"{t:.17g},{a:.17g}")
    csv.write_text("\n".join(rows) + "\n")
    report.series_paths.append(csv)
    report.figure_paths += plots.blowup_figure(traj.local_norm_times,
                                               traj.local_norms[0.0], T_plot, p, outdir)


def _run_selfsim(cfg: ExperimentConfig, report: RunReport, outdir: Path):
    p = float(cfg.get("p", 3.0))
    m = int(cfg.get("m", 3))
    n = int(cfg.get("n", 128))
    eps = float(cfg.get("eps", 1e-2))
    s_len = float(cfg.get("s_len", 20.0))
    d0 = float(cfg.get("d", 0.0))
    trials = int(cfg.get("trials", 1))
    refine = int(cfg.get("refine", 0))
    grid = make_grid(Params(p, m, n))
    seed0 = int(cfg.get("seed", 0))
    dt = cfg.get("dt")

    frame = modulation.SolitonFrame(d0, np.zeros(m - 1))
    base = modulation.soliton_state(frame, grid, p, m)
    worst_inc = 0.0
    traj = None
    for trial in range(trials):
        rng = np.random.default_rng(seed0 + trial)
        pert = modulation.generic_perturbation(grid, p, m, rng)
        init = evolution.SelfSimState(base.q1 + eps * pert.q1,
                                      base.q2 + eps * pert.q2, 0.0)
        tr = evolution.simulate_selfsim(init, s_len, grid, p,
                                        dt=float(dt) if dt else None,
                                        sample_ds=float(cfg.get("sample_ds", 0.1)))
        worst_inc = max(worst_inc, float(np.diff(tr.energy).max()) if len(tr.energy) > 1 else 0.0)
        if refine and trial == 0:
            fine = evolution.simulate_selfsim(init, s_len, grid, p, dt=tr.dt / 2,
                                              sample_ds=float(cfg.get("sample_ds", 0.1)))
            b0 = max(float(np.diff(tr.energy).max()), 0.0)
            b1 = max(float(np.diff(fine.energy).max()), 0.0)
            report.add_check("lyapunov-budget-order", b1 <= max(b0 / 8.0, 1e-12),
                             b1, max(b0 / 8.0, 1e-12),
                             "dt/2 divides the per-step budget at the integrator order")
        if trial == 0:
            traj = tr
    report.add_check("lyapunov-per-step", worst_inc <= 1e-6, max(worst_inc, 0.0), 1e-6,
                     f"worst positive E increment over {trials} trial(s)")
    report.fitted["dt"] = traj.dt
    if traj.aborted:
        report.fitted["abort"] = traj.abort_reason

    # modulate the sample ladder so the run emits the standard series schema
    rows_ok = True
    fr = frame
    mss = []
    for st in traj.samples:
        try:
            ms = modulation.modulate(st.as_hstate(), fr, grid, p)
        except modulation.ModulationError:
            rows_ok = False
            break
        fr = ms.frame
        mss.append((st, ms))
    if mss:
        series = modulation._series_from_rows([
            {"s": st.s, "E": solitons.energy(st.as_hstate(), grid, p),
             "q_norm": h_norm(ms.q, grid), "d": ms.frame.d, "lam": ms.frame.lam,
             "theta": ms.frame.theta.copy(), "alpha_1_1": ms.alpha_1_1,
             "alpha_minus": ms.alpha_minus.copy(),
             "R_minus": modulation.R_minus(ms.q.q1, ms.frame.d, grid, p),
             "dissipation": 0.0, "phi_residual": ms.phi_residual}
            for st, ms in mss], m)
        report.series_paths.append(emit_series(series, outdir / "series.csv"))
        report.figure_paths += plots.monitor_figures(series, outdir, prefix="selfsim")
    report.figure_paths += plots.energy_step_figure(traj.energy_s, traj.energy, outdir)
    if not rows_ok:
        report.fitted["modulation_truncated"] = 1.0


def _modulation_preflight(cfg, report, grid, p, m):
    """Exact-recovery, displacement and Jacobian checks ahead of a trapping run."""
    frame = modulation.SolitonFrame(0.2, 0.1 * np.ones(m - 1))
    v = modulation.soliton_state(frame, grid, p, m)
    ms = modulation.modulate(v, modulation.SolitonFrame(0.15, np.zeros(m - 1)), grid, p)
    rec = (abs(ms.frame.d - frame.d) + np.abs(ms.frame.theta - frame.theta).max()
           + h_norm(ms.q, grid))
    report.add_check("modulation-exact-recovery", rec <= 1e-10, rec, 1e-10)

    rng = _rng(cfg)
    guess = modulation.SolitonFrame(0.2, np.zeros(m - 1))
    base = modulation.soliton_state(guess, grid, p, m)
    pert = modulation.generic_perturbation(grid, p, m, rng)
    worst_phi, ks = 0.0, {}
    for eps in (1e-4, 1e-3, 1e-2):
        ms = modulation.modulate(HState(base.q1 + eps * pert.q1,
                                        base.q2 + eps * pert.q2), guess, grid, p)
        worst_phi = max(worst_phi, ms.phi_residual)
        ks[eps] = ms.displacement_from_guess / eps
        report.fitted[f"modulation K(eps={eps:g})"] = ks[eps]
    report.add_check("modulation-orthogonality", worst_phi <= 1e-10, worst_phi, 1e-10)
    spread = max(ks.values()) / min(ks.values())
    report.add_check("modulation-K-linear", spread <= 2.0, spread, 2.0)

    eps = 1e-3
    v = HState(base.q1 + eps * pert.q1, base.q2 + eps * pert.q2)
    ms = modulation.modulate(v, guess, grid, p)
    d, theta = ms.frame.d, ms.frame.theta
    h = 1e-6

    def phi_at(dv, tv):
        return modulation.Phi(v, modulation.SolitonFrame(dv, tv), grid, p)

    J = np.empty((m, m))
    J[:, 0] = (phi_at(d + h, theta) - phi_at(d - h, theta)) / (2 * h)
    for i in range(m - 1):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        J[:, i + 1] = (phi_at(d, tp) - phi_at(d, tm)) / (2 * h)
    pred_d = 2 * solitons.kappa0(p) / ((p - 1) * (1 - d * d))
    c = np.cos(theta)
    err = abs(J[0, 0] - pred_d)
    for i in range(1, m):
        pred = float(np.prod(c[i:])) if i < m - 1 else 1.0
        err = max(err, abs(abs(J[i, i]) - pred))
    err = max(err, float(np.abs(J - np.diag(np.diag(J))).max()) / max(pred_d, 1.0))
    tol = 5 * eps * max(pred_d, 1.0)
    report.add_check("modulation-jacobian-dominant-entries", err <= tol, err, tol)


def _run_trapping(cfg: ExperimentConfig, report: RunReport, outdir: Path):
    p = float(cfg.get("p", 3.0))
    m = int(cfg.get("m", 3))
    n = int(cfg.get("n", 128))
    eps_list = [float(v) for v in _as_list(cfg.get("eps", 1e-2))]
    d_star = float(cfg.get("d_star", 0.0))
    theta_star = np.asarray([float(v) for v in _as_list(cfg.get("theta_star", [0.0] * (m - 1)))])
    s_len = float(cfg.get("s_len", 20.0))
    grid = make_grid(Params(p, m, n))
    if int(cfg.get("modulation_checks", 1)):
        _modulation_preflight(cfg, report, grid, p, m)

    results = []
    for eps in eps_list:
        rng = _rng(cfg)
        pert = modulation.remainder_perturbation(grid, p, m, d_star, rng)
        res = modulation.trapping_experiment(d_star, theta_star, pert, eps, s_len,
                                             grid, p,
                                             sample_ds=float(cfg.get("sample_ds", 0.1)),
                                             escape_factor=float(cfg.get("escape_factor", 20.0)))
        results.append(res)
        tag = f"eps{eps:g}"
        report.series_paths.append(emit_series(res.series, outdir / f"series_{tag}.csv"))
        report.figure_paths += plots.monitor_figures(res.series, outdir, prefix=tag)
        report.fitted[f"mu_hat({tag})"] = res.mu_hat
        report.fitted[f"K({tag})"] = res.fitted_K
        report.fitted[f"verdict({tag})"] = res.verdict if not res.escape_cause \
            else f"{res.verdict}: {res.escape_cause}"
        report.add_check(f"decay-10x({tag})", res.decay_factor >= 10.0,
                         res.decay_factor, 10.0, "min over a length-10 window")
        report.add_check(f"mu-hat-negative-slope({tag})", res.mu_hat > 0.0,
                         res.mu_hat, 0.0, "fitted decay rate, reported not asserted to theory")
        worst_phi = float(res.series.phi_residual.max())
        report.add_check(f"orthogonality({tag})", worst_phi <= 1e-8, worst_phi, 1e-8)
        diag = modulation.monitor_dynamics(res.series, p)
        # the a/b sandwich is asserted while the energy hypothesis holds (its
        # standing assumption); the escape tail is reported, not asserted
        e_sol = solitons.soliton_energy(p, grid)
        valid = res.series.E >= e_sol - 1e-9
        report.add_check(f"b-sandwich({tag})", bool(diag.sandwich_ok[valid].all()),
                         float(diag.sandwich_ok[valid].mean()), 1.0,
                         f"full-series fraction {diag.sandwich_ok.mean():.3f}")
        report.add_check(f"monitor-drift({tag})", diag.bounded(3.0),
                         max(diag.drift_factors.values()), 3.0)
    if len(results) > 1:
        ks = [r.fitted_K for r in results]
        stable = max(ks) <= 3.0 * max(min(ks), 1e-12) or max(ks) <= 1e-6
        report.add_check("K-stable-across-eps", stable, max(ks) / max(min(ks), 1e-12), 3.0,
                         "frame displacement is quadratic in eps, so K may shrink")


_HANDLERS = {
    "stationary-check": _run_stationary,
    "spectral-check": _run_spectral,
    "rotation-check": _run_rotation,
    "classify-ode": _run_classify,
    "simulate-physical": _run_physical,
    "simulate-selfsim": _run_selfsim,
    "trapping": _run_trapping,
}


def run(config: ExperimentConfig) -> RunReport:
    """Execute one experiment; returns the report (also written to disk)."""
    outdir = Path(config.get("out", f"runs/{config.command}"))
    outdir.mkdir(parents=True, exist_ok=True)
    report = RunReport(command=config.command, config=dict(config.options))
    _HANDLERS[config.command](config, report, outdir)
    report.write(outdir)
    return report


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse
        return 0 if exc.code in (0, None) else 2
    try:
        report = run(config)
    except (UsageError, ValueError) as exc:
        # parameter-validation ValueErrors (|d| >= 1 and the like) are config
        # problems, not numerics
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (GridConstructionError, ResolventError, modulation.ModulationError,
            modulation.CoercivityError, OverflowError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(report.text())
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
