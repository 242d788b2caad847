"""Modulation around the soliton manifold and the trapping experiment.

A state v near the manifold is written v = R_theta [ (kappa(d,.) e_1, 0) + q ]
with (d, theta) fixed by orthogonality conditions that kill the zero modes of
the linearization: the bar zero-mode projection of the first coordinate of q
and the tilde zero-mode projection of every transverse coordinate vanish.
Newton's method solves those conditions; the dominant Jacobian diagonal is
known analytically and seeds the first step.

The trapping experiment evolves a perturbed soliton, re-modulates on a fixed
cadence, extracts the mode amplitudes, and reports decay rate, asymptotic
frame and regime bookkeeping.  Escape through the unstable eigenvalue-1 mode
is an expected outcome for artificial data once the energy condition fails;
the verdict records it rather than hiding it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import SelfSimState, simulate_selfsim
from .rotations import compose_R
from .solitons import energy, kappa, kappa0, soliton_energy
from .space import HState, WeightedGrid, h_norm
from .spectral import (ScalarPair, bar_system, decompose_bar, decompose_tilde,
                       form_bar, form_tilde, phi_pair, random_pair,
                       random_smooth_field, tilde_system)


class ModulationError(RuntimeError):
    """Newton failed to satisfy the orthogonality conditions; carries the residual."""


class CoercivityError(RuntimeError):
    """A remainder quadratic form came out negative: projection inconsistency."""


@dataclass
class SolitonFrame:
    """Modulation parameters (d, theta_2..theta_m)."""

    d: float
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if not abs(self.d) < 1:
            raise ValueError("|d| must be < 1")

    @property
    def lam(self) -> float:
        return float(np.arctanh(self.d))

    def rotation(self) -> np.ndarray:
        return compose_R(self.theta)

    def displacement(self, other: "SolitonFrame") -> float:
        """artanh-metric distance |lam - lam'| + |theta - theta'|_1."""
        return float(abs(self.lam - other.lam) + np.abs(self.theta - other.theta).sum())


@dataclass
class ModulatedState:
    frame: SolitonFrame
    q: HState
    alpha_1_1: float = 0.0
    alpha_minus: np.ndarray = None
    phi_residual: float = float("nan")
    newton_iters: int = 0
    regime_ok: bool = True
    displacement_from_guess: float = 0.0


@dataclass
class MonitorSeries:
    """Time-aligned diagnostics of a modulated trajectory."""

    s: np.ndarray
    E: np.ndarray
    q_norm: np.ndarray
    d: np.ndarray
    lam: np.ndarray
    theta: np.ndarray          # (k, m-1)
    alpha_1_1: np.ndarray
    alpha_minus: np.ndarray    # (k, m)
    a: np.ndarray
    b: np.ndarray
    R_minus: np.ndarray
    dissipation: np.ndarray
    phi_residual: np.ndarray

    def __len__(self):
        return len(self.s)

    @property
    def m(self):
        return self.theta.shape[1] + 1


def soliton_state(frame: SolitonFrame, grid: WeightedGrid, p, m) -> HState:
    """The manifold point R_theta (kappa(d,.) e_1, 0) as an HState."""
    R = frame.rotation()
    if R.shape[0] != m:
        raise ValueError("frame dimension does not match m")
    q1 = kappa(frame.d, grid.nodes, p)[:, None] * R[:, 0][None, :]
    return HState(q1, np.zeros_like(q1))


def Phi(v: HState, frame: SolitonFrame, grid: WeightedGrid, p) -> np.ndarray:
    """Orthogonality residual vector (bar component, then the m-1 tilde ones)."""
    R = frame.rotation()
    V1 = v.q1 @ R
    V2 = v.q2 @ R
    bar = bar_system(frame.d, grid, p)
    til = tilde_system(frame.d, grid, p)
    out = np.empty(v.m)
    out[0] = phi_pair(ScalarPair(V1[:, 0] - kappa(frame.d, grid.nodes, p), V2[:, 0]),
                      bar.W0, grid)
    for j in range(1, v.m):
        out[j] = phi_pair(ScalarPair(V1[:, j], V2[:, j]), til.W, grid)
    return out


def _initial_jacobian(frame: SolitonFrame, p, m) -> np.ndarray:
    # analytic dominant diagonal in (artanh d, theta) variables:
    # dPhi_bar/dlam = 2 kappa0/(p-1), and dPhi_tilde_i/dtheta_i =
    # -prod_{k>i} cos theta_k.  The sign follows from d(R^-1)/dtheta_i =
    # -A_i R^-1; only the magnitude appears in the invertibility bound.
    J = np.zeros((m, m))
    J[0, 0] = 2.0 * kappa0(p) / (p - 1.0)
    c = np.cos(frame.theta)
    for i in range(1, m):
        J[i, i] = -float(np.prod(c[i:])) if i < m - 1 else -1.0
    return J


def modulate(v: HState, guess: SolitonFrame, grid: WeightedGrid, p,
             tol=1e-11, max_iter=50, fd_step=1e-6) -> ModulatedState:
    """Solve the orthogonality conditions for (d, theta) near the guess.

    Damped Newton in (artanh d, theta) with a finite-difference Jacobian; the
    first step uses the analytic diagonal.  Raises ModulationError when the
    residual cannot be brought under tol.  The returned state flags the
    cos(theta) >= 1/2 regime.
    """
    m = v.m
    x = np.concatenate([[guess.lam], guess.theta])

    def residual(xv):
        return Phi(v, SolitonFrame(float(np.tanh(xv[0])), xv[1:]), grid, p)

    F = residual(x)
    iters = 0
    while np.abs(F).max() > tol and iters < max_iter:
        if iters == 0:
            J = _initial_jacobian(SolitonFrame(float(np.tanh(x[0])), x[1:]), p, m)
        else:
            J = np.empty((m, m))
            for k in range(m):
                xp = x.copy()
                xp[k] += fd_step
                J[:, k] = (residual(xp) - F) / fd_step
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise ModulationError(f"singular Jacobian, |Phi| = {np.abs(F).max():.3e}") from exc
        lam_damp = 1.0
        for _ in range(9):
            x_new = x - lam_damp * step
            F_new = residual(x_new)
            if np.abs(F_new).max() < np.abs(F).max():
                break
            lam_damp *= 0.5
        else:
            raise ModulationError(f"no descent, |Phi| = {np.abs(F).max():.3e}")
        x, F = x_new, F_new
        iters += 1
    res = float(np.abs(F).max())
    if res > tol * 10:
        raise ModulationError(f"Newton stalled after {iters} iterations, |Phi| = {res:.3e}")

    frame = SolitonFrame(float(np.tanh(x[0])), x[1:])
    R = frame.rotation()
    q1 = v.q1 @ R
    q2 = v.q2 @ R
    q1[:, 0] -= kappa(frame.d, grid.nodes, p)
    ms = ModulatedState(frame=frame, q=HState(q1, q2), phi_residual=res,
                        newton_iters=iters,
                        regime_ok=bool(np.all(np.cos(frame.theta) >= 0.5)),
                        displacement_from_guess=frame.displacement(guess))
    return extract_alphas(ms, grid, p)


def extract_alphas(ms: ModulatedState, grid: WeightedGrid, p) -> ModulatedState:
    """Fill the unstable coefficient and the remainder amplitudes of a modulated state.

    alpha_minus[0] comes from the bar form on the bar remainder; entries 1..m-1
    from the tilde form on the transverse coordinates.  A negative form value
    beyond roundoff indicates a projection bug and raises.
    """
    d = ms.frame.d
    m = ms.q.m
    scale = h_norm(ms.q, grid) ** 2
    alpha_minus = np.empty(m)
    pair1 = ScalarPair(ms.q.q1[:, 0], ms.q.q2[:, 0])
    _, a1, rem = decompose_bar(d, pair1, grid, p)
    val = form_bar(d, rem, rem, grid, p)
    if val < -1e-12 * max(scale, 1.0):
        raise CoercivityError(f"bar form negative on remainder: {val:.3e}")
    alpha_minus[0] = np.sqrt(max(val, 0.0))
    for j in range(1, m):
        pairj = ScalarPair(ms.q.q1[:, j], ms.q.q2[:, j])
        _, remj = decompose_tilde(d, pairj, grid, p)
        val = form_tilde(d, remj, remj, grid, p)
        if val < -1e-12 * max(scale, 1.0):
            raise CoercivityError(f"tilde form negative on remainder: {val:.3e}")
        alpha_minus[j] = np.sqrt(max(val, 0.0))
    ms.alpha_1_1 = a1
    ms.alpha_minus = alpha_minus
    return ms


def R_minus(q1, d, grid: WeightedGrid, p) -> float:
    """Quadrature of -F_d(q1) rho dy, the beyond-quadratic energy remainder."""
    q1 = np.atleast_2d(np.asarray(q1, dtype=float).T).T
    k = kappa(d, grid.nodes, p)
    full = q1.copy()
    full[:, 0] += k
    amp = np.linalg.norm(full, axis=1)
    F_d = (amp ** (p + 1.0) / (p + 1.0) - k ** (p + 1.0) / (p + 1.0)
           - k**p * q1[:, 0] - 0.5 * p * k ** (p - 1.0) * q1[:, 0] ** 2
           - 0.5 * k ** (p - 1.0) * (q1[:, 1:] ** 2).sum(axis=1))
    return -float(grid.weights @ F_d)


def energy_expansion_residual(ms: ModulatedState, grid: WeightedGrid, p) -> float:
    """Defect of E = E(kappa0,0) + (forms)/2 - int F_d rho on the modulated state."""
    d = ms.frame.d
    state = HState(ms.q.q1.copy(), ms.q.q2.copy())
    state.q1[:, 0] += kappa(d, grid.nodes, p)
    E = energy(state, grid, p)
    pair1 = ScalarPair(ms.q.q1[:, 0], ms.q.q2[:, 0])
    quad = form_bar(d, pair1, pair1, grid, p)
    for j in range(1, ms.q.m):
        pj = ScalarPair(ms.q.q1[:, j], ms.q.q2[:, j])
        quad += form_tilde(d, pj, pj, grid, p)
    rm = R_minus(ms.q.q1, d, grid, p)
    return E - soliton_energy(p, grid) - 0.5 * quad - rm


def _dissipation_integral(ms: ModulatedState, grid: WeightedGrid, p) -> float:
    d = ms.frame.d
    pair1 = ScalarPair(ms.q.q1[:, 0], ms.q.q2[:, 0])
    _, _, rem = decompose_bar(d, pair1, grid, p)
    dens = rem.second**2 + (ms.q.q2[:, 1:] ** 2).sum(axis=1)
    return float(grid.weights @ (dens / grid.one_minus_y2))


# ---------------------------------------------------------------------------
# perturbation builders
# ---------------------------------------------------------------------------

def generic_perturbation(grid: WeightedGrid, p, m, rng) -> HState:
    """Random smooth unit-norm HState with components along every mode."""
    q1 = np.column_stack([random_smooth_field(grid, rng) for _ in range(m)])
    q2 = np.column_stack([random_smooth_field(grid, rng) for _ in range(m)])
    q = HState(q1, q2)
    nrm = h_norm(q, grid)
    return HState(q.q1 / nrm, q.q2 / nrm)


def remainder_perturbation(grid: WeightedGrid, p, m, d, rng) -> HState:
    """Random smooth unit-norm HState in the stable remainder space at frame d.

    The first coordinate is projected off both bar modes (zero and unstable),
    the transverse coordinates off the tilde zero mode.
    """
    cols1, cols2 = [], []
    for j in range(m):
        pair = random_pair(grid, rng)
        if j == 0:
            _, _, rem = decompose_bar(d, pair, grid, p)
        else:
            _, rem = decompose_tilde(d, pair, grid, p)
        cols1.append(rem.first)
        cols2.append(rem.second)
    q = HState(np.column_stack(cols1), np.column_stack(cols2))
    nrm = h_norm(q, grid)
    return HState(q.q1 / nrm, q.q2 / nrm)


# ---------------------------------------------------------------------------
# trapping experiment and monitors
# ---------------------------------------------------------------------------

@dataclass
class TrappingResult:
    series: MonitorSeries
    verdict: str                 # "trapped" or "escaped"
    escape_cause: str
    mu_hat: float
    frame_inf: SolitonFrame
    decay_factor: float
    energy_condition_ok: bool
    min_energy_gap: float
    energy_first_violation_s: float
    displacement: float
    eps_star: float

    @property
    def fitted_K(self) -> float:
        return self.displacement / self.eps_star if self.eps_star > 0 else 0.0


def trapping_experiment(d_star, theta_star, perturbation: HState, eps_star,
                        s_len, grid: WeightedGrid, p, sample_ds=0.1,
                        escape_factor=20.0, dt=None) -> TrappingResult:
    """Evolve a perturbed soliton and re-modulate on the sample cadence.

    The perturbation is rescaled to eps_star in H, planted in the rotated
    frame, and evolved with the self-similar solver.  The run stops at regime
    exit: cos(theta) below 1/2, modulation failure, or the remainder norm
    passing escape_factor * eps_star (the operational stand-in for the
    2 K0 K1 eps* bound, whose constants are existential).
    """
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    m = perturbation.m
    frame0 = SolitonFrame(float(d_star), theta_star)
    base = soliton_state(frame0, grid, p, m)
    if eps_star > 0:
        nrm = h_norm(perturbation, grid)
        R = frame0.rotation()
        q1 = (perturbation.q1 * (eps_star / nrm)) @ R.T
        q2 = (perturbation.q2 * (eps_star / nrm)) @ R.T
    else:
        q1 = np.zeros_like(base.q1)
        q2 = np.zeros_like(base.q2)
    init = SelfSimState(base.q1 + q1, base.q2 + q2, 0.0)

    traj = simulate_selfsim(init, s_len, grid, p, dt=dt, sample_ds=sample_ds)

    rows = []
    cause = ""
    frame = frame0
    for st in traj.samples:
        try:
            ms = modulate(st.as_hstate(), frame, grid, p)
        except ModulationError as exc:
            cause = f"modulation failure at s={st.s:.2f}: {exc}"
            break
        frame = ms.frame
        qn = h_norm(ms.q, grid)
        rows.append({
            "s": st.s,
            "E": energy(st.as_hstate(), grid, p),
            "q_norm": qn,
            "d": ms.frame.d,
            "lam": ms.frame.lam,
            "theta": ms.frame.theta.copy(),
            "alpha_1_1": ms.alpha_1_1,
            "alpha_minus": ms.alpha_minus.copy(),
            "R_minus": R_minus(ms.q.q1, ms.frame.d, grid, p),
            "dissipation": _dissipation_integral(ms, grid, p),
            "phi_residual": ms.phi_residual,
        })
        if not ms.regime_ok:
            cause = f"cos(theta) regime exit at s={st.s:.2f}"
            break
        if eps_star > 0 and qn > escape_factor * eps_star:
            cause = f"remainder norm {qn:.3e} beyond {escape_factor:g} * eps at s={st.s:.2f}"
            break
    if traj.aborted and not cause:
        cause = traj.abort_reason

    series = _series_from_rows(rows, m)
    E_sol = soliton_energy(p, grid)
    gap = float((series.E - E_sol).min()) if len(series) else float("nan")
    viol = series.E - E_sol < -1e-9
    first_viol = float(series.s[np.argmax(viol)]) if viol.any() else float("nan")
    mu_hat, decay_factor = _decay_fit(series)
    frame_inf = SolitonFrame(series.d[-1], series.theta[-1]) if len(series) else frame0
    displacement = frame_inf.displacement(frame0)
    return TrappingResult(
        series=series,
        verdict="escaped" if cause else "trapped",
        escape_cause=cause,
        mu_hat=mu_hat,
        frame_inf=frame_inf,
        decay_factor=decay_factor,
        energy_condition_ok=bool(gap >= -1e-9) if len(series) else False,
        min_energy_gap=gap,
        energy_first_violation_s=first_viol,
        displacement=displacement,
        eps_star=float(eps_star),
    )


def _series_from_rows(rows, m) -> MonitorSeries:
    if not rows:
        z = np.zeros(0)
        return MonitorSeries(z, z, z, z, z, np.zeros((0, m - 1)), z,
                             np.zeros((0, m)), z, z, z, z, z)
    def col(k):
        return np.array([r[k] for r in rows])
    alpha_minus = np.vstack([r["alpha_minus"] for r in rows])
    a = col("alpha_1_1") ** 2
    b = (alpha_minus**2).sum(axis=1) + col("R_minus")
    return MonitorSeries(
        s=col("s"), E=col("E"), q_norm=col("q_norm"), d=col("d"), lam=col("lam"),
        theta=np.vstack([r["theta"] for r in rows]), alpha_1_1=col("alpha_1_1"),
        alpha_minus=alpha_minus, a=a, b=b, R_minus=col("R_minus"),
        dissipation=col("dissipation"), phi_residual=col("phi_residual"))


def _decay_fit(series: MonitorSeries):
    """Negative fitted slope of log|q| on the decay segment and the best
    start-to-minimum contraction over a window of length 10 (or the run)."""
    if len(series) < 3:
        return float("nan"), 1.0
    q = series.q_norm
    s = series.s
    i_min = int(np.argmin(q))
    if i_min < 2:
        return float("nan"), 1.0
    slope = np.polyfit(s[: i_min + 1], np.log(q[: i_min + 1]), 1)[0]
    best = 1.0
    for i in range(len(q)):
        in_win = (s >= s[i]) & (s <= s[i] + 10.0)
        best = max(best, q[i] / q[in_win].min())
    return float(-slope), float(best)


@dataclass
class DynamicsDiagnostics:
    """Ratio monitors of the parameter dynamics along a modulated trajectory."""

    s: np.ndarray
    theta_rate_ratio: np.ndarray      # |theta'| / |q|^2
    lam_rate_ratio: np.ndarray        # |lam'| / |q|^2
    alpha_gap_ratio: np.ndarray       # |alpha' - alpha| / |q|^2
    r_minus_ratio: np.ndarray         # |R_-| / |q|^(1+pbar)
    barrier_ratio: np.ndarray         # alpha_1_1 / (sum of alpha_minus)
    sandwich_ok: np.ndarray           # Eq-235-style bound at each sample
    drift_factors: dict               # per-ratio late/early sup factors

    def bounded(self, max_drift=3.0) -> bool:
        return all(f <= max_drift for f in self.drift_factors.values())


def monitor_dynamics(series: MonitorSeries, p) -> DynamicsDiagnostics:
    """Centered-difference rate monitors and the a/b sandwich along a run.

    All constants here are fitted outputs, never asserted against
    theory-side values; `drift_factors` compares the sup of each ratio over the late half
    of the run with the early half, after dropping a short transient.
    """
    if len(series) < 5:
        raise ValueError("series too short to differentiate")
    s, q2 = series.s, series.q_norm**2
    ds = np.gradient(s)

    def rate(x):
        return np.abs(np.gradient(x, s))

    theta_rate = np.abs(np.gradient(series.theta, s, axis=0)).sum(axis=1)
    lam_rate = rate(series.lam)
    alpha_rate = np.abs(np.gradient(series.alpha_1_1, s) - series.alpha_1_1)
    pbar = min(p, 2.0)

    theta_ratio = theta_rate / q2
    lam_ratio = lam_rate / q2
    alpha_ratio = alpha_rate / q2
    rm_ratio = np.abs(series.R_minus) / series.q_norm ** (1.0 + pbar)
    denom = series.alpha_minus.sum(axis=1) + 1e-300
    barrier = series.alpha_1_1 / denom

    am2 = (series.alpha_minus**2).sum(axis=1)
    lo = 0.99 * am2 - 0.01 * series.a
    hi = 1.01 * am2 + 0.01 * series.a
    sandwich = (series.b >= lo - 1e-300) & (series.b <= hi + 1e-300)

    k0 = max(2, len(series) // 10)
    half = (len(series) + k0) // 2
    drift = {}
    for name, arr in (("theta", theta_ratio), ("lam", lam_ratio),
                      ("alpha", alpha_ratio), ("R_minus", rm_ratio)):
        early = np.nanmax(arr[k0:half]) if half > k0 else np.nan
        late = np.nanmax(arr[half:]) if half < len(arr) else np.nan
        # scale-aware floor: differentiation roundoff on a flat series must
        # not register as drift
        floor = 1e-8 + 1e-6 * float(np.nanmax(arr))
        drift[name] = float(max(late, floor) / max(early, floor))
    return DynamicsDiagnostics(
        s=s, theta_rate_ratio=theta_ratio, lam_rate_ratio=lam_ratio,
        alpha_gap_ratio=alpha_ratio, r_minus_ratio=rm_ratio,
        barrier_ratio=barrier, sandwich_ok=sandwich, drift_factors=drift)
