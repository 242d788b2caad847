"""Time integration of the physical wave equation and its self-similar form.

The physical solver is a velocity-Verlet leapfrog on a uniform periodic grid
with a second-order stencil; finite propagation speed means the domain only
has to contain the backward cone of the point under study.  The self-similar
solver is method-of-lines RK4 on the collocation grid; the step size comes
from the measured spectral radius of the frozen linearization, which stays
O(n) because the degenerate (1-y^2) factor tames the boundary clustering.

Blow-up times are estimated by fitting the known rate exponent -2/(p-1),
never read off an amplitude threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.optimize import minimize_scalar

from .solitons import energy
from .space import HState, WeightedGrid

AMPLITUDE_OVERFLOW = 1.0e6


@dataclass
class PhysicalState:
    """Fields u, ut on a uniform x-grid at time t (periodic in x)."""

    x: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    t: float

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float).T).T
        self.ut = np.atleast_2d(np.asarray(self.ut, dtype=float).T).T

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def amplitude(self):
        return float(np.abs(self.u).max())


@dataclass
class PhysicalTrajectory:
    """Recorded run: dense amplitude series plus snapshots for transforms."""

    p: float
    times: np.ndarray
    snapshots: list
    sample_times: np.ndarray
    local_norm_times: np.ndarray
    local_norms: dict          # x0 -> series of windowed L2 means
    linear_energy: np.ndarray
    blew_up: bool


@dataclass
class BlowupEstimate:
    x0: float
    T_est: float
    fit_quality: float
    noncharacteristic_slope: float = float("nan")


@dataclass
class SelfSimState:
    """Fields (w, ws) on the collocation grid at self-similar time s."""

    w: np.ndarray
    ws: np.ndarray
    s: float

    def __post_init__(self):
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float).T).T
        self.ws = np.atleast_2d(np.asarray(self.ws, dtype=float).T).T

    def as_hstate(self):
        return HState(self.w, self.ws)


def uniform_grid(center, half_width, nx):
    """Periodic uniform grid wide enough to contain a backward cone."""
    return np.linspace(center - half_width, center + half_width, nx, endpoint=False)


def _accel(u, dx, p):
    uxx = (np.roll(u, -1, axis=0) - 2.0 * u + np.roll(u, 1, axis=0)) / dx**2
    amp = np.linalg.norm(u, axis=1)
    return uxx + (amp ** (p - 1.0))[:, None] * u


def physical_step(state: PhysicalState, dt, p) -> PhysicalState:
    """One velocity-Verlet step of u_tt = u_xx + |u|^(p-1) u.

    The caller owns the CFL constraint dt <= 0.9 dx.  Raises OverflowError
    once the amplitude passes the blow-up threshold.
    """
    if state.amplitude > AMPLITUDE_OVERFLOW or not np.isfinite(state.u).all():
        raise OverflowError("amplitude overflow: blow-up reached")
    a0 = _accel(state.u, state.dx, p)
    u1 = state.u + dt * state.ut + 0.5 * dt * dt * a0
    a1 = _accel(u1, state.dx, p)
    ut1 = state.ut + 0.5 * dt * (a0 + a1)
    return PhysicalState(state.x, u1, ut1, state.t + dt)


def simulate_physical(state: PhysicalState, p, t_end, cfl=0.9,
                      dt_shrink=None, probe_points=(0.0,), probe_width=0.1,
                      snapshot_times=(), amp_stop=1.0e3) -> PhysicalTrajectory:
    """Drive the leapfrog until t_end, blow-up threshold, or overflow.

    dt is min(cfl*dx, dt_shrink(t)) when a shrink schedule is given; near a
    known blow-up time pass dt_shrink = lambda t: c*(T - t) to hold relative
    accuracy while the solution grows.  Windowed L2 norms around each probe
    point are recorded every step; full snapshots at the requested times.
    """
    snapshot_times = sorted(snapshot_times)
    snaps, times, norms = [], [], {x0: [] for x0 in probe_points}
    elin = []
    masks = {x0: np.abs(state.x - x0) <= probe_width for x0 in probe_points}
    blew_up = False
    next_snap = 0
    while True:
        times.append(state.t)
        for x0, msk in masks.items():
            norms[x0].append(float(np.sqrt((state.u[msk] ** 2).sum(axis=1).mean())))
        ux = (np.roll(state.u, -1, 0) - np.roll(state.u, 1, 0)) / (2 * state.dx)
        elin.append(float(0.5 * ((state.ut**2).sum(1) + (ux**2).sum(1)).mean()))
        while next_snap < len(snapshot_times) and state.t >= snapshot_times[next_snap] - 1e-12:
            snaps.append(PhysicalState(state.x, state.u.copy(), state.ut.copy(), state.t))
            next_snap += 1
        if state.t >= t_end or state.amplitude >= amp_stop:
            break
        dt = cfl * state.dx
        if dt_shrink is not None:
            dt = min(dt, dt_shrink(state.t))
        try:
            state = physical_step(state, dt, p)
        except OverflowError:
            blew_up = True
            break
    if state.amplitude >= amp_stop:
        blew_up = True
    if not snaps:
        snaps.append(state)
    return PhysicalTrajectory(
        p=p, times=np.asarray(times), snapshots=snaps,
        sample_times=np.asarray([s.t for s in snaps]),
        local_norm_times=np.asarray(times),
        local_norms={k: np.asarray(v) for k, v in norms.items()},
        linear_energy=np.asarray(elin), blew_up=blew_up)


def estimate_blowup(traj: PhysicalTrajectory, x0, growth_factor=10.0):
    """Fit T in log||u|| ~ c - (2/(p-1)) log(T - t) on the growth window.

    Returns None when no growth is detected.  The fit quality is the RMS
    residual of the linearized model over the window.
    """
    if x0 not in traj.local_norms:
        raise KeyError(f"no probe recorded at x0={x0}")
    t = traj.local_norm_times
    a = traj.local_norms[x0]
    if a.max() < growth_factor * max(a[0], 1e-30):
        return None
    mask = a > growth_factor * a[0]
    lt, la = t[mask], np.log(a[mask])
    ex = 2.0 / (traj.p - 1.0)

    def resid(T_try):
        z = la + ex * np.log(T_try - lt)
        return float(((z - z.mean()) ** 2).sum())

    t_last = lt[-1]
    span = max(t_last - lt[0], 1e-6)
    res = minimize_scalar(resid, bounds=(t_last + 1e-12, t_last + 10 * span),
                          method="bounded", options={"xatol": 1e-12})
    rms = np.sqrt(resid(res.x) / len(lt))
    return BlowupEstimate(x0=x0, T_est=float(res.x), fit_quality=float(rms))


def blowup_curve(traj: PhysicalTrajectory, x0s):
    """Per-point estimates with the local Lipschitz slope of T(.) filled in."""
    ests = [estimate_blowup(traj, x0) for x0 in x0s]
    for i, e in enumerate(ests):
        if e is None:
            continue
        nb = [(abs(x0s[j] - e.x0), ests[j]) for j in range(len(ests))
              if j != i and ests[j] is not None]
        if nb:
            dist, other = min(nb, key=lambda z: z[0])
            e.noncharacteristic_slope = abs(other.T_est - e.T_est) / dist
    return ests


def to_selfsim(traj: PhysicalTrajectory, x0, T_est, grid: WeightedGrid, p,
               n_ladder=8, s_min=None):
    """Transform snapshots into self-similar states on the collocation grid.

    Picks up to n_ladder snapshots geometrically spaced in (T - t), cubically
    interpolates u, ut and u_x at x = x0 + y (T - t), and applies the exact
    chain rule for the s-derivative.  Points outside the stored x-domain are
    masked with NaN (outside the light cone of the recorded data).
    """
    snaps = [s for s in traj.snapshots if s.t < T_est]
    if not snaps:
        raise ValueError("no snapshots before the estimated blow-up time")
    taus = np.array([T_est - s.t for s in snaps])
    order = np.argsort(taus)[::-1]
    # geometric ladder in (T - t): uniform steps in s
    chosen = []
    want = np.geomspace(taus.max(), taus.min(), min(n_ladder, len(snaps)))
    used = set()
    for wv in want:
        i = int(order[np.argmin(np.abs(np.log(taus[order]) - np.log(wv)))])
        if i not in used:
            used.add(i)
            chosen.append(snaps[i])
    out = []
    ex = 2.0 / (p - 1.0)
    for snap in chosen:
        tau = T_est - snap.t
        s_val = -np.log(tau)
        if s_min is not None and s_val < s_min:
            continue
        xq = x0 + grid.nodes * tau
        w = np.empty((grid.n, snap.u.shape[1]))
        ws = np.empty_like(w)
        inside = (xq >= snap.x[0]) & (xq <= snap.x[-1])
        for j in range(snap.u.shape[1]):
            spl_u = make_interp_spline(snap.x, snap.u[:, j], k=3)
            spl_ut = make_interp_spline(snap.x, snap.ut[:, j], k=3)
            uq = spl_u(xq)
            utq = spl_ut(xq)
            uxq = spl_u.derivative()(xq)
            w[:, j] = tau**ex * uq
            ws[:, j] = -ex * w[:, j] + tau ** (ex + 1.0) * (utq - grid.nodes * uxq)
        w[~inside] = np.nan
        ws[~inside] = np.nan
        out.append(SelfSimState(w, ws, float(s_val)))
    out.sort(key=lambda st: st.s)
    return out


# ---------------------------------------------------------------------------
# self-similar solver
# ---------------------------------------------------------------------------

def selfsim_rhs(state: SelfSimState, grid: WeightedGrid, p):
    """Acceleration of the self-similar flow at the nodes.

    d2w/ds2 = L w - 2(p+1)/(p-1)^2 w + |w|^(p-1) w - (p+3)/(p-1) ws - 2 y d(ws)/dy
    """
    w, ws = state.w, state.ws
    amp = np.linalg.norm(w, axis=1)
    Lw = (grid.one_minus_y2[:, None] * (grid.diff2 @ w)
          - 2.0 * (p + 1.0) / (p - 1.0) * grid.nodes[:, None] * (grid.diff @ w))
    return (Lw - 2.0 * (p + 1.0) / (p - 1.0) ** 2 * w + (amp ** (p - 1.0))[:, None] * w
            - (p + 3.0) / (p - 1.0) * ws - 2.0 * grid.nodes[:, None] * (grid.diff @ ws))


def stable_dt(grid: WeightedGrid, p, safety=0.5) -> float:
    """RK4 step from the spectral radius of the frozen linearization at d = 0."""

    def build():
        from .spectral import psi_bar, psi_tilde
        n = grid.n
        radius = 0.0
        for psi in (psi_bar(0.0, grid.nodes, p), psi_tilde(0.0, grid.nodes, p)):
            M = (grid.one_minus_y2[:, None] * grid.diff2
                 - 2.0 * (p + 1.0) / (p - 1.0) * grid.nodes[:, None] * grid.diff
                 + np.diag(psi))
            B = -(p + 3.0) / (p - 1.0) * np.eye(n) - 2.0 * grid.nodes[:, None] * grid.diff
            A = np.zeros((2 * n, 2 * n))
            A[:n, n:] = np.eye(n)
            A[n:, :n] = M
            A[n:, n:] = B
            radius = max(radius, float(np.abs(np.linalg.eigvals(A)).max()))
        return 2.8 / radius

    from .spectral import _cache_get
    return safety * _cache_get(grid, ("stable_dt", p), build)


def _rk4_step(w, ws, dt, grid, p):
    # inlined RHS: no dataclass churn in the inner loop
    def rhs(wv, wsv):
        amp = np.linalg.norm(wv, axis=1)
        Lw = (grid.one_minus_y2[:, None] * (grid.diff2 @ wv)
              - 2.0 * (p + 1.0) / (p - 1.0) * grid.nodes[:, None] * (grid.diff @ wv))
        return (Lw - 2.0 * (p + 1.0) / (p - 1.0) ** 2 * wv
                + (amp ** (p - 1.0))[:, None] * wv
                - (p + 3.0) / (p - 1.0) * wsv - 2.0 * grid.nodes[:, None] * (grid.diff @ wsv))

    k1w, k1v = ws, rhs(w, ws)
    k2w, k2v = ws + 0.5 * dt * k1v, rhs(w + 0.5 * dt * k1w, ws + 0.5 * dt * k1v)
    k3w, k3v = ws + 0.5 * dt * k2v, rhs(w + 0.5 * dt * k2w, ws + 0.5 * dt * k2v)
    k4w, k4v = ws + dt * k3v, rhs(w + dt * k3w, ws + dt * k3v)
    return (w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w),
            ws + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


@dataclass
class SelfSimTrajectory:
    samples: list                      # SelfSimState at the sample ladder
    energy_s: np.ndarray               # s at every step
    energy: np.ndarray                 # E at every step
    dt: float
    aborted: bool = False
    abort_reason: str = ""


def simulate_selfsim(initial: SelfSimState, s_len, grid: WeightedGrid, p,
                     dt=None, sample_ds=0.1, amp_stop=100.0) -> SelfSimTrajectory:
    """Method-of-lines RK4 run of length s_len with E recorded each step.

    The base dt comes from the frozen-linearization stability estimate; each
    sample segment then sub-steps with dt shrunk against the instantaneous
    amplitude, since the nonlinear oscillation frequency grows like
    sqrt(p) |w|^((p-1)/2) once a trajectory escapes toward blow-up.  The run
    stops at amp_stop: past ~100 the concentrating bump of an escaping
    trajectory is narrower than the node spacing at desk-scale n, and no step
    size preserves fidelity beyond that point.  Aborts with diagnostics when
    the state leaves the finite range.
    """
    dt_base = stable_dt(grid, p) if dt is None else float(dt)
    n_samples = int(round(s_len / sample_ds))
    w, ws = initial.w.copy(), initial.ws.copy()
    s = initial.s
    samples = [SelfSimState(w.copy(), ws.copy(), s)]
    es, ev = [s], [energy(HState(w, ws), grid, p)]
    aborted, reason = False, ""
    for k in range(n_samples):
        s_target = initial.s + (k + 1) * sample_ds
        while s < s_target - 1e-12:
            amp = float(np.abs(w).max())
            dt_nl = 1.2 / (np.sqrt(p) * (2.0 * amp + 1e-300) ** ((p - 1.0) / 2.0))
            dt_now = min(dt_base, dt_nl, s_target - s)
            w, ws = _rk4_step(w, ws, dt_now, grid, p)
            s += dt_now
            es.append(s)
            ev.append(energy(HState(w, ws), grid, p))
            if not np.isfinite(w).all() or np.abs(w).max() > amp_stop:
                aborted = True
                reason = f"instability or blow-up at s={s:.3f}, max|w|={np.abs(w).max():.3e}"
                break
        samples.append(SelfSimState(w.copy(), ws.copy(), s))
        if aborted:
            break
    return SelfSimTrajectory(samples=samples, energy_s=np.asarray(es),
                             energy=np.asarray(ev), dt=dt_base,
                             aborted=aborted, abort_reason=reason)
