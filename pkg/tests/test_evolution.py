import numpy as np

from sswave.evolution import (PhysicalState, SelfSimState, estimate_blowup,
                              blowup_curve, physical_step, selfsim_rhs,
                              simulate_physical, simulate_selfsim, stable_dt,
                              to_selfsim, uniform_grid)
from sswave.solitons import energy, kappa, kappa0, soliton_energy
from sswave.space import HState, h_norm
from sswave.spectral import ScalarPair, apply_Lbar, apply_Ltilde


def ode_blowup_state(p, m, T, nx, half_width=1.0):
    x = uniform_grid(0.0, half_width, nx)
    ex = 2.0 / (p - 1.0)
    omega = np.zeros(m)
    omega[0] = 1.0
    k0 = kappa0(p)
    u = np.tile(k0 * T ** (-ex) * omega, (nx, 1))
    ut = np.tile(k0 * ex * T ** (-ex - 1) * omega, (nx, 1))
    return PhysicalState(x, u, ut, 0.0)


def test_zero_data_stays_zero():
    x = uniform_grid(0.0, 1.0, 32)
    state = PhysicalState(x, np.zeros((32, 2)), np.zeros((32, 2)), 0.0)
    for _ in range(50):
        state = physical_step(state, 0.9 * state.dx, 3.0)
    assert state.amplitude == 0.0


def test_ode_blowup_tracking_and_T_estimate():
    p, T = 3.0, 1.0
    state = ode_blowup_state(p, 3, T, 32)
    traj = simulate_physical(state, p, t_end=T, dt_shrink=lambda t: 5e-4 * (T - t),
                             amp_stop=1e3)
    assert traj.blew_up
    ex = 2.0 / (p - 1.0)
    exact = kappa0(p) * (T - traj.local_norm_times) ** (-ex)
    rel = np.abs(traj.local_norms[0.0] - exact) / exact
    assert rel.max() < 1e-4
    est = estimate_blowup(traj, 0.0)
    assert est is not None
    assert abs(est.T_est - T) < 1e-3


def test_no_growth_returns_none():
    x = uniform_grid(0.0, 2.0, 32)
    u = 0.01 * np.exp(-4 * x * x)[:, None] * np.array([1.0, 0.0])[None, :]
    state = PhysicalState(x, u, np.zeros_like(u), 0.0)
    traj = simulate_physical(state, 3.0, t_end=3.0)
    assert estimate_blowup(traj, 0.0) is None
    assert not traj.blew_up


def test_small_data_bounded():
    x = uniform_grid(0.0, 2.0, 64)
    u = 0.01 * np.exp(-4 * x * x)[:, None] * np.array([1.0, 0.0])[None, :]
    state = PhysicalState(x, u, np.zeros_like(u), 0.0)
    traj = simulate_physical(state, 3.0, t_end=5.0, snapshot_times=[1.0, 3.0, 5.0])
    peak = max(np.abs(s.u).max() for s in traj.snapshots)
    assert peak < 0.1


def test_blowup_time_lipschitz():
    # x-dependent blow-up: T(x0) estimates at nearby points differ by at most
    # the separation, within fit error
    p = 3.0
    x = uniform_grid(0.0, 4.0, 512)
    u = 3.0 * np.exp(-x * x)[:, None] * np.array([1.0, 0.0])[None, :]
    state = PhysicalState(x, u, np.zeros_like(u), 0.0)
    probes = [0.0, 0.1]
    traj = simulate_physical(state, p, t_end=3.0, probe_points=probes,
                             probe_width=0.05, amp_stop=5e2)
    ests = blowup_curve(traj, probes)
    assert all(e is not None for e in ests)
    gap = abs(ests[0].T_est - ests[1].T_est)
    tol = 0.1 + 5 * (ests[0].fit_quality + ests[1].fit_quality)
    assert gap <= tol


def test_to_selfsim_recovers_flat_profile(grid64):
    p, T = 3.0, 1.0
    state = ode_blowup_state(p, 3, T, 256, half_width=1.5)
    snap_times = list(T - np.geomspace(0.9, 0.05, 8))
    traj = simulate_physical(state, p, t_end=T, dt_shrink=lambda t: 1e-3 * (T - t),
                             amp_stop=1e4, snapshot_times=snap_times)
    states = to_selfsim(traj, 0.0, T, grid64, p)
    assert len(states) >= 4
    k0 = kappa0(p)
    for st in states:
        assert np.nanmax(np.abs(st.w[:, 0] - k0)) < 1e-2 * k0
        assert np.nanmax(np.abs(st.ws)) < 1e-2 * k0
    # uniform-bound monitor in the unweighted norms
    uw = grid64.unweighted_weights
    for st in states:
        dw = grid64.diff @ st.w
        h1 = np.sqrt(uw @ ((st.w**2).sum(1) + (dw**2).sum(1)))
        l2 = np.sqrt(uw @ (st.ws**2).sum(1))
        assert np.isfinite(h1) and np.isfinite(l2)
        assert h1 + l2 < 10.0


def test_selfsim_rhs_zero_and_stationary(grid128):
    p = 3.0
    z = np.zeros((grid128.n, 3))
    assert np.all(selfsim_rhs(SelfSimState(z, z, 0.0), grid128, p) == 0)
    for d in (0.0, 0.5, -0.7):
        w = kappa(d, grid128.nodes, p)[:, None] * np.array([1.0, 0, 0])[None, :]
        acc = selfsim_rhs(SelfSimState(w, np.zeros_like(w), 0.0), grid128, p)
        assert np.abs(acc).max() < 1e-8


def test_selfsim_rhs_linearization(grid64):
    # (rhs(kappa e1 + eps q) - rhs(kappa e1))/eps -> second row of the
    # linearized operators, coordinate-wise, with O(eps) error
    p, d = 3.0, 0.2
    y = grid64.nodes
    base = kappa(d, y, p)[:, None] * np.array([1.0, 0, 0])[None, :]
    q1 = np.column_stack([np.cos(2 * y), np.sin(y), y * (1 - y**2)])
    q2 = np.column_stack([np.sin(3 * y), np.cos(y), np.exp(-y)])
    errs = []
    for eps in (1e-4, 5e-5):
        st = SelfSimState(base + eps * q1, eps * q2, 0.0)
        fd = (selfsim_rhs(st, grid64, p) - selfsim_rhs(SelfSimState(base, 0 * q2, 0.0), grid64, p)) / eps
        lin = np.empty_like(fd)
        for j in range(3):
            op = apply_Lbar if j == 0 else apply_Ltilde
            lin[:, j] = op(d, ScalarPair(q1[:, j], q2[:, j]), grid64, p).second
        errs.append(np.abs(fd - lin).max())
    assert errs[0] < 1e-2
    assert errs[1] < 0.6 * errs[0]  # O(eps) convergence


def test_soliton_drift(grid128):
    # the lambda = 1 instability amplifies the discrete seed by e^s, so the
    # tight bound is only attainable over a moderate window; the s = 20 value
    # is recorded against the amplification-adjusted bound
    p = 3.0
    w = kappa(0.0, grid128.nodes, p)[:, None] * np.array([1.0, 0, 0])[None, :]
    init = SelfSimState(w, np.zeros_like(w), 0.0)
    traj = simulate_selfsim(init, 20.0, grid128, p, sample_ds=1.0)
    drift = {}
    for st in traj.samples:
        dq = HState(st.w - w, st.ws)
        drift[round(st.s)] = h_norm(dq, grid128)
    assert drift[12] < 1e-6
    assert drift[20] < 1e-3


def test_lyapunov_monotone_and_order(grid64, rng):
    p = 3.0
    w = kappa(0.0, grid64.nodes, p)[:, None] * np.array([1.0, 0, 0])[None, :]
    pert = 1e-2 * np.column_stack([np.cos(2 * grid64.nodes), np.sin(grid64.nodes),
                                   grid64.nodes])
    init = SelfSimState(w + pert, 1e-2 * np.column_stack(
        [np.sin(grid64.nodes), np.cos(3 * grid64.nodes), 0 * grid64.nodes]), 0.0)
    budgets = {}
    dt0 = stable_dt(grid64, p)
    for dt in (dt0, dt0 / 2):
        traj = simulate_selfsim(init, 5.0, grid64, p, dt=dt, sample_ds=0.5)
        inc = np.diff(traj.energy)
        budgets[dt] = max(inc.max(), 0.0)
        assert inc.max() <= 1e-6
    # refinement divides the budget at the integrator's order (floor at roundoff)
    assert budgets[dt0 / 2] <= max(budgets[dt0] / 8.0, 1e-12)


def test_energy_approaches_soliton_level(grid64, rng):
    # perturbed soliton decays toward the family energy before the unstable
    # mode re-grows
    p = 3.0
    w = kappa(0.0, grid64.nodes, p)[:, None] * np.array([1.0, 0, 0])[None, :]
    from sswave.modulation import remainder_perturbation
    pert = remainder_perturbation(grid64, p, 3, 0.0, rng)
    init = SelfSimState(w + 1e-2 * pert.q1, 1e-2 * pert.q2, 0.0)
    traj = simulate_selfsim(init, 6.0, grid64, p, sample_ds=0.5)
    e_ref = soliton_energy(p, grid64)
    gaps = np.abs(traj.energy - e_ref)
    assert gaps[-1] < 0.02 * gaps[0]
    assert np.all(np.diff(traj.energy) <= 1e-9)


def test_transform_consistency_residual_refines(grid64):
    # the transformed physical solution satisfies the self-similar equation;
    # the defect in d2w/ds2 shrinks under spatial refinement
    p, T = 3.0, 1.0
    defects = []
    for nx, ds in ((512, 0.05), (1024, 0.025)):
        state = ode_blowup_state(p, 2, T, nx, half_width=1.2)
        # bump the profile to make it genuinely x-dependent but smooth
        state = PhysicalState(state.x, state.u * (1 + 0.05 * np.cos(np.pi * state.x / 1.2))[:, None],
                              state.ut, 0.0)
        taus = np.exp(-np.arange(0.0, 0.15 + 3 * ds, ds))[::-1] * 0.9
        snap_times = list(T - taus)
        traj = simulate_physical(state, p, t_end=T, dt_shrink=lambda t: 2e-4 * (T - t),
                                 amp_stop=1e5, snapshot_times=snap_times)
        states = to_selfsim(traj, 0.0, T, grid64, p, n_ladder=len(snap_times))
        svals = np.array([st.s for st in states])
        i = len(states) // 2
        st = states[i]
        # centered second difference in s at fixed y
        h1 = svals[i + 1] - svals[i]
        h0 = svals[i] - svals[i - 1]
        wpp = (states[i + 1].w - (1 + h1 / h0) * st.w + (h1 / h0) * states[i - 1].w) \
            / (0.5 * h1 * (h0 + h1))
        acc = selfsim_rhs(st, grid64, p)
        mask = np.abs(grid64.nodes) < 0.8
        defects.append(np.abs(wpp - acc)[mask].max())
    assert defects[1] < 0.7 * defects[0]
    assert defects[1] < 0.1
