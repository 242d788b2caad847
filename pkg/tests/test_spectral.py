import numpy as np
import pytest

from sswave.solitons import kappa, kappa0
from sswave.space import HState, Params, make_grid
from sswave.spectral import (F_bar, F_tilde, ScalarPair, W_bar, W_tilde,
                             apply_L_full, apply_Lbar, apply_Lbar_adjoint,
                             apply_Ltilde, apply_Ltilde_adjoint, bar_system,
                             cbar_const, ctilde_const, decompose_bar,
                             decompose_tilde, form_bar, form_tilde, phi_pair,
                             project_bar, project_tilde, psi_bar, psi_tilde,
                             random_bar_remainder, random_pair,
                             random_tilde_remainder, tilde_system,
                             w2_prefactor_mismatch)

D_SWEEP = (0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9)


def pair_norm(pair, grid):
    return np.sqrt(phi_pair(pair, pair, grid))


def test_psi_values_at_d0(grid64):
    p = 3.0
    y = grid64.nodes
    # kappa0^(p-1) = 2(p+1)/(p-1)^2 makes psi_tilde vanish at d=0
    assert np.abs(psi_bar(0.0, y, p) - 2 * (p + 1) / (p - 1)).max() < 1e-13
    assert np.abs(psi_tilde(0.0, y, p)).max() < 1e-13
    d = 0.4
    diff = psi_bar(d, y, p) - psi_tilde(d, y, p)
    assert np.allclose(diff, (p - 1) * kappa(d, y, p) ** (p - 1), rtol=1e-13)
    assert np.all(diff > 0)


def test_eigenfunctions_at_d0(grid64):
    F0 = F_bar(0.0, 0, grid64, 3.0)
    assert np.allclose(F0.first, grid64.nodes, atol=1e-14)
    assert np.all(F0.second == 0)
    F1 = F_bar(0.0, 1, grid64, 3.0)
    assert np.allclose(F1.first, 1.0) and np.allclose(F1.second, 1.0)
    Ft = F_tilde(0.0, grid64, 3.0)
    assert np.allclose(Ft.first, kappa0(3.0))


@pytest.mark.parametrize("d", D_SWEEP)
def test_eigen_residuals(grid128, d):
    p = 3.0
    for lam in (0, 1):
        F = F_bar(d, lam, grid128, p)
        out = apply_Lbar(d, F, grid128, p)
        res = ScalarPair(out.first - lam * F.first, out.second - lam * F.second)
        assert pair_norm(res, grid128) < 1e-7
    Ft = F_tilde(d, grid128, p)
    out = apply_Ltilde(d, Ft, grid128, p)
    assert pair_norm(out, grid128) < 1e-7


def test_eigenfunction_norm_bounds(grid64):
    # fitted version of the norm bounds: ||F|| in [1/C, C] and
    # (1-d^2) ||dF/dd|| bounded over the d sweep
    p, h = 3.0, 1e-6
    worst = 0.0
    for d in D_SWEEP:
        for lam in (0, 1):
            F = F_bar(d, lam, grid64, p)
            nrm = pair_norm(F, grid64)
            assert 0.05 < nrm < 20.0
            Fp = F_bar(d + h, lam, grid64, p)
            Fm = F_bar(d - h, lam, grid64, p)
            dF = ScalarPair((Fp.first - Fm.first) / (2 * h),
                            (Fp.second - Fm.second) / (2 * h))
            worst = max(worst, (1 - d * d) * pair_norm(dF, grid64))
        Ft = F_tilde(d, grid64, p)
        assert 0.05 < pair_norm(Ft, grid64) < 20.0
    assert worst < 50.0


def test_normalizing_constants_closed_form(grid64):
    # p=3: 1/cbar_1 = 4 * int rho = 16/3 and 1/ctilde = 8
    assert 1.0 / cbar_const(1, 3.0) == pytest.approx(16.0 / 3.0, rel=1e-14)
    assert ctilde_const(3.0) == pytest.approx(1.0 / 8.0, rel=1e-14)


@pytest.mark.parametrize("d", D_SWEEP)
def test_raw_biorthogonality_certificates(grid128, d):
    p = 3.0
    bar = bar_system(d, grid128, p)
    assert np.abs(bar.gram_raw_aux - np.eye(2)).max() < 1e-6
    til = tilde_system(d, grid128, p)
    assert abs(til.pairing_raw_aux - 1.0) < 1e-6


def test_prefactor_variant_resolution(grid64):
    # the (1-d^2) prefactor normalizes exactly; (1-d) misses by (1+d)^(1/(p-1))
    p = 3.0
    for d in (0.3, 0.6, -0.5):
        pairs = w2_prefactor_mismatch(d, grid64, p)
        assert abs(pairs["1-d2"] - 1.0) < 1e-10
        assert pairs["1-d"] == pytest.approx((1 + d) ** (-1 / (p - 1)), rel=1e-10)


@pytest.mark.parametrize("d", (0.0, 0.5, -0.8))
def test_corrected_projectors_are_biorthogonal(grid64, d):
    p = 3.0
    for lam in (0, 1):
        for mu in (0, 1):
            got = project_bar(d, lam, F_bar(d, mu, grid64, p), grid64, p)
            assert got == pytest.approx(1.0 if lam == mu else 0.0, abs=5e-12)
    assert project_tilde(d, F_tilde(d, grid64, p), grid64, p) == pytest.approx(1.0, abs=5e-12)


def test_decompose_bar(grid64, rng):
    p, d = 3.0, 0.25
    F1 = F_bar(d, 1, grid64, p)
    a0, a1, rem = decompose_bar(d, F1, grid64, p)
    assert abs(a0) < 1e-11 and a1 == pytest.approx(1.0, abs=1e-11)
    assert pair_norm(rem, grid64) < 1e-10

    z = ScalarPair(np.zeros(grid64.n), np.zeros(grid64.n))
    assert decompose_bar(d, z, grid64, p)[:2] == (0.0, 0.0)

    r = random_pair(grid64, rng)
    a0, a1, rem = decompose_bar(d, r, grid64, p)
    F0 = F_bar(d, 0, grid64, p)
    re1 = a0 * F0.first + a1 * F1.first + rem.first
    re2 = a0 * F0.second + a1 * F1.second + rem.second
    scale = pair_norm(r, grid64)
    assert np.abs(re1 - r.first).max() < 1e-10 * scale
    assert np.abs(re2 - r.second).max() < 1e-10 * scale
    # re-projection of the remainder vanishes
    assert abs(project_bar(d, 0, rem, grid64, p)) < 1e-8 * scale
    assert abs(project_bar(d, 1, rem, grid64, p)) < 1e-8 * scale


def test_decompose_tilde(grid64, rng):
    p, d = 3.0, -0.4
    r = random_pair(grid64, rng)
    a0, rem = decompose_tilde(d, r, grid64, p)
    assert abs(project_tilde(d, rem, grid64, p)) < 1e-8 * max(1.0, abs(a0))
    Ft = F_tilde(d, grid64, p)
    assert np.abs(a0 * Ft.first + rem.first - r.first).max() < 1e-10 * pair_norm(r, grid64)


@pytest.mark.parametrize("d", D_SWEEP)
def test_forms_coercive_on_remainder(grid64, d, rng):
    p = 3.0
    for _ in range(20):
        rem = random_bar_remainder(d, grid64, p, rng)
        val = form_bar(d, rem, rem, grid64, p)
        assert val > 0
        nrm2 = phi_pair(rem, rem, grid64)
        assert 1e-3 < val / nrm2 < 1e3
        rem = random_tilde_remainder(d, grid64, p, rng)
        val = form_tilde(d, rem, rem, grid64, p)
        assert val > 0


def test_form_symmetry_and_norm_equivalence(grid64, rng):
    p, d = 3.0, 0.3
    q = random_pair(grid64, rng)
    r = random_pair(grid64, rng)
    assert form_bar(d, q, r, grid64, p) == pytest.approx(form_bar(d, r, q, grid64, p), rel=1e-12)
    # fitted two-sided comparison of ||r|| with |pi0| + |pi1| + sqrt(form(rem))
    worst_hi, worst_lo = 0.0, np.inf
    for _ in range(30):
        r = random_pair(grid64, rng)
        a0, a1, rem = decompose_bar(d, r, grid64, p)
        combo = abs(a0) + abs(a1) + np.sqrt(max(form_bar(d, rem, rem, grid64, p), 0.0))
        ratio = combo / pair_norm(r, grid64)
        worst_hi, worst_lo = max(worst_hi, ratio), min(worst_lo, ratio)
    assert 0 < worst_lo and worst_hi < 100.0


def test_coercivity_constant_stable_under_refinement(rng):
    # same sampled functions on two grids: fitted constant moves < 10%
    p, d = 3.0, 0.4
    fits = []
    for n in (64, 96):
        grid = make_grid(Params(p, 3, n))
        r = np.random.default_rng(7)
        worst = 1.0
        for _ in range(40):
            rem = random_bar_remainder(d, grid, p, r)
            val = form_bar(d, rem, rem, grid, p)
            nrm2 = phi_pair(rem, rem, grid)
            worst = max(worst, nrm2 / val, val / nrm2)
        fits.append(worst)
    assert abs(fits[0] - fits[1]) / fits[0] < 0.10


def test_adjoint_pairing(grid128, rng):
    # phi(Lbar q, r) = phi(q, Lbar* r) with r2 vanishing at the endpoints so
    # the adjoint's 1/(1-y^2) term stays in the resolved class
    p, d = 3.0, 0.35
    y = grid128.nodes
    q = ScalarPair(np.exp(np.sin(2 * y)), np.cos(y))
    r = ScalarPair(np.cos(2 * y), (1 - y**2) * np.sin(3 * y))
    lhs = phi_pair(apply_Lbar(d, q, grid128, p), r, grid128)
    rhs = phi_pair(q, apply_Lbar_adjoint(d, r, grid128, p), grid128)
    assert lhs == pytest.approx(rhs, rel=1e-8)
    lhs = phi_pair(apply_Ltilde(d, q, grid128, p), r, grid128)
    rhs = phi_pair(q, apply_Ltilde_adjoint(d, r, grid128, p), grid128)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_adjoint_eigenfunctions(grid128):
    # Lbar* W = lam W and Ltilde* W = 0, measured in the H norm
    p, d = 3.0, 0.2
    for lam in (0, 1):
        W = W_bar(d, lam, grid128, p)
        out = apply_Lbar_adjoint(d, W, grid128, p)
        res = ScalarPair(out.first - lam * W.first, out.second - lam * W.second)
        assert pair_norm(res, grid128) < 1e-3 * max(1.0, pair_norm(W, grid128))
    Wt = W_tilde(d, grid128, p)
    out = apply_Ltilde_adjoint(d, Wt, grid128, p)
    assert pair_norm(out, grid128) < 1e-3 * max(1.0, pair_norm(Wt, grid128))


def test_vector_operator_diagonal(grid64, rng):
    p, d = 3.0, 0.15
    q = HState(rng.standard_normal((grid64.n, 3)), rng.standard_normal((grid64.n, 3)))
    out = apply_L_full(d, q, grid64, p)
    bar_out = apply_Lbar(d, ScalarPair(q.q1[:, 0], q.q2[:, 0]), grid64, p)
    assert np.array_equal(out.q1[:, 0], bar_out.first)
    assert np.array_equal(out.q2[:, 0], bar_out.second)
    for j in (1, 2):
        t_out = apply_Ltilde(d, ScalarPair(q.q1[:, j], q.q2[:, j]), grid64, p)
        assert np.array_equal(out.q1[:, j], t_out.first)
        assert np.array_equal(out.q2[:, j], t_out.second)


def test_w_norm_bounds_fitted(grid64):
    # fitted analogue of the adjoint norm bounds over the d sweep
    p, h = 3.0, 1e-6
    for d in (0.0, 0.5, -0.5, 0.8):
        for lam in (0, 1):
            W = W_bar(d, lam, grid64, p)
            assert pair_norm(W, grid64) < 50.0
        Wt = W_tilde(d, grid64, p)
        assert pair_norm(Wt, grid64) < 50.0
        Wp = W_bar(d + h, 1, grid64, p)
        Wm = W_bar(d - h, 1, grid64, p)
        dW = ScalarPair((Wp.first - Wm.first) / (2 * h), (Wp.second - Wm.second) / (2 * h))
        assert (1 - d * d) * pair_norm(dW, grid64) < 100.0
