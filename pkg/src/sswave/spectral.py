"""Linearized operators around the soliton and their explicit spectral data.

Linearizing the self-similar flow around kappa(d, .) e_1 decouples into a
"first coordinate" operator (potential psi_bar, eigenvalues 1 and 0) and
m - 1 copies of a "transverse" operator (potential psi_tilde, eigenvalue 0).
Both have explicit eigenfunctions; the adjoint eigenfunctions have explicit
second components while their first components solve a resolvent equation.

Two numerical facts shape the implementation:

* The resolvent right-hand sides carry a r2/(1-y^2) term whose product
  integrals the main quadrature rule resolves only algebraically, so the
  paper-fidelity biorthogonality certificate is evaluated on the auxiliary
  reduced-exponent rule, where every factor is smooth.
* The adjoint basis actually used for projections is Gram-corrected against
  the discrete eigenfunctions, so biorthogonality holds to machine precision
  operationally; the raw (uncorrected) pairings are recorded and must sit at
  the identity within certificate tolerance.

The closed-form second components use a (1-d^2)^(1/(p-1)) prefactor.  With it
the raw certificate pairing is 1 for every d; the (1-d) variant fails for
d != 0 by an exact (1+d)^(1/(p-1)) factor.  `w2_prefactor_mismatch` exposes
the comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn

from .solitons import kappa, kappa0
from .space import HState, WeightedGrid, apply_L, phi_scalar, solve_resolvent


@dataclass
class ScalarPair:
    """A 2-component scalar state (r1, r2), one coordinate of an HState."""

    first: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        self.first = np.asarray(self.first, dtype=float)
        self.second = np.asarray(self.second, dtype=float)
        if self.first.shape != self.second.shape:
            raise ValueError("pair components must share a shape")

    def copy(self):
        return ScalarPair(self.first.copy(), self.second.copy())


@dataclass
class EigenData:
    """Eigenfunction F, Gram-corrected adjoint W and certificates for one mode."""

    d: float
    lam: int
    F: ScalarPair
    W: ScalarPair
    c_norm: float
    raw_pairing_aux: float
    raw_pairing_discrete: float


def phi_pair(a: ScalarPair, b: ScalarPair, grid: WeightedGrid) -> float:
    """phi restricted to one coordinate."""
    return phi_scalar(a.first, a.second, b.first, b.second, grid)


def psi_bar(d, y, p):
    """Potential of the first-coordinate linearization: p kappa^(p-1) - 2(p+1)/(p-1)^2."""
    return p * kappa(d, y, p) ** (p - 1.0) - 2.0 * (p + 1.0) / (p - 1.0) ** 2


def psi_tilde(d, y, p):
    """Potential of the transverse linearization: kappa^(p-1) - 2(p+1)/(p-1)^2."""
    return kappa(d, y, p) ** (p - 1.0) - 2.0 * (p + 1.0) / (p - 1.0) ** 2


def _apply_linearized(psi, pair: ScalarPair, grid: WeightedGrid, p) -> ScalarPair:
    y, D = grid.nodes, grid.diff
    out2 = (apply_L(pair.first, grid) + psi * pair.first
            - (p + 3.0) / (p - 1.0) * pair.second - 2.0 * y * (D @ pair.second))
    return ScalarPair(pair.second.copy(), out2)


def apply_Lbar(d, pair: ScalarPair, grid: WeightedGrid, p) -> ScalarPair:
    return _apply_linearized(psi_bar(d, grid.nodes, p), pair, grid, p)


def apply_Ltilde(d, pair: ScalarPair, grid: WeightedGrid, p) -> ScalarPair:
    return _apply_linearized(psi_tilde(d, grid.nodes, p), pair, grid, p)


def apply_L_full(d, state: HState, grid: WeightedGrid, p) -> HState:
    """The full vector linearization, applied coordinate by coordinate.

    Delegating each column through the scalar operators keeps the diagonality
    statement bit-exact, not just to roundoff.
    """
    cols = []
    for j in range(state.m):
        pair = ScalarPair(state.q1[:, j], state.q2[:, j])
        op = apply_Lbar if j == 0 else apply_Ltilde
        cols.append(op(d, pair, grid, p))
    return HState(np.column_stack([c.first for c in cols]),
                  np.column_stack([c.second for c in cols]))


# ---------------------------------------------------------------------------
# eigenfunctions
# ---------------------------------------------------------------------------

def _fbar_values(d, lam, y, p):
    if lam == 1:
        g = (1.0 - d * d) ** (p / (p - 1.0)) * (1.0 + d * y) ** (-(p + 1.0) / (p - 1.0))
        return g, g.copy()
    f1 = (1.0 - d * d) ** (1.0 / (p - 1.0)) * (y + d) * (1.0 + d * y) ** (-(p + 1.0) / (p - 1.0))
    return f1, np.zeros_like(y)


def F_bar(d, lam, grid: WeightedGrid, p) -> ScalarPair:
    """Explicit eigenfunction of the first-coordinate operator, lam in {0, 1}."""
    if lam not in (0, 1):
        raise ValueError("lam must be 0 or 1")
    return ScalarPair(*_fbar_values(d, lam, grid.nodes, p))


def F_tilde(d, grid: WeightedGrid, p) -> ScalarPair:
    """Explicit zero-mode of the transverse operator: (kappa(d, .), 0)."""
    return ScalarPair(kappa(d, grid.nodes, p), np.zeros(grid.n))


def cbar_const(lam, p) -> float:
    """Closed-form normalizing constant of the first-coordinate adjoint modes.

    1/cbar_lam = 2 (2/(p-1) + lam) * int (y^2/(1-y^2))^(1-lam) rho dy, evaluated
    by Beta functions rather than quadrature.
    """
    a = 2.0 / (p - 1.0)
    integral = beta_fn(0.5, a + 1.0) if lam == 1 else beta_fn(1.5, a)
    return 1.0 / (2.0 * (2.0 / (p - 1.0) + lam) * integral)


def ctilde_const(p) -> float:
    """Closed-form 1/ctilde = (4 kappa0^2/(p-1)) int rho/(1-y^2) dy via Beta."""
    a = 2.0 / (p - 1.0)
    return 1.0 / (4.0 * kappa0(p) ** 2 / (p - 1.0) * beta_fn(0.5, a))


def _w2_bar(d, lam, y, p, prefactor="1-d2"):
    fac = ((1.0 - d * d) if prefactor == "1-d2" else (1.0 - d)) ** (1.0 / (p - 1.0))
    b = (p + 1.0) / (p - 1.0)
    if lam == 1:
        return cbar_const(1, p) * (1.0 - y * y) * fac / (1.0 + d * y) ** b
    return cbar_const(0, p) * (y + d) * fac / (1.0 + d * y) ** b


def _w2_tilde(d, y, p):
    return ctilde_const(p) * kappa(d, y, p)


def _resolvent_rhs(lam, W2, dW2, one_minus_y2, y, p):
    # right-hand side of the adjoint first-component equation; the 1/(1-y^2)
    # factor is finite at the interior nodes
    return ((lam - (p + 3.0) / (p - 1.0)) * W2 - 2.0 * y * dW2
            + 8.0 / (p - 1.0) * W2 / one_minus_y2)


def _raw_pairing_aux(d, lam, w2_fn, f_fn, grid: WeightedGrid, p) -> float:
    """Certificate pairing phi(W_lam, F) on the reduced-exponent rule.

    Uses phi(W, F) = int (F1 * rhs(W2) + W2 F2) rho dy with the closed-form
    right-hand side, so no resolvent solve enters; every factor left after
    absorbing one (1-y^2) into the aux weight is smooth.
    """
    y = grid.aux_nodes
    W2 = w2_fn(y)
    dW2 = grid.aux_diff @ W2
    smooth = (lam - (p + 3.0) / (p - 1.0)) * W2 - 2.0 * y * dW2
    f1, f2 = f_fn(y)
    integrand = (1.0 - y * y) * (f1 * smooth + W2 * f2) + 8.0 / (p - 1.0) * f1 * W2
    return float(grid.aux_weights @ integrand)


def w2_prefactor_mismatch(d, grid: WeightedGrid, p) -> dict:
    """Raw self-pairings of both W2 prefactor variants, before any correction.

    The variant whose pairing is 1 across d is the one used by the module.
    """
    out = {}
    for variant in ("1-d2", "1-d"):
        pair = _raw_pairing_aux(
            d, 1, lambda y: _w2_bar(d, 1, y, p, variant),
            lambda y: _fbar_values(d, 1, y, p), grid, p)
        out[variant] = pair
    return out


# ---------------------------------------------------------------------------
# adjoint systems with Gram correction
# ---------------------------------------------------------------------------

@dataclass
class BarSystem:
    d: float
    p: float
    F0: ScalarPair
    F1: ScalarPair
    W0: ScalarPair
    W1: ScalarPair
    gram_raw_aux: np.ndarray
    gram_raw_discrete: np.ndarray

    def F(self, lam):
        return self.F1 if lam == 1 else self.F0

    def W(self, lam):
        return self.W1 if lam == 1 else self.W0

    def eigendata(self, lam) -> EigenData:
        return EigenData(self.d, lam, self.F(lam), self.W(lam), cbar_const(lam, self.p),
                         self.gram_raw_aux[lam, lam], self.gram_raw_discrete[lam, lam])


@dataclass
class TildeSystem:
    d: float
    p: float
    F: ScalarPair
    W: ScalarPair
    pairing_raw_aux: float
    pairing_raw_discrete: float

    def eigendata(self) -> EigenData:
        return EigenData(self.d, 0, self.F, self.W, ctilde_const(self.p),
                         self.pairing_raw_aux, self.pairing_raw_discrete)


def _cache_get(grid, key, builder):
    cache = grid._cache
    if key not in cache:
        if len(cache) > 4096:
            cache.clear()
        cache[key] = builder()
    return cache[key]


def bar_system(d, grid: WeightedGrid, p) -> BarSystem:
    """Eigenfunctions and corrected adjoints of the first-coordinate operator."""

    def build():
        y, omy2 = grid.nodes, grid.one_minus_y2
        F = [F_bar(d, lam, grid, p) for lam in (0, 1)]
        W = []
        for lam in (0, 1):
            W2 = _w2_bar(d, lam, y, p)
            dW2 = grid.diff @ W2
            W1 = solve_resolvent(_resolvent_rhs(lam, W2, dW2, omy2, y, p), grid)
            W.append(ScalarPair(W1, W2))
        G = np.array([[phi_pair(W[lam], F[mu], grid) for mu in (0, 1)] for lam in (0, 1)])
        Graw_aux = np.array([
            [_raw_pairing_aux(d, lam, lambda yy, l=lam: _w2_bar(d, l, yy, p),
                              lambda yy, m_=mu: _fbar_values(d, m_, yy, p), grid, p)
             for mu in (0, 1)] for lam in (0, 1)])
        Ginv = np.linalg.inv(G)
        Wc = [ScalarPair(Ginv[mu, 0] * W[0].first + Ginv[mu, 1] * W[1].first,
                         Ginv[mu, 0] * W[0].second + Ginv[mu, 1] * W[1].second)
              for mu in (0, 1)]
        return BarSystem(d, p, F[0], F[1], Wc[0], Wc[1], Graw_aux, G)

    return _cache_get(grid, ("bar", p, d), build)


def tilde_system(d, grid: WeightedGrid, p) -> TildeSystem:
    """Eigenfunction and corrected adjoint of the transverse operator."""

    def build():
        y, omy2 = grid.nodes, grid.one_minus_y2
        F = F_tilde(d, grid, p)
        W2 = _w2_tilde(d, y, p)
        dW2 = grid.diff @ W2
        W1 = solve_resolvent(_resolvent_rhs(0, W2, dW2, omy2, y, p), grid)
        raw_disc = phi_pair(ScalarPair(W1, W2), F, grid)
        raw_aux = _raw_pairing_aux(d, 0, lambda yy: _w2_tilde(d, yy, p),
                                   lambda yy: (kappa(d, yy, p), np.zeros_like(yy)),
                                   grid, p)
        W = ScalarPair(W1 / raw_disc, W2 / raw_disc)
        return TildeSystem(d, p, F, W, raw_aux, raw_disc)

    return _cache_get(grid, ("tilde", p, d), build)


def W_bar(d, lam, grid: WeightedGrid, p) -> ScalarPair:
    """Adjoint eigenfunction (corrected) of the first-coordinate operator."""
    return bar_system(d, grid, p).W(lam)


def W_tilde(d, grid: WeightedGrid, p) -> ScalarPair:
    """Adjoint zero-mode (normalized) of the transverse operator."""
    return tilde_system(d, grid, p).W


# ---------------------------------------------------------------------------
# projectors, decompositions, quadratic forms
# ---------------------------------------------------------------------------

def project_bar(d, lam, r: ScalarPair, grid: WeightedGrid, p) -> float:
    """pi_bar_lam(r) = phi(W_bar_lam, r)."""
    return phi_pair(bar_system(d, grid, p).W(lam), r, grid)


def project_tilde(d, r: ScalarPair, grid: WeightedGrid, p) -> float:
    """pi_tilde_0(r) = phi(W_tilde, r)."""
    return phi_pair(tilde_system(d, grid, p).W, r, grid)


def decompose_bar(d, r: ScalarPair, grid: WeightedGrid, p):
    """Split r = a0 F0 + a1 F1 + remainder with both projections of the remainder zero."""
    sys = bar_system(d, grid, p)
    a0 = phi_pair(sys.W0, r, grid)
    a1 = phi_pair(sys.W1, r, grid)
    rem = ScalarPair(r.first - a0 * sys.F0.first - a1 * sys.F1.first,
                     r.second - a0 * sys.F0.second - a1 * sys.F1.second)
    return a0, a1, rem


def decompose_tilde(d, r: ScalarPair, grid: WeightedGrid, p):
    """Split r = a0 F_tilde + remainder."""
    sys = tilde_system(d, grid, p)
    a0 = phi_pair(sys.W, r, grid)
    rem = ScalarPair(r.first - a0 * sys.F.first, r.second - a0 * sys.F.second)
    return a0, rem


def _form(psi, q: ScalarPair, r: ScalarPair, grid: WeightedGrid) -> float:
    dq = grid.diff @ q.first
    dr = grid.diff @ r.first
    return float(grid.weights @ (-psi * q.first * r.first
                                 + dq * dr * grid.one_minus_y2
                                 + q.second * r.second))


def form_bar(d, q: ScalarPair, r: ScalarPair, grid: WeightedGrid, p) -> float:
    """Bilinear form int (-psi_bar q1 r1 + q1' r1' (1-y^2) + q2 r2) rho dy."""
    return _form(psi_bar(d, grid.nodes, p), q, r, grid)


def form_tilde(d, q: ScalarPair, r: ScalarPair, grid: WeightedGrid, p) -> float:
    """Bilinear form with the transverse potential psi_tilde."""
    return _form(psi_tilde(d, grid.nodes, p), q, r, grid)


# ---------------------------------------------------------------------------
# adjoint operators (for pairing checks)
# ---------------------------------------------------------------------------

def apply_Lbar_adjoint(d, r: ScalarPair, grid: WeightedGrid, p) -> ScalarPair:
    """Conjugate of the first-coordinate operator with respect to phi."""
    return _apply_adjoint(psi_bar(d, grid.nodes, p), r, grid, p)


def apply_Ltilde_adjoint(d, r: ScalarPair, grid: WeightedGrid, p) -> ScalarPair:
    """Conjugate of the transverse operator with respect to phi."""
    return _apply_adjoint(psi_tilde(d, grid.nodes, p), r, grid, p)


def _apply_adjoint(psi, r: ScalarPair, grid: WeightedGrid, p) -> ScalarPair:
    y, omy2 = grid.nodes, grid.one_minus_y2
    first = solve_resolvent(apply_L(r.second, grid) + psi * r.second, grid)
    second = (-apply_L(r.first, grid) + r.first
              + (p + 3.0) / (p - 1.0) * r.second + 2.0 * y * (grid.diff @ r.second)
              - 8.0 / (p - 1.0) * r.second / omy2)
    return ScalarPair(first, second)


# ---------------------------------------------------------------------------
# sampling helpers shared by tests and the CLI
# ---------------------------------------------------------------------------

def random_smooth_field(grid: WeightedGrid, rng, kmax=12, decay=0.5):
    """Grid-independent random smooth field: Chebyshev series with decaying coefficients."""
    coeffs = rng.standard_normal(kmax) * np.exp(-decay * np.arange(kmax))
    return np.polynomial.chebyshev.chebval(grid.nodes, coeffs)


def random_pair(grid: WeightedGrid, rng, kmax=12, decay=0.5) -> ScalarPair:
    return ScalarPair(random_smooth_field(grid, rng, kmax, decay),
                      random_smooth_field(grid, rng, kmax, decay))


def random_bar_remainder(d, grid: WeightedGrid, p, rng) -> ScalarPair:
    """Random smooth pair projected onto the discrete bar remainder space."""
    _, _, rem = decompose_bar(d, random_pair(grid, rng), grid, p)
    return rem


def random_tilde_remainder(d, grid: WeightedGrid, p, rng) -> ScalarPair:
    """Random smooth pair projected onto the discrete tilde remainder space."""
    _, rem = decompose_tilde(d, random_pair(grid, rng), grid, p)
    return rem
