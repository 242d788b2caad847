"""Weighted collocation grids on (-1, 1) and the operators built on them.

Everything downstream works in the weighted space attached to the density
rho(y) = (1 - y^2)^(2/(p-1)).  The grid is a Gauss-Jacobi rule with exponent
2/(p-1) at both endpoints, so quadrature against rho is exact for polynomials
up to degree 2n-1, and the endpoint degeneracy of the wave operator

    L r = (1/rho) d/dy ( rho (1-y^2) r' ) = (1-y^2) r'' - (2(p+1)/(p-1)) y r'

is handled without boundary conditions.  Differentiation uses the dense
barycentric matrix on the collocation nodes; fields of interest are analytic
on (-1, 1), so accuracy is spectral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import beta as beta_fn, roots_jacobi


class GridConstructionError(RuntimeError):
    """Raised when the quadrature rule fails its build-time validation."""


class ResolventError(RuntimeError):
    """Raised when the resolvent linear solve fails; carries a condition estimate."""


@dataclass(frozen=True)
class Params:
    """Problem parameters: nonlinearity power p, target dimension m, grid size n."""

    p: float
    m: int
    n: int

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.n < 16:
            raise ValueError(f"n must be >= 16, got {self.n}")


def rho(y, p):
    """Weight rho(y) = (1 - y^2)^(2/(p-1)).  Domain error outside (-1, 1)."""
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= 1.0):
        raise ValueError("rho is only defined for |y| < 1")
    return (1.0 - y * y) ** (2.0 / (p - 1.0))


def _bary_weights(y):
    # log-scaled products keep the weights finite for n in the hundreds
    n = len(y)
    diff = y[:, None] - y[None, :] + np.eye(n, dtype=y.dtype)
    logc = -np.log(np.abs(diff)).sum(axis=1)
    sgn = (-1.0) ** (n - 1 - np.arange(n))
    return sgn * np.exp(logc - logc.max())


def _diff_matrix(y):
    """Barycentric differentiation matrix on arbitrary nodes (negative-sum diagonal)."""
    n = len(y)
    c = _bary_weights(y)
    gap = y[:, None] - y[None, :]
    np.fill_diagonal(gap, 1.0)
    D = (c[None, :] / c[:, None]) / gap
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass
class WeightedGrid:
    """Collocation nodes, rho-weighted quadrature and differentiation on (-1, 1).

    `weights` integrate f against rho:  sum(weights * f(nodes)) ~ int f rho dy.
    They are never combined with an explicit rho factor again.  `aux_nodes` and
    `aux_weights` form a second rule with endpoint exponent 2/(p-1) - 1, used
    for integrands carrying a 1/(1-y^2) factor, which the main rule resolves
    only algebraically.
    """

    p: float
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    diff: np.ndarray
    diff2: np.ndarray
    rho_vals: np.ndarray
    one_minus_y2: np.ndarray
    aux_nodes: np.ndarray
    aux_weights: np.ndarray
    aux_diff: np.ndarray
    diff_hi: np.ndarray
    diff2_hi: np.ndarray
    _resolvent_cho: tuple = field(repr=False, default=None)
    _cache: dict = field(repr=False, default_factory=dict)

    @property
    def alpha(self):
        return 2.0 / (self.p - 1.0)

    @property
    def unweighted_weights(self):
        """Weights for plain dy integrals (only algebraically accurate near +-1)."""
        return self.weights / self.rho_vals


def make_grid(params: Params) -> WeightedGrid:
    """Build and validate the Gauss-Jacobi grid for the given parameters.

    Validation compares the rule against closed-form Beta-function values of
    int y^k rho dy for every k <= 2n-1 and requires 1e-12 relative agreement.
    """
    p, n = float(params.p), int(params.n)
    alpha = 2.0 / (p - 1.0)
    y, w = roots_jacobi(n, alpha, alpha)

    D = _diff_matrix(y)
    D2 = D @ D
    # longdouble copies: the p=2 stationary residual is roundoff-limited in
    # float64 (the D2 entries reach ~n^4), extended precision buys ~3 digits
    yl = y.astype(np.longdouble)
    Dl = _diff_matrix(yl)
    D2l = Dl @ Dl

    y_aux, w_aux = roots_jacobi(n, alpha - 1.0, alpha - 1.0)
    D_aux = _diff_matrix(y_aux)

    grid = WeightedGrid(
        p=p, n=n, nodes=y, weights=w, diff=D, diff2=D2,
        rho_vals=(1.0 - y * y) ** alpha, one_minus_y2=1.0 - y * y,
        aux_nodes=y_aux, aux_weights=w_aux, aux_diff=D_aux,
        diff_hi=Dl, diff2_hi=D2l,
    )
    _validate_quadrature(grid)
    return grid


def _validate_quadrature(grid, rtol=1e-12):
    y, w, a = grid.nodes, grid.weights, grid.alpha
    if not (np.all(np.abs(y) < 1.0) and np.all(np.diff(y) > 0)):
        raise GridConstructionError("nodes must be strictly increasing inside (-1, 1)")
    if not np.all(w > 0):
        raise GridConstructionError("quadrature weights must be positive")
    pows = np.arange(0, 2 * grid.n)
    vals = w @ (y[:, None] ** pows[None, :])
    for k in pows:
        if k % 2:
            scale = beta_fn((k - 1) / 2 + 0.5, a + 1.0)
            err = abs(vals[k]) / scale
        else:
            exact = beta_fn(k / 2 + 0.5, a + 1.0)
            err = abs(vals[k] - exact) / exact
        if err > rtol:
            raise GridConstructionError(
                f"quadrature validation failed at degree {k}: rel err {err:.3e}")


# ---------------------------------------------------------------------------
# states and norms
# ---------------------------------------------------------------------------

@dataclass
class HState:
    """Pair (q1, q2) of m-component fields: position part in H0, velocity in L2_rho.

    Arrays are (n, m); scalar problems may use (n,) columns reshaped by the
    caller.  Values must be finite.
    """

    q1: np.ndarray
    q2: np.ndarray

    def __post_init__(self):
        self.q1 = np.atleast_2d(np.asarray(self.q1, dtype=float).T).T
        self.q2 = np.atleast_2d(np.asarray(self.q2, dtype=float).T).T
        if self.q1.shape != self.q2.shape:
            raise ValueError("q1 and q2 must have the same shape")
        if not (np.all(np.isfinite(self.q1)) and np.all(np.isfinite(self.q2))):
            raise ValueError("HState requires finite values")

    @property
    def m(self):
        return self.q1.shape[1]

    def copy(self):
        return HState(self.q1.copy(), self.q2.copy())


def integrate_rho(f, grid: WeightedGrid) -> float:
    """Quadrature of int f rho dy from node values of f."""
    return float(grid.weights @ np.asarray(f))


def h0_norm(r, grid: WeightedGrid) -> float:
    """Norm with square int (|r'|^2 (1-y^2) + |r|^2) rho dy, components summed."""
    r = np.asarray(r, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    dr = grid.diff @ r
    dens = (r**2).sum(axis=1) + (dr**2).sum(axis=1) * grid.one_minus_y2
    return float(np.sqrt(grid.weights @ dens))


def h_norm(q: HState, grid: WeightedGrid) -> float:
    """Norm with square int (|q1|^2 + |q1'|^2 (1-y^2) + |q2|^2) rho dy."""
    dq1 = grid.diff @ q.q1
    dens = ((q.q1**2).sum(axis=1) + (dq1**2).sum(axis=1) * grid.one_minus_y2
            + (q.q2**2).sum(axis=1))
    return float(np.sqrt(grid.weights @ dens))


def phi_scalar(a1, a2, b1, b2, grid: WeightedGrid) -> float:
    """phi on scalar pairs: int (a1 b1 + a1' b1' (1-y^2) + a2 b2) rho dy."""
    da1 = grid.diff @ a1
    db1 = grid.diff @ b1
    return float(grid.weights @ (a1 * b1 + da1 * db1 * grid.one_minus_y2 + a2 * b2))


def phi_inner(q: HState, r: HState, grid: WeightedGrid) -> float:
    """The inner product phi on full m-component states."""
    dq1 = grid.diff @ q.q1
    dr1 = grid.diff @ r.q1
    dens = ((q.q1 * r.q1).sum(axis=1) + (dq1 * dr1).sum(axis=1) * grid.one_minus_y2
            + (q.q2 * r.q2).sum(axis=1))
    return float(grid.weights @ dens)


# ---------------------------------------------------------------------------
# the degenerate operator and its resolvent
# ---------------------------------------------------------------------------

def apply_L(r, grid: WeightedGrid, precise: bool = True):
    """Node values of L r = (1-y^2) r'' - (2(p+1)/(p-1)) y r'.

    No boundary condition is imposed; the weight degeneracy at +-1 makes the
    natural condition implicit.  `precise=True` routes the differentiation
    through extended precision (cheap at n <= 256, needed for max-norm checks
    at p close to 1); the float64 path serves time-stepping loops.
    """
    r = np.asarray(r)
    p = grid.p
    c = 2.0 * (p + 1.0) / (p - 1.0)
    if precise:
        rl = r.astype(np.longdouble)
        out = (grid.one_minus_y2.astype(np.longdouble) * (grid.diff2_hi @ rl).T).T \
            - c * (grid.nodes.astype(np.longdouble) * (grid.diff_hi @ rl).T).T
        return out.astype(float)
    return (grid.one_minus_y2 * (grid.diff2 @ r).T).T - c * (grid.nodes * (grid.diff @ r).T).T


def _resolvent_factor(grid: WeightedGrid):
    # Galerkin matrix of (-L + 1): D^T diag(w (1-y^2)) D + diag(w).  Symmetric
    # positive definite, and identical to straight collocation because the
    # quadrature is exact at the polynomial degrees involved.
    if grid._resolvent_cho is None:
        W1 = grid.weights * grid.one_minus_y2
        A = grid.diff.T @ (W1[:, None] * grid.diff) + np.diag(grid.weights)
        A = 0.5 * (A + A.T)
        try:
            grid._resolvent_cho = cho_factor(A)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded path
            cond = np.linalg.cond(A)
            raise ResolventError(f"resolvent factorization failed, cond ~ {cond:.3e}") from exc
    return grid._resolvent_cho


def solve_resolvent(g, grid: WeightedGrid):
    """Solve (-L + 1) r = g from node values of g.

    g only needs a finite L2_rho pairing against the discrete space; the
    solution is the unique variational one with finite H0 norm.
    """
    g = np.asarray(g, dtype=float)
    cho = _resolvent_factor(grid)
    rhs = (grid.weights * g.T).T
    try:
        return cho_solve(cho, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded path
        raise ResolventError("resolvent solve failed") from exc


def resolvent_residual(r, g, grid: WeightedGrid) -> float:
    """L2_rho norm of (-L r + r - g), the collocation residual of the solve."""
    res = -apply_L(r, grid) + r - g
    if res.ndim == 1:
        res = res[:, None]
    return float(np.sqrt(grid.weights @ (res**2).sum(axis=1)))
