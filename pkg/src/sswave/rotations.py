"""Composed Givens rotations R_theta = R_2 R_3 ... R_m and their generators.

R_i rotates the (e_1, e_i) plane by theta_i and fixes everything else; the
ordered product parametrizes the directions reachable from e_1.  A_j is the
logarithmic derivative of the product in theta_j, computed from the factored
form (never by finite differences) so the exact identities

    (A)  <e_j, A_i e_1> = 0 for i != j
    (B)  <e_1, A_i e_1> = 0
    (C)  <e_i, A_i e_1> = prod_{k>i} cos theta_k

hold to machine precision and serve as regression anchors.  Angle indices
follow the 2..m convention throughout: theta[0] is the angle of R_2.
"""

from __future__ import annotations

import numpy as np


def givens(m: int, i: int, angle: float) -> np.ndarray:
    """m x m rotation of the (e_1, e_i) plane, 2 <= i <= m (1-based)."""
    if not 2 <= i <= m:
        raise ValueError(f"plane index i must be in 2..{m}, got {i}")
    R = np.eye(m)
    c, s = np.cos(angle), np.sin(angle)
    R[0, 0] = c
    R[0, i - 1] = -s
    R[i - 1, 0] = s
    R[i - 1, i - 1] = c
    return R


def compose_R(theta) -> np.ndarray:
    """Ordered product R_2(theta_2) R_3(theta_3) ... R_m(theta_m)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m = len(theta) + 1
    R = np.eye(m)
    for i in range(2, m + 1):
        R = R @ givens(m, i, theta[i - 2])
    return R


def _phi_prod(cos_t, k, l):
    """Partial cosine product phi_{k,l} = prod_{n=k}^{l} cos theta_n (1 if k > l).

    Indices follow the 2..m angle labels; cos_t[j] holds cos theta_{j+2}.
    """
    if k > l:
        return 1.0
    return float(np.prod(cos_t[k - 2:l - 1]))


def closed_form_R(theta) -> np.ndarray:
    """Entrywise closed form of the ordered product.

    Column 1 carries sin theta_k phi_{k+1,m}, row 1 carries -sin theta_l
    phi_{2,l-1}, the interior is -sin theta_k sin theta_l phi_{k+1,l-1} above
    the diagonal, cos theta_k on it, and zero below.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m = len(theta) + 1
    c, s = np.cos(theta), np.sin(theta)
    R = np.zeros((m, m))
    R[0, 0] = _phi_prod(c, 2, m)
    for k in range(2, m + 1):
        R[k - 1, 0] = s[k - 2] * _phi_prod(c, k + 1, m)
    for l in range(2, m + 1):
        R[0, l - 1] = -s[l - 2] * _phi_prod(c, 2, l - 1)
        for k in range(2, m + 1):
            if k == l:
                R[k - 1, l - 1] = c[k - 2]
            elif k <= l - 1:
                R[k - 1, l - 1] = -s[k - 2] * s[l - 2] * _phi_prod(c, k + 1, l - 1)
    return R


def _plane_projector(m, j):
    P = np.zeros((m, m))
    P[0, 0] = 1.0
    P[j - 1, j - 1] = 1.0
    return P


def generator_A(theta, j: int) -> np.ndarray:
    """A_j = R_theta^{-1} dR_theta/dtheta_j from the factored product.

    Factored form: R_m^{-1} ... R_{j+1}^{-1} R_j(pi/2) Pi_j R_{j+1} ... R_m,
    with Pi_j the orthogonal projector on the (e_1, e_j) plane.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m = len(theta) + 1
    if not 2 <= j <= m:
        raise ValueError(f"generator index j must be in 2..{m}, got {j}")
    A = givens(m, j, np.pi / 2) @ _plane_projector(m, j)
    for i in range(j + 1, m + 1):
        Ri = givens(m, i, theta[i - 2])
        A = Ri.T @ A @ Ri
    return A


def dR_dtheta(theta, j: int) -> np.ndarray:
    """Analytic dR_theta/dtheta_j via the product rule on the ordered factors."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m = len(theta) + 1
    out = np.eye(m)
    for i in range(2, m + 1):
        Ri = givens(m, i, theta[i - 2])
        if i == j:
            Ri = givens(m, i, theta[i - 2] + np.pi / 2) @ _plane_projector(m, i)
        out = out @ Ri
    return out


def generator_A_from_inverse(theta, j: int) -> np.ndarray:
    """A_j via the inverse product: -(dR_theta^{-1}/dtheta_j) R_theta.

    Differentiating R^{-1} R = I gives (dR^{-1}) R = -R^{-1} dR, so the
    alternate expression carries a minus sign; with it, both evaluations
    reduce to the same factored matrix.
    """
    # R^{-1} = R_m(-t_m) ... R_2(-t_2); differentiate the j-th factor
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m = len(theta) + 1
    out = np.eye(m)
    for i in range(m, 1, -1):
        Ri = givens(m, i, -theta[i - 2])
        if i == j:
            Ri = -givens(m, i, -theta[i - 2] + np.pi / 2) @ _plane_projector(m, i)
        out = out @ Ri
    return -(out @ compose_R(theta))


def in_cos_regime(theta, bound=0.5) -> bool:
    """True when every cos theta_i clears the experiment's regime bound."""
    return bool(np.all(np.cos(np.atleast_1d(theta)) >= bound))
