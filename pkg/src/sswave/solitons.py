"""The stationary-soliton family, its transforms, energy, and the ODE oracle.

The nonzero stationary states of the self-similar flow form the family
kappa(d, y) * Omega with |d| < 1 and Omega a unit vector.  In the log
coordinate xi = artanh(y) the profile becomes a translate of the sech-type
bump kbar, and the classification of stationary states reduces to a planar
ODE for (|wbar|, |wbar|') with a conserved first integral.  This module holds
the closed forms, the residual checks, the shooting oracle for that ODE, and
the distance-to-manifold diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .space import HState, WeightedGrid, apply_L


@dataclass(frozen=True)
class SolitonParams:
    """Point kappa(d, .) * omega on the stationary manifold."""

    d: float
    omega: np.ndarray

    def __post_init__(self):
        if not abs(self.d) < 1:
            raise ValueError("|d| must be < 1")
        if abs(np.linalg.norm(self.omega) - 1.0) > 1e-12:
            raise ValueError("omega must be a unit vector")


def kappa0(p) -> float:
    """Amplitude of the flat soliton: (2(p+1)/(p-1)^2)^(1/(p-1))."""
    return (2.0 * (p + 1.0) / (p - 1.0) ** 2) ** (1.0 / (p - 1.0))


def kappa(d, y, p):
    """kappa(d, y) = kappa0 (1-d^2)^(1/(p-1)) / (1+dy)^(2/(p-1)), for |d| < 1."""
    if not abs(d) < 1:
        raise ValueError("|d| must be < 1")
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= 1.0):
        raise ValueError("|y| must be < 1")
    e = 1.0 / (p - 1.0)
    return kappa0(p) * (1.0 - d * d) ** e / (1.0 + d * y) ** (2.0 * e)


def d_kappa(d, y, p):
    """Analytic d-derivative of kappa: -(2/(p-1)) kappa (y+d) / ((1-d^2)(1+dy))."""
    y = np.asarray(y, dtype=float)
    return -2.0 / (p - 1.0) * kappa(d, y, p) * (y + d) / ((1.0 - d * d) * (1.0 + d * y))


def kbar(xi, p):
    """Log-coordinate profile kappa0 / cosh^(2/(p-1))(xi)."""
    return kappa0(p) / np.cosh(np.asarray(xi, dtype=float)) ** (2.0 / (p - 1.0))


def xi_transform(w, grid: WeightedGrid, p):
    """Map node values w(y) to wbar(xi) = w(y) (1-y^2)^(1/(p-1)) at xi = artanh(y).

    Returns (xi_nodes, wbar_values); the transform is a bijection on fields
    over the grid, see `inverse_xi_transform`.
    """
    w = np.asarray(w, dtype=float)
    xi = np.arctanh(grid.nodes)
    fac = grid.one_minus_y2 ** (1.0 / (p - 1.0))
    return xi, (fac * w.T).T


def inverse_xi_transform(wbar, grid: WeightedGrid, p):
    """Recover w(y) on the grid from wbar values at xi = artanh(nodes)."""
    wbar = np.asarray(wbar, dtype=float)
    fac = grid.one_minus_y2 ** (1.0 / (p - 1.0))
    return (wbar.T / fac).T


def stationary_residual(w, grid: WeightedGrid, p):
    """Node values of L w - (2(p+1)/(p-1)^2) w + |w|^(p-1) w.

    Vanishes identically on the soliton family; on the grid the residual is
    discretization roundoff only, so it doubles as an accuracy probe.
    """
    w = np.asarray(w, dtype=float)
    vec = w.ndim == 2
    amp = np.linalg.norm(w, axis=1) if vec else np.abs(w)
    nl = (amp ** (p - 1.0) * w.T).T
    return apply_L(w, grid, precise=True) - 2.0 * (p + 1.0) / (p - 1.0) ** 2 * w + nl


def energy(q: HState, grid: WeightedGrid, p) -> float:
    """Lyapunov energy E(w, dw/ds) of the self-similar flow.

    E = int ( |q2|^2/2 + |q1'|^2 (1-y^2)/2 + (p+1)/(p-1)^2 |q1|^2
              - |q1|^(p+1)/(p+1) ) rho dy
    """
    dq1 = grid.diff @ q.q1
    amp = np.linalg.norm(q.q1, axis=1)
    dens = (0.5 * (q.q2**2).sum(axis=1)
            + 0.5 * (dq1**2).sum(axis=1) * grid.one_minus_y2
            + (p + 1.0) / (p - 1.0) ** 2 * (q.q1**2).sum(axis=1)
            - amp ** (p + 1.0) / (p + 1.0))
    return float(grid.weights @ dens)


def soliton_energy(p, grid: WeightedGrid) -> float:
    """E(kappa0, 0) = kappa0^2/(p-1) * int rho dy, the value shared by the family."""
    k0 = kappa0(p)
    return k0**2 / (p - 1.0) * float(grid.weights @ np.ones(grid.n))


# ---------------------------------------------------------------------------
# ODE classification oracle
# ---------------------------------------------------------------------------

@dataclass
class OdeState:
    """State of the radial classification ODE.

    rho_val = |wbar|, rho_deriv its xi-derivative, h_val = |Omega'|^2 and
    mu = h_val(0) * rho_val(0)^4, the conserved combination that separates the
    collapsing family (mu = 0) from orbits bounded away from zero.
    """

    rho_val: float
    rho_deriv: float
    h_val: float = 0.0
    mu: float = None

    def __post_init__(self):
        if self.rho_val <= 0:
            raise ValueError("rho_val must be positive")
        if self.mu is None:
            self.mu = self.h_val * self.rho_val**4


@dataclass
class OdeTrajectory:
    xi: np.ndarray
    rho_val: np.ndarray
    rho_deriv: np.ndarray
    h_val: np.ndarray
    mu: float
    first_integral: np.ndarray

    @property
    def energy_drift(self) -> float:
        return float(np.abs(self.first_integral - self.first_integral[0]).max())

    @property
    def min_rho(self) -> float:
        return float(self.rho_val.min())


def ode_first_integral(r, dr, p, mu):
    """Conserved quantity of the radial ODE (kinetic + centrifugal + potential)."""
    c0 = 4.0 / (p - 1.0) ** 2
    return 0.5 * dr**2 + mu / (2.0 * r**2) - c0 / 2.0 * r**2 + np.abs(r) ** (p + 1.0) / (p + 1.0)


def classify_ode_integrate(initial: OdeState, xi_max, p, n_samples=2001,
                           rtol=1e-12, atol=1e-14) -> OdeTrajectory:
    """Integrate rho'' = mu/rho^3 + c0 rho - rho^p on [0, xi_max].

    Negative xi_max integrates backwards.  DOP853 at tight tolerance keeps the
    first integral to ~1e-11 over |xi| <= 50 and resolves the decaying
    homoclinic orbit against its e^{+xi} instability.
    """
    mu = float(initial.mu)
    c0 = 4.0 / (p - 1.0) ** 2

    def rhs(_xi, yv):
        r, dr = yv
        return (dr, mu / r**3 + c0 * r - np.abs(r) ** (p - 1.0) * r)

    sol = solve_ivp(rhs, (0.0, xi_max), [initial.rho_val, initial.rho_deriv],
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    xi = np.linspace(0.0, xi_max, n_samples)
    r, dr = sol.sol(xi)
    h = mu / r**4
    return OdeTrajectory(xi=xi, rho_val=r, rho_deriv=dr, h_val=h, mu=mu,
                         first_integral=ode_first_integral(r, dr, p, mu))


# ---------------------------------------------------------------------------
# distance to the soliton manifold
# ---------------------------------------------------------------------------

def _h1_dist_sq(q: HState, d, grid, p, uw):
    """Unweighted H1 distance (plus ||q2||) to the best-aligned soliton at this d.

    The optimal direction has the closed form Omega = v/|v| with
    v_j = int (q1_j kappa + q1_j' kappa') dy, so only d needs searching.
    """
    k = kappa(d, grid.nodes, p)
    dk = grid.diff @ k
    dq1 = grid.diff @ q.q1
    v = uw @ (q.q1 * k[:, None] + dq1 * dk[:, None])
    nv = np.linalg.norm(v)
    base = float(uw @ ((q.q1**2).sum(1) + (dq1**2).sum(1) + (q.q2**2).sum(1)))
    ksq = float(uw @ (k**2 + dk**2))
    if nv == 0.0:
        # zero state: any direction, distance is just ||kappa||
        return base + ksq, np.eye(1, len(v), 0).ravel()
    return base - 2.0 * nv + ksq, v / nv


def project_to_manifold_distance(q: HState, grid: WeightedGrid, p,
                                 lam_range=(-3.0, 3.0), coarse=61):
    """Approximate inf over (d, Omega) of the H1(-1,1)+L2 distance to the manifold.

    Coarse scan over artanh(d) followed by a bounded local refinement; the
    returned distance is an upper bound on the infimum.
    """
    uw = grid.unweighted_weights
    lams = np.linspace(lam_range[0], lam_range[1], coarse)
    vals = [_h1_dist_sq(q, np.tanh(l), grid, p, uw)[0] for l in lams]
    i = int(np.argmin(vals))
    lo = lams[max(i - 1, 0)]
    hi = lams[min(i + 1, coarse - 1)]
    res = minimize_scalar(lambda l: _h1_dist_sq(q, np.tanh(l), grid, p, uw)[0],
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    dist_sq, omega = _h1_dist_sq(q, np.tanh(res.x), grid, p, uw)
    return float(np.sqrt(max(dist_sq, 0.0))), SolitonParams(float(np.tanh(res.x)), omega)
