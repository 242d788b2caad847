"""Numerical lab for the vector-valued 1D semilinear wave equation at blow-up.

Grids and norms live in `space`, the stationary family and its ODE oracle in
`solitons`, the rotation calculus in `rotations`, the linearized spectral
theory in `spectral`, time integration in `evolution`, and the modulation /
trapping machinery in `modulation`.  The `sswave` CLI drives reproducible
experiments; see the README.
"""

from .space import (GridConstructionError, HState, Params, ResolventError,
                    WeightedGrid, apply_L, h0_norm, h_norm, integrate_rho,
                    make_grid, phi_inner, rho, solve_resolvent)
from .solitons import (OdeState, OdeTrajectory, SolitonParams,
                       classify_ode_integrate, d_kappa, energy, kappa, kappa0,
                       kbar, project_to_manifold_distance, soliton_energy,
                       stationary_residual, xi_transform)
from .rotations import closed_form_R, compose_R, generator_A, givens
from .spectral import (EigenData, ScalarPair, F_bar, F_tilde, W_bar, W_tilde,
                       apply_Lbar, apply_Ltilde, decompose_bar, decompose_tilde,
                       form_bar, form_tilde, phi_pair, project_bar,
                       project_tilde, psi_bar, psi_tilde)
from .evolution import (BlowupEstimate, PhysicalState, SelfSimState,
                        estimate_blowup, physical_step, selfsim_rhs,
                        simulate_physical, simulate_selfsim, to_selfsim)
from .modulation import (ModulatedState, ModulationError, MonitorSeries,
                         Phi, SolitonFrame, TrappingResult, extract_alphas,
                         modulate, monitor_dynamics, R_minus,
                         remainder_perturbation, soliton_state,
                         trapping_experiment)
from .reporting import RunReport, emit_series, read_series

__version__ = "0.1.0"
