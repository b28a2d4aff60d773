"""Slow-fast stochastic evolution equations driven by fractional Brownian motion.

Spectral (diagonal) Galerkin spaces, exact fBM sampling and Volterra-kernel
operators, pathwise Young integrals through Weyl derivatives, exponential
integrators for the slow-fast pair and its controlled/averaged/skeleton
relatives, ergodic averaging, and large/moderate deviation rate functions
with Monte Carlo checks.
"""
__version__ = "0.1.0"

from .errors import (CapabilityError, ConfigError, ContractError, DecompositionError, DivergenceError,
                     DomainError, IntegrabilityError, MfbmError, NumericalError, OutOfRangeError,
                     RegimeError, SingularControlError, StiffnessError)
from .spectral import (BoundReport, SpectralSpace, frac_power_apply, graph_norm, phi1, semigroup_apply,
                       verify_semigroup_bounds)
from .paths import GridPath, PathCache, grid_hash, l2_energy, uniform_grid
from .noise import (CovarianceSpec, HurstParam, apply_KH, apply_KH_inverse, cm_derivative, fbm_cholesky,
                    fbm_covariance, hurst_constant, kh_weight_matrix, sample_cylindrical_fbm, sample_fbm_1d,
                    sample_q_wiener, volterra_kernel, volterra_kernel_2f1)
from .rough import (FracOrder, NormReport, path_norms, rs_integral, rs_integral_operator, verify_beta_bounds,
                    weyl_backward, weyl_forward)
from .coefficients import CoefficientSystem, family_names, make_family, register_family
from .solvers import (ScaleParams, SolveResult, deviation_path, solve_averaged, solve_controlled, solve_frozen,
                      solve_khasminskii_auxiliary, solve_skeleton_ldp, solve_skeleton_mdp, solve_slow_fast)
from .averaging import (AssumptionReport, AveragedDrift, SweepReport, averaging_error_sweep, build_bbar,
                        check_assumptions, estimate_bbar)
from .deviations import (ComparisonVerdict, McLdpReport, RateReport, TerminalEvent, fbm_ou_variance,
                         gaussian_event_rate, gaussian_terminal_moments, laplace_functional, mc_rare_event,
                         minimal_control_ldp, rate_ldp, rate_mdp, rate_vs_mc)
from .config import ExperimentConfig, load_config
