"""disperlim: a pseudospectral laboratory for the long-wave limits of
ion-acoustic plasma flow.

The package integrates the rescaled ion flow (2D electrostatic, 3D with a
streamwise guide field), solves the limit models that govern the leading
profile (KP-II type in 2D, Zakharov-Kuznetsov type in 3D) and their
linearized corrections, builds well-prepared initial data from the profile
hierarchy, and measures the rescaled remainder across an epsilon sweep to
exhibit the quantitative convergence the limit theory predicts.
"""

from .errors import (ConfigurationError, ConstraintError, ConvergenceError,
                     DisperlimError, NumericalError)
from .grid import Grid, RealField, ScalingParams, SpectralField, build_grid
from .spectral import (antiderivative_x1, dealias, forward_transform,
                       inverse_transform, l2_norm, sobolev_norm,
                       spectral_derivative, triple_norm, weighted_gradient,
                       weighted_laplacian)
from .poisson import solve_poisson
from .euler_poisson import (DiagnosticsLog, EPState, StepperConfig,
                            ep_rhs, linearized_symbol, run_ep, step_ep)
from .limit_equations import (LimitCoefficients, LimitConfig,
                              LinearizedSource, Trajectory,
                              conserved_quantities, kdv_line_soliton,
                              kp2_linear_symbol, solve_kdv, solve_kp2,
                              solve_linearized_kp, solve_linearized_zk,
                              solve_zk, zero_mean_soliton, zk_linear_symbol)
from .profiles import (ProfileHierarchy, ResidualReport,
                       assemble_initial_data, first_order_profiles_kp,
                       first_order_profiles_zk, residual_order_systems,
                       second_order_profiles_kp, second_order_profiles_zk,
                       second_order_sources_kp, second_order_sources_zk,
                       tilde_aggregates)
from .study import (ConvergenceTable, RemainderState, StudyConfig,
                    compute_remainder, fit_order, remainder_norm_report,
                    run_convergence_study)
from .initial_data import gaussian_zero_mean, kdv_soliton_family, mode_packet

__version__ = "0.1.0"
