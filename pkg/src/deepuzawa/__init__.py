"""Solvers for elliptic PDE-constrained optimal control.

The package pairs a neural collocation solver (an Uzawa outer loop around
inner gradient-based minimisation of a coercive quadrature Lagrangian,
with plain and augmented variants) with finite-difference reference
iterations whose inner problems are solved exactly, for verifying the
saddle-point convergence theory at the discrete level.
"""

from .closed_forms import ExactSolution, exact_eval, residual_check_boundary_layer
from .driver import RunRecord, UzawaConfig, record_errors, rho_alpha_sweep, run_deep_uzawa
from .fd_oracle import (FDRun, Grid1D, KKTSolution, fd_direct_kkt_solve, fd_operators,
                        fd_projected_uzawa_run, fd_uzawa_run, gauss_seidel_adjoint_run)
from .geometry import (CollocationSet, Domain, GridField, boundary_cutoff, build_grid,
                       cutoff_jet, l2_norm, quadrature_sum)
from .lagrangian import (MultiplierField, ProblemSpec, TargetSpec, constraint_residual,
                         cost_density, discrete_lagrangian, multiplier_update,
                         projected_multiplier_update)
from .network import (Jet, NetworkParameters, NetworkSpec, batch_jets,
                      finite_difference_gradient, forward_jet, init_network,
                      load_checkpoint, loss_and_gradient, save_checkpoint)
from .optim import AdamState, adam_step, gd_step

__version__ = "0.1.0"
