"""Box-constrained root finding with a non-linear projection, and CRN steady states."""

from .projector import (BoxDomain, IndexSets, InfeasiblePointError, arc_displacement_norm,
                        index_sets, project_nonlinear, project_orthogonal)
from .problem import DomainError, RootProblem, grad_theta, theta
from .solver import (IterationRecord, SolveOutcome, SolverConfig, Status, StepKind,
                     gradient_step, is_stationary, newton_direction, nlpc_solve,
                     nlpc_solve_with_restarts, try_newton_step)
from .crn import (ConservationBasis, CrnNetwork, Reaction, SteadyStateTarget,
                  conservation_basis, flux_jacobian, fluxes, load_network, make_target,
                  parse_network, sample_on_scc, SccSampler, steady_state_problem)
from .dynamics import IntegratorConfig, Trajectory, dynamic_steady_state, integrate

__version__ = "0.1.0"
