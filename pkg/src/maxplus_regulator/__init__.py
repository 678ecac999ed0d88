"""Max-plus fundamental solutions for discrete-time linear regulator problems.

Solves sup-type linear regulator problems whose terminal payoff need not be
quadratic: the dynamic-programming kernel is propagated in a dual space by
horizon doubling, then combined with the max-plus dual of the payoff to
evaluate value functions on grids, with Riccati recursions and a grid-based
dynamic-programming oracle for benchmarking, plus infinite-horizon limits.
"""
from .convergence import (ConvergenceReport, DoublingRecord, Margins,
                          comparison_sequence, convergence_margins,
                          doubling_limit, limit_offset, margin_function,
                          primal_limit)
from .duality import (DualFunction, GridSpec, NamedPayoff, QuadraticPayoff,
                      SampledPayoff, dual_transform, inverse_dual,
                      named_payoff, quadratic_dual, quadratic_dual_on_grid,
                      quadratic_payoff, read_grid_csv, write_grid_csv)
from .fundamental import (KernelState, PropagationResult, compose,
                          initial_kernel, initial_state, kernel_dual,
                          kernel_step, propagate)
from .grid_oracle import (dp_solve, dp_step, project_to_grid,
                          steering_value_oracle)
from .model import (FeasibilityError, GrowthBound, HypothesisError,
                    NonConvergenceError, PartitionedHessian, RegulatorProblem,
                    SpaceKind, StructuralError, controllability_matrix,
                    validate_problem)
from .riccati import (DualityFeasibilityReport, are_fixed_point,
                      check_duality_feasibility, dre_solve, dre_step)
from .value_eval import (infinite_horizon_grid, infinite_horizon_value,
                         relative_error, value_at, value_grid)

__all__ = [name for name in dir() if not name.startswith("_")]
