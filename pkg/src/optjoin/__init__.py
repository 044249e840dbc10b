"""Estimation of optimal joinings between finite-alphabet stationary processes."""

__version__ = "0.1.0"

from .costs import AdditiveCost, CostSpec, adapted_cost, hamming_cost, k_step_cost, load_cost
from .errors import BudgetExceeded, InputError, OptJoinError, SolverError
from .estimators import (EstimateResult, EstimatorConfig, ScheduleRule, admissibility_diagnostic,
                         estimate_oj, k_schedule)
from .joining import (BlockJoining, BlockProcess, GapSpec, block_process, build_block_joining,
                      gap_block_process, product_measure)
from .measures import (Alphabet, BlockMeasure, SymbolSequence, empirical_block_measure, entropy,
                       ingest_sequence, l1_distance)
from .ot import (EntropicPlan, TransportPlan, c_eta_transform, check_cyclical_monotonicity, dual_gap,
                 semidual_value, solve_entropic_ot, solve_ot)
from .process_lab import (BoundInputs, MarkovModel, dbar_estimate, entropy_rate, exact_block_law,
                          k_step_cost_curve, phi_mixing, sample, theoretical_error_bound)
