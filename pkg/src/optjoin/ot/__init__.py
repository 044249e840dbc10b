"""Exact and entropy-regularized optimal transport between block measures."""

from .entropic import EntropicPlan, c_eta_transform, semidual_value, solve_entropic_ot
from .exact import TransportPlan, check_cyclical_monotonicity, dual_gap, solve_ot
