"""All-pay-auction model of proof-of-work mining under logit equilibrium."""

from .model import (
    AllocationSpec,
    AuctionParams,
    CostProfile,
    DifficultyVector,
    NonDifferentiableError,
    alloc_grad,
    certify_lipschitz,
    difficulty,
    profile_grid,
)
from .race import (
    exact_win_prob,
    expected_win_prob,
    first_success_win_prob,
    rationality_check,
    simulate_races,
    utility,
)
from .qre import BeliefDensity, BidGrid, QreSolution, logit_response, nash_check, solve_qre
from .analysis import (
    ConditionReport,
    QuadraticFeasibility,
    ScanBox,
    check_lemma1,
    check_lemma2,
    check_logderiv_bound,
    check_pi_derivative,
    check_prop1,
    default_cost_box,
    quadratic_feasibility,
    scan_theorem,
)

__version__ = "0.1.0"
