"""Provision-after-Wait: solvers and simulators for waiting-time equilibria."""

__version__ = "0.1.0"

from paw.approx import ApproxConfig, grid_of, solve_approx
from paw.dynamics import (
    DynamicsTrace,
    MinEquilibrium,
    SimConfig,
    check_independence,
    min_equilibrium,
    simulate,
    verify_trace,
)
from paw.errors import (
    CapExceeded,
    ContractViolation,
    InfeasibleBudget,
    InputError,
    InvariantFailure,
    PawError,
    StructureError,
)
from paw.exact import KnapsackInstance, brute_force_oracle, knapsack_optimum, reduce_knapsack, solve_exact
from paw.lottery import (
    Contract,
    LotteryMenu,
    ValuationCurve,
    dominance_check,
    equilibrium_menu,
    patient_choice,
    sw_lottery,
    sw_randomized,
)
from paw.matching import Auction, Matching, auction_from_quotas, extract_assignment, stable_match
from paw.model import (
    Assignment,
    Instance,
    WelfareReport,
    check_equilibrium,
    check_feasible,
    derandomize,
    evaluate,
    load_instance,
    settle_ties,
)

__all__ = [
    "ApproxConfig",
    "Assignment",
    "Auction",
    "CapExceeded",
    "Contract",
    "ContractViolation",
    "DynamicsTrace",
    "InfeasibleBudget",
    "InputError",
    "Instance",
    "InvariantFailure",
    "KnapsackInstance",
    "LotteryMenu",
    "Matching",
    "MinEquilibrium",
    "PawError",
    "SimConfig",
    "StructureError",
    "ValuationCurve",
    "WelfareReport",
    "auction_from_quotas",
    "brute_force_oracle",
    "check_equilibrium",
    "check_feasible",
    "check_independence",
    "derandomize",
    "dominance_check",
    "equilibrium_menu",
    "evaluate",
    "extract_assignment",
    "grid_of",
    "knapsack_optimum",
    "load_instance",
    "min_equilibrium",
    "patient_choice",
    "reduce_knapsack",
    "settle_ties",
    "simulate",
    "solve_approx",
    "solve_exact",
    "stable_match",
    "sw_lottery",
    "sw_randomized",
    "verify_trace",
]
