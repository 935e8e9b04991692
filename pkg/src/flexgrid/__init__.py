"""Appliance-level flexible scheduling with decentralized, tree-based plan coordination."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    HORIZON,
    AgentPlanSet,
    Appliance,
    ForbiddenWindow,
    HouseholdInfo,
    HouseType,
    NoOverlap,
    Plan,
    Schedule,
    validate_schedule,
)
from .epos import build_topology, run, select_plan  # noqa: E402
from .metrics import avg_discomfort, global_cost, peak_shift, unfairness  # noqa: E402
from .plans import combine_plans, filter_constraints, generate_plans  # noqa: E402
from .sampling import Mechanism, SamplingMechanism, sample  # noqa: E402

__all__ = [
    "HORIZON", "AgentPlanSet", "Appliance", "ForbiddenWindow", "HouseholdInfo", "HouseType",
    "NoOverlap", "Plan", "Schedule", "validate_schedule", "build_topology", "run", "select_plan",
    "avg_discomfort", "global_cost", "peak_shift", "unfairness", "combine_plans",
    "filter_constraints", "generate_plans", "Mechanism", "SamplingMechanism", "sample",
]
