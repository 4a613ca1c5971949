"""Planning stack: costmap inflation, A* global paths, DWA local control,
and the goal-seeking state machine that ties them together."""

from .costmap import (
    FREE_COST,
    INSCRIBED,
    LETHAL,
    UNKNOWN_COST,
    Costmap,
    CostmapParams,
    build_costmap,
)
from .global_planner import (
    GoalInCollisionError,
    NoPathError,
    Path,
    PlanningError,
    StartInCollisionError,
    plan_global,
)
from .local_planner import BlockedError, DwaParams, plan_local
from .navigator import Navigator, NavState, NavStatus, NavTolerances

__all__ = [
    "BlockedError",
    "Costmap",
    "CostmapParams",
    "DwaParams",
    "FREE_COST",
    "GoalInCollisionError",
    "INSCRIBED",
    "LETHAL",
    "Navigator",
    "NavState",
    "NavStatus",
    "NavTolerances",
    "NoPathError",
    "Path",
    "PlanningError",
    "StartInCollisionError",
    "UNKNOWN_COST",
    "build_costmap",
    "plan_global",
    "plan_local",
]
