from .cooperative import (CooperativeConfig, CooperativePolicy, TrackedObject, Tracker,
                          cooperative_policy)
from .oracle import OracleConfig, OraclePolicy, oracle_policy
from .planner import SpaceTimePlan, plan_astar
from .route import Route

__all__ = ["CooperativeConfig", "CooperativePolicy", "TrackedObject", "Tracker",
           "cooperative_policy", "OracleConfig", "OraclePolicy", "oracle_policy",
           "SpaceTimePlan", "plan_astar", "Route"]
