"""Path planning for hybrid-electric and electric small aircraft with mixed-integer MPC.

Free space is encoded as a hybrid zonotope built from a convex partition of
the map; each horizon is a multistage MIQP solved by branch and bound over a
structured interior-point QP solver.
"""

from .geomap import ConvexPartition, FeasibleMap, MapError, PolygonMap, convex_partition
from .miqp import MIQPConfig, MIQPResult, MultistageMIQP, solve_miqp
from .msqp import MultistageQP, QPSolution, Stage, solve_qp
from .planner import MPCProblem, MPCWeights, PlanningError, Trajectory, plan_step, receding_horizon
from .uasmodel import VehicleParams, Wayset, build_model
from .zonoset import ConstrainedZonotope, HybridZonotope, SetError, Zonotope

__version__ = "0.1.0"

__all__ = [
    "ConstrainedZonotope", "ConvexPartition", "FeasibleMap", "HybridZonotope", "MIQPConfig", "MIQPResult",
    "MPCProblem", "MPCWeights", "MapError", "MultistageMIQP", "MultistageQP", "PlanningError", "PolygonMap",
    "QPSolution", "SetError", "Stage", "Trajectory", "VehicleParams", "Wayset", "Zonotope", "build_model",
    "convex_partition", "plan_step", "receding_horizon", "solve_miqp", "solve_qp",
]  # fmt: skip
