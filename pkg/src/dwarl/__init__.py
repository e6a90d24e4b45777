"""Dynamically feasible DWA + deep RL local planner for a differential-drive robot."""

from .dynamics import Pose, RobotLimits, VelocityPair, VelocityWindow
from .observation import ObservationBlock, ObservationConfig
from .reward import RewardConfig
from .world import ScenarioConfig, load_scenario

__version__ = "0.1.0"

__all__ = [
    "ObservationBlock",
    "ObservationConfig",
    "Pose",
    "RewardConfig",
    "RobotLimits",
    "ScenarioConfig",
    "VelocityPair",
    "VelocityWindow",
    "load_scenario",
    "__version__",
]
