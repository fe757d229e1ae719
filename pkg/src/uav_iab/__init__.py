"""System-level simulator of a UAV relay base station on a wireless backhaul,
with a deep-Q placement/tilt controller."""

__version__ = "0.1.0"

from .config import RunConfig, apply_profile, load_config, save_config  # noqa: F401
from .rlenv import CandidateGrids, Env, StateEvaluator, UavState  # noqa: F401
