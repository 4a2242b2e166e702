"""Link-length optimization for a whippletree two-finger climbing gripper."""
from .environment import BivariateLogNormal, HoldRecord, RectRegion, fit_lognormal
from .linkage import ContactSpec, LinkLengths, REFERENCE_LENGTHS, forward_configuration, load_topology, solve_ik
from .objective import DecisionVector, TaskConfig, WeightParams, evaluate
from .optimizer import ProblemSpec, multi_start, solve
from .statics import StaticsParams

__version__ = "0.1.0"
