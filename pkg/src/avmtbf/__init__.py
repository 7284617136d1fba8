"""Vehicle-level MTBF from perception error rates and driving-situation statistics."""
from .model import (
    FailureModelTree,
    Leaf,
    MissionProfile,
    ModelResult,
    Refinement,
    failure_rate_extended,
    failure_rate_simple,
    human_baseline_mtbf,
    kappa,
    required_error_rate,
)

__version__ = "0.1.0"
