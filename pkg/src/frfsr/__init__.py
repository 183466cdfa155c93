"""Reference-based 4x super-resolution with texture matching, deformable
alignment, texture-adaptive aggregation and two-stage feature-reuse training.
"""

from . import (aggregation, alignment, checkpoint, config, correspondence,
               data, kernels, losses, metrics, network, tensor, training)
from .config import TrainConfig, load_config, parse_config
from .gradcheck import GradCheckReport, grad_check
from .network import FrontEnd, NetworkParams, StageOutputs
from .tensor import Tensor

__version__ = "1.0.0"

__all__ = [
    "Tensor", "TrainConfig", "load_config", "parse_config", "FrontEnd",
    "NetworkParams", "StageOutputs", "GradCheckReport", "grad_check",
    "tensor", "kernels", "correspondence", "alignment", "aggregation",
    "network", "losses", "metrics", "data", "checkpoint", "config",
    "training", "__version__",
]
