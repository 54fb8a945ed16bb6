"""
depthkit — desk-scale monocular depth estimation on a small numpy autodiff core.

Gated large-kernel attention • Global bin prediction • SILog training • Synthetic scenes
"""

__version__ = "0.1.0"

from depthkit.config import ModelConfig, TrainConfig, get_config  # noqa: E402
from depthkit.helpers import log, make_hash_id  # noqa: E402
from depthkit.model import DepthNet, load_checkpoint, save_checkpoint  # noqa: E402
from depthkit.tensor import Tensor, backward, no_grad, precision, tensor  # noqa: E402

__all__ = [
    "DepthNet",
    "ModelConfig",
    "Tensor",
    "TrainConfig",
    "backward",
    "get_config",
    "load_checkpoint",
    "log",
    "make_hash_id",
    "no_grad",
    "precision",
    "save_checkpoint",
    "tensor",
]
