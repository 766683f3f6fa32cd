"""Time series transformer for bearing fault diagnosis.

A self-contained numpy implementation: reverse-mode autodiff core,
subsequence tokenizer with class token and learned position encoding,
pre-norm attention/MLP stack, Adam training with step decay, a synthetic
vibration dataset, and analysis tooling (analytic cost model, confusion
matrices, exact t-SNE).
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, ShapeError, TrainingAbort
from .model import TSTConfig, TSTModel, load_checkpoint, save_checkpoint
from .tensor import Tensor, backward, no_grad

__all__ = [
    "ConfigError",
    "DataError",
    "ShapeError",
    "TrainingAbort",
    "TSTConfig",
    "TSTModel",
    "Tensor",
    "backward",
    "no_grad",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
