"""Multi-path building-footprint segmentation toolkit.

A self-contained segmentation stack: a 4-D tensor library with reverse-mode
autodiff (compiled kernels with a NumPy fallback), the multi-path encoder
with channel attention and spatial pooling enhancement, training with Adam
and bit-exact checkpoints, pixel-level metrics, synthetic scene generation,
and a CLI tying it together.
"""

from .kernels import active_backend
from .model import Model, ModelConfig, build
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = ["Model", "ModelConfig", "Tensor", "active_backend", "build"]
