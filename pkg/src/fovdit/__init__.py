"""Foveated flow-matching diffusion on mixed-resolution token sequences."""

__version__ = "0.1.0"

from .codec import CodecConfig, LatentGrid
from .foveation import FoveatedSequence, TokenLayout
from .masks import FoveationMask, MaskSpec
from .model import DiTConfig, DiTParams
from .tensor import Parameter, Tensor

__all__ = [
    "CodecConfig",
    "LatentGrid",
    "FoveatedSequence",
    "TokenLayout",
    "FoveationMask",
    "MaskSpec",
    "DiTConfig",
    "DiTParams",
    "Parameter",
    "Tensor",
    "__version__",
]
