"""Generative flows on SPD and correlation matrices through global charts."""

from .errors import SpdFlowError
from .kernels import backend

__all__ = ["SpdFlowError", "backend"]
__version__ = "0.1.0"
