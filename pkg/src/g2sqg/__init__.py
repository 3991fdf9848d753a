"""Answer-aware question generation with a graph-to-sequence model trained on numpy."""

from .errors import G2SError
from .model import Graph2Seq, ModelConfig

__all__ = ["G2SError", "Graph2Seq", "ModelConfig"]
__version__ = "0.1.0"
