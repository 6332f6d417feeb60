"""Streaming multi-modal exam proctoring: geometric behavior features from
per-frame perception records, scored by a single-frame boosted-tree model
and a sliding-window recurrent model."""

from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
