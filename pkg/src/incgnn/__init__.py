"""Incremental GNN inference on dynamic graphs."""

from __future__ import annotations

from .engine import BatchResult, IncrementalEngine
from .graph import DynamicGraph, EdgeAdd, EdgeDel, FeatureUpdate, VertexAdd, VertexDel
from .model import EmbeddingStore, ModelSpec, bootstrap_forward
from .recompute import RecomputeEngine, oracle_full_recompute

__all__ = [
    "BatchResult",
    "DynamicGraph",
    "EdgeAdd",
    "EdgeDel",
    "EmbeddingStore",
    "FeatureUpdate",
    "IncrementalEngine",
    "ModelSpec",
    "RecomputeEngine",
    "VertexAdd",
    "VertexDel",
    "bootstrap_forward",
    "oracle_full_recompute",
]

__version__ = "0.1.0"
