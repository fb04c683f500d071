"""知识图谱模块"""

from .models import LABELS, N_LABELS, N_RELATIONS, Entity, EntityType, RelationType, Triple, VisionToken
from .sampler import (
    MultiScaleGraph,
    Subgraph,
    build_edge_tensors,
    build_multiscale,
    load_scales,
    prune_to_budget,
    save_scales,
)
from .storage import load, merge_into, save
from .store import KnowledgeGraph

__all__ = [
    "LABELS",
    "N_LABELS",
    "N_RELATIONS",
    "Entity",
    "EntityType",
    "RelationType",
    "Triple",
    "VisionToken",
    "KnowledgeGraph",
    "Subgraph",
    "MultiScaleGraph",
    "prune_to_budget",
    "build_multiscale",
    "build_edge_tensors",
    "save_scales",
    "load_scales",
    "save",
    "load",
    "merge_into",
]
