"""节点特征模块"""

from .node_encoder import (
    ExternalEmbedder,
    HashedEmbedder,
    NodeFeatureMatrix,
    TextEmbedder,
    encode_nodes,
    entity_text,
    fnv1a_64,
    make_embedder,
    mean_pool,
)

__all__ = [
    "TextEmbedder",
    "HashedEmbedder",
    "ExternalEmbedder",
    "NodeFeatureMatrix",
    "make_embedder",
    "entity_text",
    "fnv1a_64",
    "mean_pool",
    "encode_nodes",
]
