"""numpy 神经网络层（手写前向/反向）"""

from .attention import MultiHeadAttention
from .base import Module
from .bridge import CrossModalBridge, PrefixMatrix, assemble_prefix
from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import ReportDecoder, Vocab, detokenize, generate, generation_loss, tokenize
from .fusion import FusedScales, ScaleFusion, select_final
from .graph import GraphEncoder, GraphEncoderConfig, GraphStructure, gat_layer, gcn_layer, rgcn_forward, rgcn_layer
from .optim import AdamW
from .vision import PatchEncoder, QFormer, Retriever, VisionMemory, encode_image, extract_vision_tokens, retrieve

__all__ = [
    "Module",
    "MultiHeadAttention",
    "GraphEncoder",
    "GraphEncoderConfig",
    "GraphStructure",
    "rgcn_layer",
    "rgcn_forward",
    "gcn_layer",
    "gat_layer",
    "ScaleFusion",
    "FusedScales",
    "select_final",
    "PatchEncoder",
    "QFormer",
    "Retriever",
    "VisionMemory",
    "encode_image",
    "extract_vision_tokens",
    "retrieve",
    "CrossModalBridge",
    "PrefixMatrix",
    "assemble_prefix",
    "Vocab",
    "ReportDecoder",
    "tokenize",
    "detokenize",
    "generation_loss",
    "generate",
    "AdamW",
    "save_checkpoint",
    "load_checkpoint",
]
