"""评估模块"""

from .evaluator import METRIC_KEYS, evaluate_texts, write_metrics
from .labeler import LabelVector, ce_scores, extract_labels, load_label_file
from .metrics import bleu, cider_d, meteor, rouge_l

__all__ = [
    "METRIC_KEYS",
    "evaluate_texts",
    "write_metrics",
    "LabelVector",
    "extract_labels",
    "ce_scores",
    "load_label_file",
    "bleu",
    "rouge_l",
    "meteor",
    "cider_d",
]
