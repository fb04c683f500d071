"""评估汇总：NLG 指标 + CE 指标，输出固定键的指标字典"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from joblib import Parallel, delayed
from loguru import logger

from ..common.errors import LengthMismatch
from .labeler import LabelVector, ce_scores, extract_labels
from .metrics import bleu, cider_d, meteor, rouge_l

METRIC_KEYS = (
    "bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor", "cider_d",
    "ce_precision", "ce_recall", "ce_f1",
)


def _per_example(hyp: str, ref: str, need_hyp_labels: bool, need_ref_labels: bool):
    return (
        rouge_l(hyp, ref),
        meteor(hyp, ref),
        extract_labels(hyp) if need_hyp_labels else None,
        extract_labels(ref) if need_ref_labels else None,
    )


def evaluate_texts(
    hypotheses: Sequence[str],
    references: Sequence[str],
    hyp_labels: Optional[Sequence[LabelVector]] = None,
    ref_labels: Optional[Sequence[LabelVector]] = None,
    workers: int = 1,
) -> Dict[str, float]:
    """计算全部指标

    Args:
        hypotheses: 生成报告
        references: 参考报告（逐条对齐）
        hyp_labels: 可选的外部生成报告标签，缺省时规则抽取
        ref_labels: 可选的外部参考标签（如金标准），缺省时规则抽取
        workers: 并行 worker 数，结果与串行一致

    Returns:
        {bleu1..bleu4, rouge_l, meteor, cider_d, ce_precision, ce_recall, ce_f1}
    """
    hypotheses = list(hypotheses)
    references = list(references)
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"假设数 {len(hypotheses)} 与参考数 {len(references)} 不一致")
    for name, labels in (("hyp_labels", hyp_labels), ("ref_labels", ref_labels)):
        if labels is not None and len(labels) != len(hypotheses):
            raise LengthMismatch(f"{name} 数量 {len(labels)} 与样本数 {len(hypotheses)} 不一致")

    need_h, need_r = hyp_labels is None, ref_labels is None
    if workers > 1:
        rows = Parallel(n_jobs=workers)(
            delayed(_per_example)(h, r, need_h, need_r) for h, r in zip(hypotheses, references)
        )
    else:
        rows = [_per_example(h, r, need_h, need_r) for h, r in zip(hypotheses, references)]

    n = len(hypotheses)
    result = {f"bleu{k}": bleu(hypotheses, references, k) for k in range(1, 5)}
    result["rouge_l"] = sum(row[0] for row in rows) / n
    result["meteor"] = sum(row[1] for row in rows) / n
    result["cider_d"] = cider_d(hypotheses, [[r] for r in references])
    ce = ce_scores(
        list(hyp_labels) if hyp_labels is not None else [row[2] for row in rows],
        list(ref_labels) if ref_labels is not None else [row[3] for row in rows],
    )
    result["ce_precision"] = ce["precision"]
    result["ce_recall"] = ce["recall"]
    result["ce_f1"] = ce["f1"]

    logger.info(
        f"评估完成: n={n}, BLEU-4={result['bleu4']:.4f}, ROUGE-L={result['rouge_l']:.4f}, "
        f"METEOR={result['meteor']:.4f}, CIDEr-D={result['cider_d']:.4f}, CE-F1={result['ce_f1']:.4f}"
    )
    return {key: float(result[key]) for key in METRIC_KEYS}


def read_lines(path: str) -> List[str]:
    """每行一篇报告"""
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"文件不存在: {file_path}")
    with open(file_path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def write_metrics(metrics: Dict[str, float], path: Optional[str] = None) -> str:
    """序列化为单个 JSON 对象，可选写入文件"""
    text = json.dumps({k: metrics[k] for k in METRIC_KEYS}, ensure_ascii=False, indent=2)
    if path:
        file_path = Path(path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_text(text + "\n", encoding="utf-8")
        logger.info(f"指标已保存: {file_path}")
    return text
