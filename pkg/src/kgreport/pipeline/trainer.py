"""训练与评估编排"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from tqdm import tqdm

from ..common.config import PipelineConfig
from ..common.errors import EmptyCorpus
from ..eval.evaluator import evaluate_texts, write_metrics
from ..eval.labeler import LabelVector, load_label_file
from ..kg import storage
from ..kg.store import KnowledgeGraph
from ..nn.optim import AdamW
from .corpus import ReportPair, load_corpus
from .model import ReportModel, build_vocab, load_model, save_model

CHECKPOINT_NAME = "model.ckpt"
TRAIN_LOG_NAME = "train_log.csv"


@dataclass
class TrainResult:
    model: ReportModel
    losses: List[float]
    checkpoint_path: Optional[str] = None


def load_kg(path: str) -> KnowledgeGraph:
    return storage.load(path).freeze()


def train_model(config: PipelineConfig, pairs: Sequence[ReportPair], kg: KnowledgeGraph,
                show_progress: bool = True) -> TrainResult:
    """在内存中训练模型

    Args:
        config: 流水线配置
        pairs: 训练语料
        kg: 已冻结的知识图谱
        show_progress: 是否显示进度条

    Returns:
        TrainResult（不写文件）
    """
    if not pairs:
        raise EmptyCorpus("训练语料为空")
    model = ReportModel(config, build_vocab([p.report for p in pairs]), kg)
    logger.info(f"模型构建完成: 词表 {len(model.vocab)}, 参数量 {model.n_parameters()}")
    examples = [(p.load_image(), model.target_ids(p.report)) for p in pairs]

    optimizer = AdamW(model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2),
                      weight_decay=config.weight_decay)
    data_rng = np.random.default_rng(config.seed + 1)
    batch_size = min(config.batch, len(examples))
    losses: List[float] = []
    for step in tqdm(range(config.steps), desc="训练", disable=not show_progress):
        indices = data_rng.choice(len(examples), size=batch_size, replace=False)
        loss, grads = model.loss_and_grads([examples[i] for i in indices])
        optimizer.step(grads)
        losses.append(loss)
        if step == 0 or (step + 1) % config.log_every == 0:
            logger.info(f"step {step + 1}/{config.steps}: loss={loss:.6f}")
    return TrainResult(model=model, losses=losses)


def train(config: PipelineConfig, corpus_path: str, kg_path: str, out_dir: str) -> TrainResult:
    """端到端训练并写出检查点与损失日志

    Args:
        config: 流水线配置
        corpus_path: 语料 JSONL
        kg_path: 知识图谱 m3kg 文件
        out_dir: 输出目录

    Returns:
        TrainResult
    """
    pairs = load_corpus(corpus_path)
    kg = load_kg(kg_path)
    result = train_model(config, pairs, kg)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / CHECKPOINT_NAME
    save_model(result.model, str(ckpt))
    pd.DataFrame({"step": np.arange(1, len(result.losses) + 1), "loss": result.losses}).to_csv(
        out / TRAIN_LOG_NAME, index=False
    )
    result.checkpoint_path = str(ckpt)
    logger.info(f"训练完成: {len(result.losses)} 步, 检查点 {ckpt}")
    return result


def generate_reports(model: ReportModel, pairs: Sequence[ReportPair], workers: int = 1) -> List[str]:
    """逐样本生成；图分支只前向一次"""
    X_final, _ = model.graph_forward()
    images = [p.load_image() for p in pairs]
    if workers > 1:
        return Parallel(n_jobs=workers, prefer="threads")(
            delayed(model.generate_report)(image, X_final) for image in images
        )
    return [model.generate_report(image, X_final) for image in images]


def evaluate_model(
    model: ReportModel,
    pairs: Sequence[ReportPair],
    hyp_labels: Optional[Sequence[LabelVector]] = None,
    ref_labels: Optional[Sequence[LabelVector]] = None,
) -> Tuple[Dict[str, float], List[str]]:
    """生成并评分

    Returns:
        (指标字典, 生成报告)
    """
    if not pairs:
        raise EmptyCorpus("评估语料为空")
    workers = model.config.eval_workers
    hypotheses = generate_reports(model, pairs, workers)
    metrics = evaluate_texts(hypotheses, [p.report for p in pairs], hyp_labels, ref_labels, workers)
    return metrics, hypotheses


def evaluate(
    checkpoint_path: str,
    corpus_path: str,
    kg_path: str,
    out_path: Optional[str] = None,
    overrides: Optional[Dict] = None,
    ref_label_path: Optional[str] = None,
    hyp_label_path: Optional[str] = None,
    use_gold_labels: bool = False,
) -> Dict[str, float]:
    """加载检查点，在语料上生成并输出指标 JSON

    Args:
        checkpoint_path: 检查点
        corpus_path: 语料 JSONL
        kg_path: 训练时使用的知识图谱
        out_path: 指标 JSON 输出路径，缺省只打印
        overrides: 覆盖旁路配置中的解码相关字段（decode_mode / beam_k / eval_workers）
        ref_label_path: 参考报告的外部标签文件
        hyp_label_path: 生成报告的外部标签文件
        use_gold_labels: 以语料中的金标准标签作为参考标签

    Returns:
        指标字典
    """
    pairs = load_corpus(corpus_path)
    model = load_model(checkpoint_path, load_kg(kg_path))
    if overrides:
        model.config = model.config.replace(**overrides)

    ref_labels = None
    if ref_label_path:
        ref_labels = load_label_file(ref_label_path)
    elif use_gold_labels:
        ref_labels = [p.gold_labels for p in pairs]
    hyp_labels = load_label_file(hyp_label_path) if hyp_label_path else None

    metrics, hypotheses = evaluate_model(model, pairs, hyp_labels, ref_labels)
    if out_path:
        hyp_path = Path(out_path).with_suffix(".hyp.txt")
        hyp_path.parent.mkdir(parents=True, exist_ok=True)
        hyp_path.write_text("".join(h + "\n" for h in hypotheses), encoding="utf-8")
    logger.info(write_metrics(metrics, out_path))
    return metrics
