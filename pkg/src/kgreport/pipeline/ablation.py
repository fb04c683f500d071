"""消融实验：每个单元使用相同的种子与步数训练，再在训练语料上评估

表格布局：
    entity   -> #Entity | BLEU-4 ROUGE-L METEOR CIDEr
    visual   -> Number  | BLEU-4 ROUGE-L METEOR CIDEr
    encoder  -> Encoder | BLEU-4 ROUGE-L METEOR CIDEr
    toggles  -> ce:  Setting RG MF DVG | Precision Recall F1
                nlg: Setting RG MF DVG | BLEU-1 BLEU-2 BLEU-3 BLEU-4 RG-L METEOR CIDEr
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from loguru import logger

from ..common.config import PipelineConfig, default_budgets
from ..common.errors import ConfigError
from ..common.print_table import format_frame
from ..kg.store import KnowledgeGraph
from .corpus import ReportPair
from .trainer import evaluate_model, train_model

SWEEPS = ("entity", "visual", "encoder", "toggles")

DEFAULT_VALUES = {
    "entity": [100, 200, 300, 400, 500],
    "visual": [100, 300, 500, 700, 1000],
    "encoder": ["gcn", "rgcn", "gat"],
}

# (Setting, RG, MF, DVG)
TOGGLE_SETTINGS: List[Tuple[str, bool, bool, bool]] = [
    ("BASE", False, False, False),
    ("(a)", False, False, True),
    ("(b)", True, False, False),
    ("(c)", True, True, False),
    ("(d)", True, True, True),
]

SWEEP_COLUMNS = {"entity": "#Entity", "visual": "Number", "encoder": "Encoder"}

SHORT_NLG = [("BLEU-4", "bleu4"), ("ROUGE-L", "rouge_l"), ("METEOR", "meteor"), ("CIDEr", "cider_d")]
FULL_NLG = [
    ("BLEU-1", "bleu1"), ("BLEU-2", "bleu2"), ("BLEU-3", "bleu3"), ("BLEU-4", "bleu4"),
    ("RG-L", "rouge_l"), ("METEOR", "meteor"), ("CIDEr", "cider_d"),
]
CE = [("Precision", "ce_precision"), ("Recall", "ce_recall"), ("F1", "ce_f1")]


def _mark(flag: bool) -> str:
    return "✓" if flag else "-"


def toggle_config(config: PipelineConfig, rg: bool, mf: bool, dvg: bool) -> PipelineConfig:
    """RG 打开时沿用配置中的编码器（配置为 none 时用 rgcn）"""
    variant = (config.use_rgcn_variant if config.use_graph else "rgcn") if rg else "none"
    return config.replace(use_rgcn_variant=variant, use_multiscale=mf and rg, use_dvg=dvg)


def sweep_cells(config: PipelineConfig, sweep: str, values: Optional[Sequence] = None) -> List[Tuple[object, PipelineConfig]]:
    """展开一个扫描为 [(行标签, 单元配置)]"""
    if sweep not in SWEEPS:
        raise ConfigError(f"未知扫描: {sweep}，可选 {SWEEPS}")
    if sweep == "toggles":
        return [(setting, toggle_config(config, rg, mf, dvg)) for setting, rg, mf, dvg in TOGGLE_SETTINGS]
    values = list(values) if values is not None else DEFAULT_VALUES[sweep]
    if not values:
        raise ConfigError(f"扫描 {sweep} 的取值列表为空")
    if sweep == "entity":
        return [(int(b), config.replace(scale_budgets=default_budgets(int(b)))) for b in values]
    if sweep == "visual":
        return [(int(n), config.replace(n_visual=int(n))) for n in values]
    return [(str(v).upper(), config.replace(use_rgcn_variant=str(v).lower())) for v in values]


def run_cell(config: PipelineConfig, pairs: Sequence[ReportPair], kg: KnowledgeGraph) -> Dict[str, float]:
    result = train_model(config, pairs, kg, show_progress=False)
    metrics, _ = evaluate_model(result.model, pairs)
    return metrics


def run_ablation(
    config: PipelineConfig,
    pairs: Sequence[ReportPair],
    kg: KnowledgeGraph,
    sweep: str,
    values: Optional[Sequence] = None,
    out_dir: Optional[str] = None,
) -> Dict[str, pd.DataFrame]:
    """运行一个扫描并生成对比表

    Args:
        config: 基础配置（种子、步数对所有单元相同）
        pairs: 语料
        kg: 已冻结的知识图谱
        sweep: entity | visual | encoder | toggles
        values: 扫描取值，缺省用 DEFAULT_VALUES；toggles 忽略
        out_dir: 可选的 CSV 输出目录

    Returns:
        {表名: DataFrame}；toggles 返回 "ce" 与 "nlg" 两张表，其余返回同名一张
    """
    cells = sweep_cells(config, sweep, values)
    rows = []
    for i, (label, cell_config) in enumerate(cells, start=1):
        logger.info(f"消融单元 [{i}/{len(cells)}] {sweep}={label} 开始")
        metrics = run_cell(cell_config, pairs, kg)
        logger.info(f"消融单元 [{i}/{len(cells)}] {sweep}={label} 完成: BLEU-4={metrics['bleu4']:.4f}, CE-F1={metrics['ce_f1']:.4f}")
        rows.append((label, metrics))

    if sweep == "toggles":
        marks = {setting: (rg, mf, dvg) for setting, rg, mf, dvg in TOGGLE_SETTINGS}
        tables = {}
        for name, columns in (("ce", CE), ("nlg", FULL_NLG)):
            records = []
            for label, metrics in rows:
                rg, mf, dvg = marks[label]
                record = {"Setting": label, "RG": _mark(rg), "MF": _mark(mf), "DVG": _mark(dvg)}
                record.update({col: metrics[key] for col, key in columns})
                records.append(record)
            tables[name] = pd.DataFrame(records)
    else:
        first = SWEEP_COLUMNS[sweep]
        tables = {sweep: pd.DataFrame(
            [{first: label, **{col: metrics[key] for col, key in SHORT_NLG}} for label, metrics in rows]
        )}

    for name, df in tables.items():
        logger.info(f"消融结果 ({sweep}/{name}):\n" + "\n".join(format_frame(df)))
        if out_dir:
            suffix = "" if name == sweep else f"_{name}"
            path = Path(out_dir) / f"ablation_{sweep}{suffix}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            df.to_csv(path, index=False, encoding="utf-8")
            logger.info(f"消融表已保存: {path}")
    return tables
