#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
m3kg 命令行入口

子命令：
    kg build       合并三元组文件，并从语料激活图抽取疾病视觉 token
    kg sample      按预算列表输出多尺度子图文件
    kg stats       打印图规模统计
    kg export-dot  导出 DOT 可视化
    synth          生成合成语料与真值知识图谱
    train          端到端训练
    evaluate       加载检查点生成报告并计算指标
    ablate         运行消融扫描（entity / visual / encoder / toggles）

使用示例：
    python scripts/m3kg.py synth --out-dir data/corpus/synth
    python scripts/m3kg.py kg build --triples data/corpus/synth/triples.jsonl \
        --corpus data/corpus/synth/corpus.jsonl -o data/kg/m3kg.jsonl
    python scripts/m3kg.py train -c configs/pipeline.yaml \
        --corpus data/corpus/synth/corpus.jsonl --kg data/kg/m3kg.jsonl
    python scripts/m3kg.py evaluate --ckpt data/checkpoints/model.ckpt \
        --corpus data/corpus/synth/corpus.jsonl --kg data/kg/m3kg.jsonl -o data/reports/metrics.json
    python scripts/m3kg.py ablate -c configs/pipeline.yaml --sweep toggles \
        --corpus data/corpus/synth/corpus.jsonl --kg data/kg/m3kg.jsonl
"""

import argparse
import json
import sys
from pathlib import Path

# 添加项目路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import pandas as pd
from loguru import logger

from src.kgreport import CONFIG_ROOT, DATA_CHECKPOINTS, DATA_CORPUS, DATA_REPORTS
from src.kgreport.common.config import PipelineConfig, get_config, init_config, parse_budgets
from src.kgreport.common.errors import KGReportError
from src.kgreport.common.logger import setup_logger_from_config
from src.kgreport.common.print_table import format_frame
from src.kgreport.kg import build_multiscale, save, save_scales
from src.kgreport.pipeline import build_kg, evaluate, load_corpus, load_kg, run_ablation, synth_corpus, train

DECODE_KEYS = ("decode_mode", "beam_k", "eval_workers")


def banner(title: str) -> None:
    logger.info("=" * 80)
    logger.info(title)
    logger.info("=" * 80)


def load_pipeline_config(path: str) -> PipelineConfig:
    config = PipelineConfig.from_file(path)
    logger.info(f"流水线配置: {path}")
    return config


# ---- kg ----

def cmd_kg_build(args) -> None:
    pairs = load_corpus(args.corpus) if args.corpus else None
    graph = build_kg(args.triples, pairs, patch=args.patch, tau=args.tau)
    save(graph, args.output)


def cmd_kg_sample(args) -> None:
    graph = load_kg(args.kg)
    msg = build_multiscale(graph, parse_budgets(args.budgets))
    save_scales(graph, msg, args.output)


def cmd_kg_stats(args) -> None:
    stats = load_kg(args.kg).stats()
    rows = [{"relation": r, "triples": stats["per_relation_counts"][r],
             "instances": stats["per_relation_instances"][r]} for r in stats["per_relation_counts"]]
    logger.info(
        f"实体={stats['n_entities']}, 三元组={stats['n_triples']}, "
        f"实例={stats['n_triple_instances']}, 视觉token={stats['n_vision_tokens']}"
    )
    for line in format_frame(pd.DataFrame(rows)):
        logger.info(line)


def cmd_kg_export_dot(args) -> None:
    text = load_kg(args.kg).export_dot(args.max_nodes)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    logger.info(f"DOT 已导出: {out}")


# ---- synth / train / evaluate / ablate ----

def cmd_synth(args) -> None:
    result = synth_corpus(args.out_dir, seed=args.seed, n_pairs=args.n_pairs, grid=args.grid,
                          n_diseases=args.n_diseases, patch=args.patch)
    logger.info(f"语料: {result.corpus_path}")
    logger.info(f"三元组: {result.triples_path}")
    logger.info(f"清单: {json.dumps(result.manifest, ensure_ascii=False)}")


def cmd_train(args) -> None:
    config = load_pipeline_config(args.config)
    if args.steps is not None:
        config = config.replace(steps=args.steps)
    result = train(config, args.corpus, args.kg, args.out_dir)
    if result.losses:
        logger.info(f"最终损失: {result.losses[-1]:.6f}")


def cmd_evaluate(args) -> None:
    overrides = {}
    if args.config:
        config = load_pipeline_config(args.config)
        overrides = {k: getattr(config, k) for k in DECODE_KEYS}
    if args.decode_mode:
        overrides["decode_mode"] = args.decode_mode
    if args.beam_k is not None:
        overrides["beam_k"] = args.beam_k
    evaluate(
        args.ckpt, args.corpus, args.kg, out_path=args.output, overrides=overrides or None,
        ref_label_path=args.ref_labels, hyp_label_path=args.hyp_labels, use_gold_labels=args.gold_labels,
    )


def cmd_ablate(args) -> None:
    config = load_pipeline_config(args.config)
    values = None
    if args.values:
        values = [v.strip() for v in args.values.split(",") if v.strip()]
    elif args.ablation_config and Path(args.ablation_config).exists():
        settings = get_config()
        settings.merge_config(args.ablation_config)
        values = settings.get(f"ablation.{args.sweep}")
    run_ablation(config, load_corpus(args.corpus), load_kg(args.kg), args.sweep, values, args.out_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="知识图谱增强的胸片报告生成")
    parser.add_argument("--base-config", default=str(CONFIG_ROOT / "base.yaml"),
                        help="基础配置（日志与数据路径）")
    sub = parser.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("kg", help="知识图谱工具").add_subparsers(dest="kg_command", required=True)
    p = kg.add_parser("build", help="合并三元组并加入视觉 token")
    p.add_argument("--triples", nargs="+", required=True, help="一个或多个 m3kg 三元组文件")
    p.add_argument("--corpus", help="带激活图的语料 JSONL")
    p.add_argument("--patch", type=int, default=8, help="patch 大小（默认：8）")
    p.add_argument("--tau", type=float, default=0.5, help="激活阈值（默认：0.5）")
    p.add_argument("-o", "--output", required=True, help="输出 m3kg 文件")
    p.set_defaults(func=cmd_kg_build)

    p = kg.add_parser("sample", help="多尺度子图采样")
    p.add_argument("--in", "--kg", dest="kg", required=True, help="输入 m3kg 文件")
    p.add_argument("--budgets", default="60,120,180,240,300", help="严格递增的预算列表")
    p.add_argument("--out", "-o", "--output", dest="output", required=True, help="输出尺度文件")
    p.set_defaults(func=cmd_kg_sample)

    p = kg.add_parser("stats", help="图规模统计")
    p.add_argument("--kg", required=True)
    p.set_defaults(func=cmd_kg_stats)

    p = kg.add_parser("export-dot", help="导出 DOT")
    p.add_argument("--kg", required=True)
    p.add_argument("--max-nodes", type=int, default=50)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_kg_export_dot)

    p = sub.add_parser("synth", help="生成合成语料")
    p.add_argument("--out-dir", default=str(DATA_CORPUS / "synth"))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-pairs", type=int, default=32)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--n-diseases", type=int, default=13)
    p.add_argument("--patch", type=int, default=8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="端到端训练")
    p.add_argument("-c", "--config", default=str(CONFIG_ROOT / "pipeline.yaml"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--out-dir", default=str(DATA_CHECKPOINTS))
    p.add_argument("--steps", type=int, help="覆盖配置中的 steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="评估检查点")
    p.add_argument("-c", "--config", help="只取其中的解码相关字段")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("-o", "--output", default=str(DATA_REPORTS / "metrics.json"))
    p.add_argument("--decode-mode", choices=["greedy", "beam"])
    p.add_argument("--beam-k", type=int)
    p.add_argument("--ref-labels", help="参考报告的外部标签 JSONL")
    p.add_argument("--hyp-labels", help="生成报告的外部标签 JSONL")
    p.add_argument("--gold-labels", action="store_true", help="用语料金标准标签作为参考标签")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="消融扫描")
    p.add_argument("-c", "--config", default=str(CONFIG_ROOT / "pipeline.yaml"))
    p.add_argument("--sweep", required=True, choices=["entity", "visual", "encoder", "toggles"])
    p.add_argument("--values", help="逗号分隔的取值，覆盖 ablation 配置")
    p.add_argument("--ablation-config", default=str(CONFIG_ROOT / "ablation.yaml"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--out-dir", default=str(DATA_REPORTS))
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    """主函数"""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logger_from_config(init_config(args.base_config if Path(args.base_config).exists() else None))

    title = f"m3kg {args.command}" + (f" {args.kg_command}" if args.command == "kg" else "")
    banner(title)
    try:
        args.func(args)
    except KGReportError as e:
        logger.error("=" * 80)
        logger.error(f"{title} 失败")
        logger.error("=" * 80)
        logger.error(str(e))
        return 1
    except FileNotFoundError as e:
        logger.error(f"文件不存在: {e}")
        return 1
    banner(f"{title} 完成")
    return 0


if __name__ == "__main__":
    sys.exit(main())
