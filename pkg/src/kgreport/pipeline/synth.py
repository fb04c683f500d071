"""合成语料生成器

每种发现对应 patch 网格上一个固定单元格和一种几何图案（圆斑或条带）。报告由模板生成：
    "<修饰> <发现> at the <部位> suggestive of <提示>."
模板隐含三条三元组：(发现, 部位, located_at)、(修饰, 发现, modify)、(发现, 提示, suggestive_of)。
三元组 count 为包含该三元组的报告数。
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Tuple

import numpy as np
from loguru import logger

from ..common.errors import BadParams
from ..eval.labeler import LabelVector
from ..kg import storage
from ..kg.models import LABELS, EntityType, RelationType
from ..kg.store import KnowledgeGraph
from .corpus import ReportPair, save_corpus, write_pgm

NO_FINDINGS_REPORT = "no acute findings."


class Finding(NamedTuple):
    label: str
    term: str  # 报告用词，命中对应标签关键词
    term_type: EntityType
    anatomy: str
    modifier: str
    modifier_type: EntityType
    suggestion: str
    pattern: str  # blob | bar_h | bar_v


FINDINGS: Tuple[Finding, ...] = (
    Finding("Enlarged Cardiomediastinum", "widened mediastinum", EntityType.DISORDER, "upper mediastinum",
            "mild", EntityType.SIZE, "aortic ectasia", "bar_v"),
    Finding("Cardiomegaly", "cardiomegaly", EntityType.DISORDER, "cardiac silhouette",
            "moderate", EntityType.SIZE, "heart failure", "blob"),
    Finding("Lung Opacity", "opacity", EntityType.DISORDER, "left lower lobe",
            "patchy", EntityType.CONCEPT, "aspiration", "blob"),
    Finding("Lung Lesion", "nodule", EntityType.DISORDER, "right upper lobe",
            "small", EntityType.SIZE, "granuloma", "blob"),
    Finding("Edema", "edema", EntityType.DISORDER, "perihilar region",
            "interstitial", EntityType.CONCEPT, "fluid overload", "bar_h"),
    Finding("Consolidation", "consolidation", EntityType.DISORDER, "right lower lobe",
            "dense", EntityType.CONCEPT, "infection", "blob"),
    Finding("Pneumonia", "pneumonia", EntityType.DISORDER, "left upper lobe",
            "focal", EntityType.CONCEPT, "bacterial process", "bar_h"),
    Finding("Atelectasis", "atelectasis", EntityType.DISORDER, "lung bases",
            "subsegmental", EntityType.CONCEPT, "volume loss", "bar_h"),
    Finding("Pneumothorax", "pneumothorax", EntityType.DISORDER, "right apex",
            "tiny", EntityType.SIZE, "air leak", "bar_v"),
    Finding("Pleural Effusion", "pleural effusion", EntityType.DISORDER, "costophrenic angle",
            "small", EntityType.SIZE, "fluid overload", "blob"),
    Finding("Pleural Other", "pleural thickening", EntityType.DISORDER, "left apex",
            "mild", EntityType.SIZE, "prior inflammation", "bar_v"),
    Finding("Fracture", "fracture", EntityType.DISORDER, "right rib",
            "healed", EntityType.CONCEPT, "prior trauma", "bar_h"),
    Finding("Support Devices", "pacemaker", EntityType.DEVICE, "left chest wall",
            "dual-lead", EntityType.CONCEPT, "rhythm management", "blob"),
)
MAX_DISEASES = len(FINDINGS)

TUI_BY_TYPE = {
    EntityType.ANATOMY: "T023",
    EntityType.DISORDER: "T047",
    EntityType.CONCEPT: "T080",
    EntityType.DEVICE: "T074",
    EntityType.PROCEDURE: "T061",
    EntityType.SIZE: "T081",
}


def finding_sentence(finding: Finding) -> str:
    return f"{finding.modifier} {finding.term} at the {finding.anatomy} suggestive of {finding.suggestion}."


def finding_triples(finding: Finding) -> List[Tuple[str, str, RelationType]]:
    return [
        (finding.term, finding.anatomy, RelationType.LOCATED_AT),
        (finding.modifier, finding.term, RelationType.MODIFY),
        (finding.term, finding.suggestion, RelationType.SUGGESTIVE_OF),
    ]


def render_report(findings: List[Finding]) -> str:
    if not findings:
        return NO_FINDINGS_REPORT
    return " ".join(finding_sentence(f) for f in findings)


def finding_cell(index: int, grid_cells: int) -> Tuple[int, int]:
    """第 index 个发现的 patch 单元格（行优先）"""
    return divmod(index, grid_cells)


def draw_pattern(image: np.ndarray, finding_index: int, patch: int) -> None:
    """把第 finding_index 个发现的图案画入其单元格"""
    grid_cells = image.shape[1] // patch
    r, c = finding_cell(finding_index, grid_cells)
    top, left = r * patch, c * patch
    cell = image[top:top + patch, left:left + patch]
    intensity = 0.5 + 0.035 * finding_index
    kind = FINDINGS[finding_index].pattern
    mid = patch // 2
    if kind == "blob":
        yy, xx = np.mgrid[0:patch, 0:patch]
        radius = max(1.0, patch / 2 - 1)
        cell[(yy - (patch - 1) / 2) ** 2 + (xx - (patch - 1) / 2) ** 2 <= radius ** 2] = intensity
    elif kind == "bar_h":
        cell[max(0, mid - 1):mid + 1, :] = intensity
    else:
        cell[:, max(0, mid - 1):mid + 1] = intensity


@dataclass
class SynthResult:
    corpus_path: str
    triples_path: str
    manifest_path: str
    manifest: dict


def build_ground_truth_kg(reports_findings: List[List[int]], n_diseases: int) -> KnowledgeGraph:
    """按模板建立实体与三元组，count = 含该三元组的报告数"""
    graph = KnowledgeGraph(d_vision=0)
    cui_of: Dict[str, str] = {}

    def entity(name: str, entity_type: EntityType) -> int:
        if name not in cui_of:
            cui_of[name] = f"S{len(cui_of) + 1:04d}"
        return graph.add_entity({
            "cui": cui_of[name],
            "name": name,
            "entity_type": entity_type,
            "aliases": [],
            "definition": f"synthetic {entity_type.value.lower()} concept {name}",
            "tui": TUI_BY_TYPE[entity_type],
        })

    ids: Dict[str, int] = {}
    for f in FINDINGS[:n_diseases]:
        ids[f.term] = entity(f.term, f.term_type)
        ids[f.anatomy] = entity(f.anatomy, EntityType.ANATOMY)
        ids[f.modifier] = entity(f.modifier, f.modifier_type)
        ids[f.suggestion] = entity(f.suggestion, EntityType.DISORDER)

    for present in reports_findings:
        triples = {key for i in present for key in finding_triples(FINDINGS[i])}
        for head, tail, relation in sorted(triples, key=lambda t: (t[0], t[1], t[2].value)):
            graph.add_triple(ids[head], ids[tail], relation)
    return graph


def synth_corpus(
    out_dir: str,
    seed: int = 42,
    n_pairs: int = 32,
    grid: int = 32,
    n_diseases: int = MAX_DISEASES,
    patch: int = 8,
    p_present: float = 0.3,
) -> SynthResult:
    """生成合成语料、激活图与真值知识图谱

    Args:
        out_dir: 输出目录
        seed: 随机种子
        n_pairs: 样本数
        grid: 图像边长（像素）
        n_diseases: 参与的发现种类数（前 n 个，不含 No Finding）
        patch: patch 大小
        p_present: 每种发现在单个样本中出现的概率

    Returns:
        SynthResult
    """
    if n_pairs < 1:
        raise BadParams(f"n_pairs 必须 >= 1: {n_pairs}")
    if not 0 <= n_diseases <= MAX_DISEASES:
        raise BadParams(f"n_diseases 必须在 [0, {MAX_DISEASES}] 内（No Finding 没有图案）: {n_diseases}")
    if patch < 1 or grid % patch:
        raise BadParams(f"grid={grid} 必须能被 patch={patch} 整除")
    grid_cells = grid // patch
    if grid_cells * grid_cells < n_diseases:
        raise BadParams(f"patch 网格 {grid_cells}×{grid_cells} 放不下 {n_diseases} 种发现")
    if not 0.0 <= p_present <= 1.0:
        raise BadParams(f"p_present 必须在 [0, 1] 内: {p_present}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    pairs: List[ReportPair] = []
    reports_findings: List[List[int]] = []
    for i in range(n_pairs):
        pair_id = f"pair_{i:03d}"
        draws = rng.random(MAX_DISEASES)
        present = [k for k in range(n_diseases) if draws[k] < p_present]
        image = rng.uniform(0.0, 0.1, size=(grid, grid))
        maps: Dict[int, str] = {}
        for k in present:
            draw_pattern(image, k, patch)
            act = np.zeros((grid_cells, grid_cells))
            r, c = finding_cell(k, grid_cells)
            act[r, c] = 1.0
            label_index = LABELS.index(FINDINGS[k].label)
            rel = f"maps/{pair_id}_{label_index:02d}.pgm"
            write_pgm(str(out / rel), act)
            maps[label_index] = rel
        image_rel = f"images/{pair_id}.pgm"
        write_pgm(str(out / image_rel), image)

        findings = [FINDINGS[k] for k in present]
        pairs.append(ReportPair(
            id=pair_id,
            image_path=image_rel,
            report=render_report(findings),
            gold_labels=LabelVector.from_positive([f.label for f in findings]),
            activation_maps=maps,
            root=str(out),
        ))
        reports_findings.append(present)

    corpus_path = out / "corpus.jsonl"
    save_corpus(pairs, str(corpus_path))

    graph = build_ground_truth_kg(reports_findings, n_diseases)
    triples_path = out / "triples.jsonl"
    storage.save(graph, str(triples_path))

    stats = graph.stats()
    manifest = {
        "seed": seed,
        "n_pairs": n_pairs,
        "grid": grid,
        "patch": patch,
        "n_diseases": n_diseases,
        "n_entities": stats["n_entities"],
        "n_triples": stats["n_triples"],
        "n_triple_instances": stats["n_triple_instances"],
        "per_relation_counts": {str(k): v for k, v in stats["per_relation_counts"].items()},
        "corpus": corpus_path.name,
        "triples": triples_path.name,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    logger.info(
        f"合成语料生成完成: {out} (样本={n_pairs}, 发现种类={n_diseases}, "
        f"实体={stats['n_entities']}, 三元组={stats['n_triples']})"
    )
    return SynthResult(str(corpus_path), str(triples_path), str(manifest_path), manifest)
