"""报告语料（ReportPair JSON Lines）与 PGM 图像读写

语料记录：
    {"id": .., "image": "images/x.pgm", "report": "..", "labels": [14 槽],
     "activation_maps": {"<标签名>": "maps/x_2.pgm", ..}}
路径相对语料文件所在目录。
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from loguru import logger
from PIL import Image

from ..common.errors import EmptyCorpus, EmptyField, ParseError
from ..eval.labeler import LabelVector, parse_label_slot
from ..kg.models import LABELS


def read_pgm(path: str) -> np.ndarray:
    """读取 8 位灰度 PGM，返回 [0, 1] 范围的 float64 矩阵"""
    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("L")
        return np.asarray(img, dtype=np.float64) / 255.0


def write_pgm(path: str, values: np.ndarray) -> None:
    """写出二进制 PGM (P5)；输入取值 [0, 1]，按 round(v·255) 量化"""
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(file_path, format="PPM")


@dataclass
class ReportPair:
    """训练/评估数据单元"""
    id: str
    image_path: str  # 绝对或相对语料根目录
    report: str
    gold_labels: LabelVector
    activation_maps: Dict[int, str] = field(default_factory=dict)  # 标签下标 -> PGM 路径
    root: Optional[str] = None

    def __post_init__(self):
        if not self.report.strip():
            raise EmptyField(f"报告为空: {self.id}")

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() or self.root is None else Path(self.root) / p

    def load_image(self) -> np.ndarray:
        return read_pgm(str(self.resolve(self.image_path)))

    def load_activation_map(self, label_index: int) -> np.ndarray:
        return read_pgm(str(self.resolve(self.activation_maps[label_index])))

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "image": self.image_path,
            "report": self.report,
            "labels": list(self.gold_labels.values),
            "activation_maps": {LABELS[i]: p for i, p in sorted(self.activation_maps.items())},
        }


def _label_index(key) -> int:
    if isinstance(key, int) or (isinstance(key, str) and key.isdigit()):
        index = int(key)
    elif key in LABELS:
        index = LABELS.index(key)
    else:
        raise ValueError(f"未知标签: {key!r}")
    if not 0 <= index < len(LABELS):
        raise ValueError(f"标签下标越界: {key!r}")
    return index


def load_corpus(path: str) -> List[ReportPair]:
    """读取语料文件"""
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"语料文件不存在: {file_path}")
    root = str(file_path.parent)
    pairs = []
    with open(file_path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                labels = LabelVector(tuple(parse_label_slot(v) for v in record["labels"]))
                maps = {_label_index(k): v for k, v in (record.get("activation_maps") or {}).items()}
                pairs.append(ReportPair(
                    id=str(record["id"]),
                    image_path=record["image"],
                    report=record["report"],
                    gold_labels=labels,
                    activation_maps=maps,
                    root=root,
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"语料记录无效: {e}", line_no, str(file_path)) from e
    if not pairs:
        raise EmptyCorpus(f"语料为空: {file_path}")
    logger.info(f"语料已加载: {file_path} ({len(pairs)} 条)")
    return pairs


def save_corpus(pairs: List[ReportPair], path: str) -> None:
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        for pair in pairs:
            f.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")
    logger.info(f"语料已保存: {file_path} ({len(pairs)} 条)")
