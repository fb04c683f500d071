"""规则式 14 标签抽取与临床效能（CE）指标

关键词在大小写折叠后的句子 token 上做短语匹配；匹配前 5 个 token 内（同一句）出现否定词则判为 negative。
同一标签只要有一次未被否定的匹配即为 positive。No Finding 在其余 13 个标签都不是 positive 时为 positive。
"""

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from ..common.errors import LengthMismatch, ParseError
from ..kg.models import LABELS, N_LABELS

POSITIVE = "positive"
NEGATIVE = "negative"
ABSENT = "absent"
STATES = (POSITIVE, NEGATIVE, ABSENT)

NEGATION_WINDOW = 5
NEGATION_CUES = ("no", "not", "without", "free of", "negative for", "clear of", "resolution of")

LABEL_KEYWORDS: Dict[str, Tuple[str, ...]] = {
    "Enlarged Cardiomediastinum": (
        "enlarged cardiomediastinum", "widened mediastinum", "mediastinal widening", "enlarged mediastinum",
    ),
    "Cardiomegaly": ("cardiomegaly", "enlarged heart", "enlarged cardiac silhouette"),
    "Lung Opacity": ("opacity", "opacities", "opacification", "opacifications"),
    "Lung Lesion": ("nodule", "nodules", "mass", "masses", "lesion", "lesions"),
    "Edema": ("edema", "edemas"),
    "Consolidation": ("consolidation", "consolidations"),
    "Pneumonia": ("pneumonia", "pneumonias"),
    "Atelectasis": ("atelectasis", "atelectases"),
    "Pneumothorax": ("pneumothorax", "pneumothoraces"),
    "Pleural Effusion": ("pleural effusion", "pleural effusions", "effusion", "effusions"),
    "Pleural Other": ("pleural thickening", "pleural plaque", "pleural plaques", "fibrothorax"),
    "Fracture": ("fracture", "fractures"),
    "Support Devices": (
        "pacemaker", "pacemakers", "catheter", "catheters", "endotracheal tube", "chest tube",
        "central line", "support device", "support devices",
    ),
}

_TOKEN_RE = re.compile(r"[a-z0-9\-]+")


@dataclass(frozen=True)
class LabelVector:
    """14 个标签槽，取值 positive / negative / absent"""
    values: Tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != N_LABELS:
            raise ValueError(f"标签向量必须有 {N_LABELS} 个槽: {len(self.values)}")
        for v in self.values:
            if v not in STATES:
                raise ValueError(f"未知标签状态: {v!r}")

    def __getitem__(self, label: str) -> str:
        return self.values[LABELS.index(label)]

    def positive_mask(self) -> np.ndarray:
        return np.array([v == POSITIVE for v in self.values], dtype=np.int64)

    def as_dict(self) -> Dict[str, str]:
        return dict(zip(LABELS, self.values))

    @classmethod
    def from_positive(cls, positive_labels: Sequence[str]) -> "LabelVector":
        """由阳性标签名构造，其余为 absent；无阳性时 No Finding 为 positive"""
        chosen = set(positive_labels)
        values = [POSITIVE if name in chosen else ABSENT for name in LABELS]
        values[0] = ABSENT if any(v == POSITIVE for v in values[1:]) else POSITIVE
        return cls(tuple(values))


def _sentences(text: str) -> List[List[str]]:
    return [_TOKEN_RE.findall(s) for s in text.casefold().split(".")]


def _find_phrase(toks: Sequence[str], phrase: Sequence[str]) -> List[int]:
    n = len(phrase)
    return [i for i in range(len(toks) - n + 1) if list(toks[i:i + n]) == list(phrase)]


_CUE_TOKENS = [cue.split() for cue in NEGATION_CUES]
_KEYWORD_TOKENS = {label: [kw.split() for kw in kws] for label, kws in LABEL_KEYWORDS.items()}


def _negated(toks: Sequence[str], start: int) -> bool:
    lo = max(0, start - NEGATION_WINDOW)
    for cue in _CUE_TOKENS:
        for i in _find_phrase(toks[lo:start], cue):
            if lo + i + len(cue) <= start:
                return True
    return False


def extract_labels(report_text: str) -> LabelVector:
    """从报告文本抽取 14 标签"""
    state = {label: ABSENT for label in LABEL_KEYWORDS}
    for toks in _sentences(report_text):
        if not toks:
            continue
        for label, phrases in _KEYWORD_TOKENS.items():
            for phrase in phrases:
                for start in _find_phrase(toks, phrase):
                    if _negated(toks, start):
                        if state[label] == ABSENT:
                            state[label] = NEGATIVE
                    else:
                        state[label] = POSITIVE
    values = [state[label] for label in LABELS[1:]]
    no_finding = ABSENT if POSITIVE in values else POSITIVE
    return LabelVector(tuple([no_finding] + values))


def ce_scores(hyp_labels: Sequence[LabelVector], ref_labels: Sequence[LabelVector]) -> Dict[str, float]:
    """阳性类上的微平均 precision / recall / f1，分母为 0 时记 0"""
    if len(hyp_labels) != len(ref_labels):
        raise LengthMismatch(f"假设标签数 {len(hyp_labels)} 与参考标签数 {len(ref_labels)} 不一致")
    if not hyp_labels:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    y_pred = np.stack([v.positive_mask() for v in hyp_labels])
    y_true = np.stack([v.positive_mask() for v in ref_labels])
    p, r, f1, _ = precision_recall_fscore_support(y_true, y_pred, average="micro", zero_division=0)
    return {"precision": float(p), "recall": float(r), "f1": float(f1)}


_CODE_STATES = {1: POSITIVE, 0: NEGATIVE, -1: ABSENT, None: ABSENT}


def parse_label_slot(value) -> str:
    if isinstance(value, str) and value in STATES:
        return value
    if value is None or (isinstance(value, (int, float)) and not isinstance(value, bool) and int(value) == value):
        key = None if value is None else int(value)
        if key in _CODE_STATES:
            return _CODE_STATES[key]
    raise ValueError(f"无法识别的标签值: {value!r}")


def load_label_file(path: str) -> List[LabelVector]:
    """读取外部标签文件

    每行一个 JSON 数组（14 个槽），或含 "labels" 键的对象。
    槽取值为 "positive"/"negative"/"absent"，或 CheXpert 编码 1 / 0 / -1 / null（-1 与 null 视为 absent）。
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"标签文件不存在: {file_path}")
    vectors = []
    with open(file_path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                slots = record["labels"] if isinstance(record, dict) else record
                vectors.append(LabelVector(tuple(parse_label_slot(v) for v in slots)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"标签记录无效: {e}", line_no, str(file_path)) from e
    return vectors
