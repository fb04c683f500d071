"""测试规则标签抽取、CE 指标与评估汇总"""

import json
import tempfile
from pathlib import Path

import pytest
from joblib import parallel_backend

from src.kgreport.common.errors import LengthMismatch, ParseError
from src.kgreport.eval import METRIC_KEYS, LabelVector, ce_scores, evaluate_texts, extract_labels, load_label_file, write_metrics
from src.kgreport.eval.evaluator import read_lines
from src.kgreport.kg.models import LABELS

ALL_ABSENT = LabelVector(("absent",) * 14)


class TestExtractLabels:
    """测试关键词与否定规则"""

    def test_empty_report(self):
        labels = extract_labels("")
        assert labels["No Finding"] == "positive"
        assert all(v == "absent" for v in labels.values[1:])

    def test_negated_effusion(self):
        labels = extract_labels("no pleural effusion.")
        assert labels["Pleural Effusion"] == "negative"
        assert labels["No Finding"] == "positive"

    def test_positive_findings(self):
        labels = extract_labels("small bilateral pleural effusions. mild cardiomegaly.")
        assert labels["Pleural Effusion"] == "positive"
        assert labels["Cardiomegaly"] == "positive"
        assert labels["No Finding"] == "absent"

    def test_negation_window(self):
        labels = extract_labels("no acute disease in the left lung base with effusion")
        assert labels["Pleural Effusion"] == "positive"

    def test_negation_stops_at_sentence(self):
        labels = extract_labels("No edema. Effusion is present.")
        assert labels["Edema"] == "negative"
        assert labels["Pleural Effusion"] == "positive"

    def test_positive_mention_wins(self):
        labels = extract_labels("no effusion on the left. right effusion.")
        assert labels["Pleural Effusion"] == "positive"

    def test_multi_word_cue(self):
        assert extract_labels("lungs are free of consolidation.")["Consolidation"] == "negative"

    def test_label_order(self):
        assert list(extract_labels("").as_dict()) == LABELS
        assert len(LABELS) == 14


class TestLabelVector:
    """测试标签向量"""

    def test_from_positive(self):
        v = LabelVector.from_positive(["Edema"])
        assert v["Edema"] == "positive"
        assert v["No Finding"] == "absent"
        assert LabelVector.from_positive([])["No Finding"] == "positive"

    def test_invalid(self):
        with pytest.raises(ValueError):
            LabelVector(("absent",) * 13)
        with pytest.raises(ValueError):
            LabelVector(("maybe",) * 14)


class TestCeScores:
    """测试阳性类微平均"""

    def test_identical(self):
        labels = [LabelVector.from_positive(["Edema", "Fracture"]), LabelVector.from_positive([])]
        assert ce_scores(labels, labels) == {"precision": 1.0, "recall": 1.0, "f1": 1.0}

    def test_no_predictions(self):
        scores = ce_scores([ALL_ABSENT], [LabelVector.from_positive(["Edema"])])
        assert scores == {"precision": 0.0, "recall": 0.0, "f1": 0.0}

    def test_hand_counts(self):
        hyp = [LabelVector.from_positive(["Edema"]), LabelVector.from_positive(["Pneumonia"])]
        ref = [LabelVector.from_positive(["Edema"]), LabelVector.from_positive(["Fracture"])]
        scores = ce_scores(hyp, ref)
        assert scores["precision"] == pytest.approx(0.5)
        assert scores["recall"] == pytest.approx(0.5)
        assert scores["f1"] == pytest.approx(0.5)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            ce_scores([ALL_ABSENT], [])


class TestLabelFile:
    """测试外部标签文件"""

    def test_codes_and_strings(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "labels.jsonl"
            codes = [1, 0, -1, None] + [None] * 10
            named = {"labels": ["absent"] * 13 + ["positive"]}
            path.write_text(json.dumps(codes) + "\n\n" + json.dumps(named) + "\n", encoding="utf-8")
            vectors = load_label_file(str(path))
        assert len(vectors) == 2
        assert vectors[0].values[:4] == ("positive", "negative", "absent", "absent")
        assert vectors[1]["Support Devices"] == "positive"

    def test_bad_slot_reports_line(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "labels.jsonl"
            path.write_text(json.dumps([1] * 14) + "\n" + json.dumps([2] * 14) + "\n", encoding="utf-8")
            with pytest.raises(ParseError) as exc:
                load_label_file(str(path))
        assert exc.value.line_no == 2

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_label_file("/nonexistent/labels.jsonl")


class TestEvaluateTexts:
    """测试指标汇总"""

    HYPS = ["small left pleural effusion .", "no acute cardiopulmonary process .", "mild cardiomegaly ."]
    REFS = ["small left pleural effusion .", "heart size is normal .", "moderate cardiomegaly ."]

    def test_keys_and_identity(self):
        metrics = evaluate_texts(self.REFS, self.REFS)
        assert tuple(metrics) == METRIC_KEYS
        assert metrics["bleu1"] == pytest.approx(1.0)
        assert metrics["rouge_l"] == pytest.approx(1.0)
        assert metrics["ce_f1"] == pytest.approx(1.0)

    def test_workers_do_not_change_results(self):
        serial = evaluate_texts(self.HYPS, self.REFS)
        with parallel_backend("threading"):
            parallel = evaluate_texts(self.HYPS, self.REFS, workers=2)
        assert serial == parallel

    def test_external_labels_override_extraction(self):
        gold = [LabelVector.from_positive(["Fracture"])] * 3
        metrics = evaluate_texts(self.HYPS, self.REFS, ref_labels=gold)
        assert metrics["ce_recall"] == 0.0

    def test_label_count_checked(self):
        with pytest.raises(LengthMismatch):
            evaluate_texts(self.HYPS, self.REFS, hyp_labels=[ALL_ABSENT])
        with pytest.raises(LengthMismatch):
            evaluate_texts(self.HYPS, self.REFS[:2])

    def test_write_and_read(self):
        metrics = evaluate_texts(self.HYPS, self.REFS)
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir) / "out" / "metrics.json"
            write_metrics(metrics, str(out))
            assert json.loads(out.read_text(encoding="utf-8")) == metrics
            hyp_file = Path(tmpdir) / "hyp.txt"
            hyp_file.write_text("\n".join(self.HYPS) + "\n", encoding="utf-8")
            assert read_lines(str(hyp_file)) == self.HYPS
