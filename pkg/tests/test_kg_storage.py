"""测试知识图谱 JSON Lines 持久化"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from src.kgreport.common.errors import ParseError, SchemaVersionMismatch
from src.kgreport.kg import KnowledgeGraph, RelationType, load, merge_into, save

FIXTURES = Path(__file__).parent / "fixtures"

HEADER = {"kind": "header", "format": "m3kg", "version": 1, "d_vision": 2}
ENTITY_A = {"kind": "entity", "cui": "A", "name": "a", "entity_type": "Disorder"}
ENTITY_B = {"kind": "entity", "cui": "B", "name": "b", "entity_type": "Anatomy"}
TRIPLE_AB = {"kind": "triple", "head_cui": "A", "tail_cui": "B", "relation": "located_at", "count": 2}


@pytest.fixture
def temp_dir():
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


def _write(path: Path, lines) -> str:
    path.write_text("".join((x if isinstance(x, str) else json.dumps(x)) + "\n" for x in lines), encoding="utf-8")
    return str(path)


def random_graph(rng: np.random.Generator) -> KnowledgeGraph:
    d_vision = int(rng.integers(0, 5))
    g = KnowledgeGraph(d_vision=d_vision)
    types = ["Anatomy", "Disorder", "Concept", "Device", "Procedure", "Size"]
    n = int(rng.integers(1, 12))
    for i in range(n):
        aliases = [f"alias {i}-{k}" for k in range(int(rng.integers(0, 3)))]
        g.add_entity({"cui": f"C{i:03d}", "name": f"entity {i} é", "entity_type": types[i % 6],
                      "aliases": aliases, "definition": f"def {rng.random():.6f}", "tui": f"T{i:03d}"})
    for _ in range(int(rng.integers(0, 25))):
        h, t = (int(x) for x in rng.integers(0, n, size=2))
        r = RelationType(int(rng.integers(0, 3)))
        if h == t and r != RelationType.MODIFY:
            continue
        g.add_triple(h, t, r, count=int(rng.integers(1, 4)))
    if d_vision:
        for _ in range(int(rng.integers(0, 4))):
            g.add_vision_token(int(rng.integers(0, 14)), rng.normal(size=d_vision), f"img{rng.integers(100)}")
    return g


class TestRoundTrip:
    """测试保存与加载"""

    def test_fixture_matches_manifest(self, mini_kg):
        manifest = json.loads((FIXTURES / "m3kg_mini_manifest.json").read_text(encoding="utf-8"))
        stats = mini_kg.stats()
        for key in ("n_entities", "n_triples", "n_triple_instances", "n_vision_tokens"):
            assert stats[key] == manifest[key]
        assert {str(k): v for k, v in stats["per_relation_counts"].items()} == manifest["per_relation_counts"]
        assert mini_kg.d_vision == manifest["d_vision"]

    def test_fixture_round_trip(self, mini_kg, temp_dir):
        path = str(temp_dir / "out.jsonl")
        save(mini_kg, path)
        assert load(path) == mini_kg

    def test_random_round_trips_are_bit_exact(self, temp_dir):
        rng = np.random.default_rng(123)
        for i in range(100):
            g = random_graph(rng)
            first = temp_dir / f"g{i}.jsonl"
            second = temp_dir / f"g{i}_again.jsonl"
            save(g, str(first))
            loaded = load(str(first))
            assert loaded == g
            save(loaded, str(second))
            assert first.read_bytes() == second.read_bytes()

    def test_empty_graph(self, temp_dir):
        path = str(temp_dir / "empty.jsonl")
        save(KnowledgeGraph(), path)
        assert load(path) == KnowledgeGraph()


class TestMalformedFiles:
    """测试格式错误带行号"""

    def test_bad_json_reports_line(self, temp_dir):
        path = _write(temp_dir / "bad.jsonl", [HEADER, ENTITY_A, "{not json"])
        with pytest.raises(ParseError) as exc:
            load(path)
        assert exc.value.line_no == 3

    def test_missing_header(self, temp_dir):
        path = _write(temp_dir / "nohdr.jsonl", [ENTITY_A])
        with pytest.raises(ParseError) as exc:
            load(path)
        assert exc.value.line_no == 1

    def test_empty_file(self, temp_dir):
        path = temp_dir / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ParseError):
            load(str(path))

    def test_unsupported_version(self, temp_dir):
        path = _write(temp_dir / "v2.jsonl", [dict(HEADER, version=2), ENTITY_A])
        with pytest.raises(SchemaVersionMismatch):
            load(path)

    def test_entity_after_triple(self, temp_dir):
        path = _write(temp_dir / "order.jsonl", [HEADER, ENTITY_A, ENTITY_B, TRIPLE_AB,
                                                  {"kind": "entity", "cui": "C", "name": "c", "entity_type": "Size"}])
        with pytest.raises(ParseError) as exc:
            load(path)
        assert exc.value.line_no == 5

    def test_unknown_cui_in_triple(self, temp_dir):
        path = _write(temp_dir / "cui.jsonl", [HEADER, ENTITY_A, dict(TRIPLE_AB, tail_cui="Z")])
        with pytest.raises(ParseError) as exc:
            load(path)
        assert exc.value.line_no == 3

    def test_bad_entity_type(self, temp_dir):
        path = _write(temp_dir / "type.jsonl", [HEADER, dict(ENTITY_A, entity_type="Gene")])
        with pytest.raises(ParseError) as exc:
            load(path)
        assert exc.value.line_no == 2

    def test_wrong_token_width(self, temp_dir):
        token = {"kind": "vision_token", "label_index": 1, "feature": [0.0, 1.0, 2.0]}
        path = _write(temp_dir / "tok.jsonl", [HEADER, token])
        with pytest.raises(ParseError) as exc:
            load(path)
        assert exc.value.line_no == 2

    def test_blank_lines_keep_numbering(self, temp_dir):
        path = _write(temp_dir / "blank.jsonl", [HEADER, "", ENTITY_A, "", "[1, 2]"])
        with pytest.raises(ParseError) as exc:
            load(path)
        assert exc.value.line_no == 5

    def test_missing_file(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            load(str(temp_dir / "nope.jsonl"))


class TestMerge:
    """测试多文件合并"""

    def test_merge_accumulates_counts(self, mini_kg, mini_kg_path):
        merge_into(mini_kg, mini_kg_path)
        stats = mini_kg.stats()
        assert stats["n_entities"] == 5
        assert stats["n_triples"] == 4
        assert stats["n_triple_instances"] == 14
        assert stats["n_vision_tokens"] == 4

    def test_merge_into_empty_takes_d_vision(self, mini_kg_path):
        g = merge_into(KnowledgeGraph(), mini_kg_path)
        assert g.d_vision == 4
        assert len(g.vision_tokens) == 2
