"""测试知识图谱容器"""

import numpy as np
import pytest

from src.kgreport.common.errors import (
    BadEntityType,
    EmptyField,
    FrozenGraph,
    SelfLoop,
    ShapeMismatch,
    UnknownEntity,
)
from src.kgreport.kg import EntityType, KnowledgeGraph, RelationType


def _entity(cui, name, entity_type="Disorder", **extra):
    record = {"cui": cui, "name": name, "entity_type": entity_type}
    record.update(extra)
    return record


@pytest.fixture
def graph():
    g = KnowledgeGraph(d_vision=3)
    g.add_entity(_entity("C1", "effusion", aliases=["fluid"]))
    g.add_entity(_entity("C2", "pleural space", "Anatomy"))
    g.add_entity(_entity("C3", "small", "Size"))
    return g


class TestEntities:
    """测试实体添加与合并"""

    def test_ids_follow_insertion_order(self, graph):
        assert list(graph.entities) == [0, 1, 2]
        assert graph.get_entity(1).name == "pleural space"
        assert graph.get_entity(2).entity_type == EntityType.SIZE

    def test_duplicate_cui_merges_aliases(self, graph):
        eid = graph.add_entity(_entity("c1", "Effusion", aliases=["FLUID", "pleural fluid"]))
        assert eid == 0
        assert len(graph.entities) == 3
        assert graph.get_entity(0).aliases == ["fluid", "pleural fluid"]

    def test_empty_fields_rejected(self, graph):
        with pytest.raises(EmptyField):
            graph.add_entity(_entity("", "x"))
        with pytest.raises(EmptyField):
            graph.add_entity(_entity("C9", "  "))

    def test_unknown_entity_type(self, graph):
        with pytest.raises(BadEntityType):
            graph.add_entity(_entity("C9", "x", "Organism"))

    def test_lookup_by_cui(self, graph):
        assert graph.id_for_cui("C2") == 1
        with pytest.raises(UnknownEntity):
            graph.id_for_cui("C404")

    def test_merge_predicate(self, graph):
        same_name = lambda existing, record: existing.name.casefold() == record["name"].casefold()
        eid = graph.add_entity(_entity("C7", "Small", "Size"), merge_predicate=same_name)
        assert eid == 2
        assert "Small" in graph.get_entity(2).aliases
        # 合并后新 cui 也能查到
        assert graph.id_for_cui("C7") == 2


class TestTriples:
    """测试三元组"""

    def test_duplicate_triple_accumulates(self, graph):
        i = graph.add_triple(0, 1, RelationType.LOCATED_AT)
        j = graph.add_triple(0, 1, "located_at", count=2)
        assert i == j == 0
        assert len(graph.triples) == 1
        assert graph.triples[0].count == 3

    def test_relation_codes_are_stable(self):
        assert RelationType.parse("modify") is RelationType.MODIFY
        assert RelationType.parse(2) is RelationType.SUGGESTIVE_OF
        assert [r.value for r in RelationType] == [0, 1, 2]

    def test_self_loop_only_for_modify(self, graph):
        with pytest.raises(SelfLoop):
            graph.add_triple(0, 0, RelationType.LOCATED_AT)
        graph.add_triple(2, 2, RelationType.MODIFY)
        assert graph.triples[-1].key == (2, 2, 1)

    def test_unknown_endpoint(self, graph):
        with pytest.raises(UnknownEntity):
            graph.add_triple(0, 9, RelationType.MODIFY)


class TestVisionTokens:
    """测试视觉 token"""

    def test_add_token(self, graph):
        tid = graph.add_vision_token(10, [0.1, 0.2, 0.3], "img")
        assert tid == 0
        np.testing.assert_array_equal(graph.vision_tokens[0].feature, [0.1, 0.2, 0.3])

    def test_dimension_checked(self, graph):
        with pytest.raises(ShapeMismatch):
            graph.add_vision_token(10, [0.1, 0.2])

    def test_label_range(self, graph):
        with pytest.raises(ValueError):
            graph.add_vision_token(14, [0.0, 0.0, 0.0])


class TestFreezeAndStats:
    """测试冻结、统计与导出"""

    def test_frozen_graph_rejects_mutation(self, graph):
        graph.freeze()
        assert graph.frozen
        with pytest.raises(FrozenGraph):
            graph.add_entity(_entity("C9", "x"))
        with pytest.raises(FrozenGraph):
            graph.add_triple(0, 1, RelationType.LOCATED_AT)
        with pytest.raises(FrozenGraph):
            graph.add_vision_token(0, [0.0, 0.0, 0.0])

    def test_stats(self, mini_kg):
        stats = mini_kg.stats()
        assert stats["n_entities"] == 5
        assert stats["n_triples"] == 4
        assert stats["n_triple_instances"] == 7
        assert stats["n_vision_tokens"] == 2
        assert stats["per_relation_counts"] == {0: 2, 1: 1, 2: 1}
        assert stats["per_relation_instances"] == {0: 4, 1: 2, 2: 1}

    def test_export_dot_top_nodes(self, mini_kg):
        dot = mini_kg.export_dot(2)
        lines = dot.strip().splitlines()
        assert lines[0] == "digraph M3KG {"
        assert lines[-1] == "}"
        # effusion 关联 3 个三元组，pneumonia 关联 2 个
        assert 'n0 [label="effusion(Disorder)"];' in dot
        assert 'n3 [label="pneumonia(Disorder)"];' in dot
        assert "n0 -> n3 [label=\"suggestive_of\"];" in dot
        assert "n1" not in dot

    def test_export_dot_zero_nodes(self, mini_kg):
        assert mini_kg.export_dot(0).strip() == "digraph M3KG {\n}"
