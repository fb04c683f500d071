"""测试实体文本编码"""

import shlex
import sys

import numpy as np
import pytest

from src.kgreport.common.errors import BadDim, KGReportError, ShapeMismatch, UnknownEntity
from src.kgreport.features import (
    ExternalEmbedder,
    HashedEmbedder,
    encode_nodes,
    entity_text,
    fnv1a_64,
    make_embedder,
    mean_pool,
)


def python_command(code: str) -> str:
    return shlex.join([sys.executable, "-c", code])


class TestEntityText:
    """测试实体文本序列化"""

    def test_field_order(self, mini_kg):
        assert entity_text(mini_kg.get_entity(0)) == (
            "C0001 | effusion | fluid in the pleural space | T047 | pleural effusion"
        )

    def test_empty_fields_keep_separators(self, mini_kg):
        assert entity_text(mini_kg.get_entity(2)) == "C0003 | small |  | T081 | "


class TestHashedEmbedder:
    """测试哈希嵌入"""

    def test_fnv_reference_values(self):
        assert fnv1a_64(b"") == 0xCBF29CE484222325
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a_64(b"foobar") == 0x85944171F73967E8

    def test_one_hot_rows(self):
        out = HashedEmbedder().embed_tokens("Pleural pleural effusion", 16)
        assert out.shape == (3, 16)
        np.testing.assert_array_equal(out.sum(axis=1), np.ones(3))
        # 大小写折叠后相同 token 落在同一列
        np.testing.assert_array_equal(out[0], out[1])
        assert out[2, fnv1a_64(b"effusion") % 16] == 1.0

    def test_single_dimension(self):
        np.testing.assert_array_equal(HashedEmbedder().embed_tokens("a b", 1), [[1.0], [1.0]])

    def test_bad_dim(self):
        with pytest.raises(BadDim):
            HashedEmbedder().embed_tokens("a", 0)

    def test_empty_text(self):
        assert HashedEmbedder().embed_tokens("   ", 8).shape == (0, 8)


class TestEncodeNodes:
    """测试节点特征矩阵"""

    def test_mean_pool_empty(self):
        np.testing.assert_array_equal(mean_pool(np.zeros((0, 4))), np.zeros(4))

    def test_rows_follow_node_ids(self, mini_kg):
        embedder = make_embedder("hashed")
        V = encode_nodes([3, 0], mini_kg.entities, embedder, 32)
        assert V.n == 2 and V.d == 32
        assert V.node_ids == [3, 0]
        expected = mean_pool(embedder.embed_tokens(entity_text(mini_kg.get_entity(3)), 32))
        np.testing.assert_allclose(V.values[0], expected)
        np.testing.assert_allclose(V.values.sum(axis=1), np.ones(2))

    def test_unknown_entity(self, mini_kg):
        with pytest.raises(UnknownEntity):
            encode_nodes([0, 42], mini_kg.entities, HashedEmbedder(), 8)

    def test_bad_dim(self, mini_kg):
        with pytest.raises(BadDim):
            encode_nodes([0], mini_kg.entities, HashedEmbedder(), 0)

    def test_deterministic(self, mini_kg):
        a = encode_nodes(list(mini_kg.entities), mini_kg.entities, HashedEmbedder(), 16).values
        b = encode_nodes(list(mini_kg.entities), mini_kg.entities, HashedEmbedder(), 16).values
        np.testing.assert_array_equal(a, b)


class TestExternalEmbedder:
    """测试外部嵌入进程"""

    ECHO_CODE = "import sys\nfor line in sys.stdin:\n    print(len(line.split()), 0.5, -1.0)"

    def test_rows_from_process(self, mini_kg):
        embedder = ExternalEmbedder(python_command(self.ECHO_CODE))
        V = encode_nodes([0, 1], mini_kg.entities, embedder, 3)
        n_tokens = len(entity_text(mini_kg.get_entity(0)).split())
        np.testing.assert_allclose(V.values[0], [n_tokens, 0.5, -1.0])
        assert V.values.shape == (2, 3)

    def test_wrong_width(self, mini_kg):
        embedder = ExternalEmbedder(python_command(self.ECHO_CODE))
        with pytest.raises(ShapeMismatch):
            encode_nodes([0], mini_kg.entities, embedder, 4)

    def test_process_failure(self, mini_kg):
        embedder = ExternalEmbedder(python_command("import sys; sys.exit(3)"))
        with pytest.raises(KGReportError):
            encode_nodes([0], mini_kg.entities, embedder, 3)

    def test_empty_command(self):
        with pytest.raises(KGReportError):
            make_embedder("external", "")

    def test_unknown_name(self):
        with pytest.raises(KGReportError):
            make_embedder("bert")
