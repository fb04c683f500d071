"""测试多头注意力与多尺度融合"""

import numpy as np
import pytest

from src.kgreport.common.errors import BadScaleIndex, EmptyGraph, EmptyInput, HeadDivisibility, ShapeMismatch, TooManyNodes
from src.kgreport.nn.attention import MultiHeadAttention, attention
from src.kgreport.nn.fusion import FusedScales, ScaleFusion, select_final
from src.kgreport.nn.gradcheck import check_gradients, numerical_gradient, projected_loss, relative_error

TOL = 1e-6


class TestMultiHeadAttention:
    """测试注意力前向与反向"""

    def test_single_head_matches_direct_formula(self, rng):
        mha = MultiHeadAttention(4, 6, 8, 1, rng)
        Xq, Xkv = rng.normal(size=(3, 4)), rng.normal(size=(5, 6))
        p = mha.params
        scores = (Xq @ p["W_Q"]) @ (Xkv @ p["W_K"]).T / np.sqrt(8)
        w = np.exp(scores - scores.max(axis=1, keepdims=True))
        w = w / w.sum(axis=1, keepdims=True)
        expected = w @ (Xkv @ p["W_V"]) @ p["W_O"]
        np.testing.assert_allclose(attention(Xq, Xkv, mha), expected, atol=1e-12)

    def test_weights_are_distributions(self, rng):
        mha = MultiHeadAttention(4, 4, 8, 4, rng)
        _, cache = mha.forward(rng.normal(size=(3, 4)), rng.normal(size=(6, 4)))
        assert cache["weights"].shape == (4, 3, 6)
        np.testing.assert_allclose(cache["weights"].sum(axis=-1), np.ones((4, 3)))

    def test_mask_hides_entries(self, rng):
        mha = MultiHeadAttention(4, 4, 8, 2, rng)
        Xq, Xkv = rng.normal(size=(2, 4)), rng.normal(size=(3, 4))
        mask = np.array([[True, True, False], [True, False, False]])
        out, cache = mha.forward(Xq, Xkv, mask)
        assert np.all(cache["weights"][:, ~mask] == 0.0)
        # 被完全遮住的键值行不影响输出
        Xkv2 = Xkv.copy()
        Xkv2[2] += 100.0
        np.testing.assert_allclose(mha.forward(Xq, Xkv2, mask)[0], out, atol=1e-12)

    def test_errors(self, rng):
        with pytest.raises(HeadDivisibility):
            MultiHeadAttention(4, 4, 6, 4, rng)
        mha = MultiHeadAttention(4, 4, 8, 2, rng)
        with pytest.raises(EmptyInput):
            mha.forward(np.zeros((2, 4)), np.zeros((0, 4)))
        with pytest.raises(ShapeMismatch):
            mha.forward(np.zeros((2, 3)), np.zeros((2, 4)))
        with pytest.raises(ShapeMismatch):
            mha.forward(np.zeros((2, 4)), np.zeros((3, 4)), np.ones((3, 2), dtype=bool))

    @pytest.mark.parametrize("masked", [False, True])
    def test_gradients(self, masked):
        rng = np.random.default_rng(5)
        for _ in range(5):
            mha = MultiHeadAttention(3, 5, 4, 2, rng)
            Xq, Xkv = rng.normal(size=(3, 3)), rng.normal(size=(4, 5))
            R = rng.normal(size=(3, 4))
            mask = np.tril(np.ones((3, 4), dtype=bool)) if masked else None

            _, cache = mha.forward(Xq, Xkv, mask)
            dXq, dXkv, grads = mha.backward(R, cache)

            def loss():
                return projected_loss(mha.forward(Xq, Xkv, mask)[0], R)

            errors = check_gradients(loss, mha.params, grads)
            assert max(errors.values()) < TOL, errors
            assert relative_error(dXq, numerical_gradient(loss, Xq)) < TOL
            assert relative_error(dXkv, numerical_gradient(loss, Xkv)) < TOL


class TestScaleFusion:
    """测试尺度编码、拼接与切片"""

    def test_encodings(self, rng):
        fusion = ScaleFusion(2, 4, 8, 2, rng=rng)
        X = rng.normal(size=(3, 8))
        out = fusion.apply_encodings(X, 1)
        np.testing.assert_allclose(out, X + fusion.params["E_scale"][1] + fusion.params["E_pos"][:3])

    def test_encoding_errors(self, rng):
        fusion = ScaleFusion(2, 3, 8, 2, rng=rng)
        with pytest.raises(TooManyNodes):
            fusion.apply_encodings(np.zeros((4, 8)), 0)
        with pytest.raises(BadScaleIndex):
            fusion.apply_encodings(np.zeros((2, 8)), 2)
        with pytest.raises(ShapeMismatch):
            fusion.apply_encodings(np.zeros((2, 5)), 0)

    def test_offsets_with_empty_scale(self, rng):
        fusion = ScaleFusion(3, 4, 8, 2, rng=rng)
        fused, _ = fusion.forward([rng.normal(size=(2, 8)), np.zeros((0, 8)), rng.normal(size=(3, 8))])
        assert fused.offsets == [0, 2, 2]
        assert fused.sizes == [2, 0, 3]
        assert fused.X.shape == (5, 8)
        assert [p.shape[0] for p in fused.per_scale] == [2, 0, 3]
        np.testing.assert_array_equal(fused.final, fused.X[2:5])

    def test_all_empty(self, rng):
        fusion = ScaleFusion(2, 4, 8, 2, rng=rng)
        with pytest.raises(EmptyGraph):
            fusion.forward([np.zeros((0, 8)), np.zeros((0, 8))])

    def test_select_final(self):
        fused = FusedScales(X=np.arange(12.0).reshape(6, 2), offsets=[0, 1, 3], sizes=[1, 2, 3])
        np.testing.assert_array_equal(select_final(fused, 0), [[0.0, 1.0]])
        np.testing.assert_array_equal(select_final(fused, -1), fused.X[3:6])
        np.testing.assert_array_equal(select_final(fused, 1), fused.X[1:3])
        with pytest.raises(BadScaleIndex):
            select_final(fused, 3)
        with pytest.raises(BadScaleIndex):
            select_final(fused, -4)

    def test_final_gradient_placement(self, rng):
        fusion = ScaleFusion(2, 4, 4, 2, rng=rng)
        _, cache = fusion.forward([rng.normal(size=(2, 4)), rng.normal(size=(3, 4))])
        d_final = np.ones((3, 4))
        dX2 = fusion.final_gradient(d_final, cache)
        assert dX2.shape == (5, 4)
        assert np.all(dX2[:2] == 0.0) and np.all(dX2[2:] == 1.0)

    @pytest.mark.parametrize("residual", [True, False])
    def test_gradients(self, residual):
        rng = np.random.default_rng(9)
        for _ in range(5):
            fusion = ScaleFusion(3, 4, 4, 2, residual=residual, rng=rng)
            X_list = [rng.normal(size=(n, 4)) for n in (1, 3, 4)]
            R = rng.normal(size=(8, 4))

            _, cache = fusion.forward(X_list)
            parts, grads = fusion.backward(R, cache)

            def loss():
                return projected_loss(fusion.forward(X_list)[0].X, R)

            errors = check_gradients(loss, fusion.parameters(), grads)
            assert max(errors.values()) < TOL, errors
            for X, dX in zip(X_list, parts):
                assert relative_error(dX, numerical_gradient(loss, X)) < TOL
