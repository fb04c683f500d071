"""测试跨模态桥接与前缀组装"""

import numpy as np
import pytest

from src.kgreport.common.errors import EmptyGraph, ShapeMismatch
from src.kgreport.nn.bridge import SEGMENTS, CrossModalBridge, assemble_prefix
from src.kgreport.nn.gradcheck import check_gradients, numerical_gradient, projected_loss, relative_error

TOL = 1e-6


@pytest.fixture
def streams(rng):
    return {
        "v": rng.normal(size=(3, 4)),
        "kv": rng.normal(size=(3, 4)),
        "kg2v": rng.normal(size=(3, 4)),
        "v2kg": rng.normal(size=(2, 4)),
    }


class TestCrossAttention:
    """测试双向交叉注意力"""

    def test_shapes(self, rng):
        bridge = CrossModalBridge(4, 6, 2, rng=rng)
        F_v, X = rng.normal(size=(5, 4)), rng.normal(size=(3, 4))
        assert bridge.kg2v(F_v, X)[0].shape == (5, 4)
        assert bridge.v2kg(X, F_v)[0].shape == (3, 4)

    def test_empty_graph(self, rng):
        bridge = CrossModalBridge(4, 6, 2, rng=rng)
        with pytest.raises(EmptyGraph):
            bridge.kg2v(np.zeros((5, 4)), np.zeros((0, 4)))
        with pytest.raises(EmptyGraph):
            bridge.v2kg(np.zeros((0, 4)), np.zeros((5, 4)))

    def test_width_checked(self, rng):
        bridge = CrossModalBridge(4, 6, 2, rng=rng)
        with pytest.raises(ShapeMismatch):
            bridge.kg2v(np.zeros((5, 3)), np.zeros((2, 4)))

    @pytest.mark.parametrize("direction", ["kg2v", "v2kg"])
    def test_gradients(self, direction):
        rng = np.random.default_rng(17)
        for _ in range(5):
            bridge = CrossModalBridge(4, 6, 2, rng=rng)
            F_v, X = rng.normal(size=(5, 4)), rng.normal(size=(3, 4))
            if direction == "kg2v":
                run = lambda: bridge.kg2v(F_v, X)
                backward = bridge.kg2v_backward
                R = rng.normal(size=(5, 4))
            else:
                run = lambda: bridge.v2kg(X, F_v)
                backward = bridge.v2kg_backward
                R = rng.normal(size=(3, 4))

            _, cache = run()
            dq, dkv, grads = backward(R, cache)

            def loss():
                return projected_loss(run()[0], R)

            params = {k: v for k, v in bridge.parameters().items() if k in grads}
            assert set(params) == {f"{direction}.attn.{w}" for w in ("W_Q", "W_K", "W_V", "W_O")}
            errors = check_gradients(loss, params, grads)
            assert max(errors.values()) < TOL, errors
            dF_v, dX = (dq, dkv) if direction == "kg2v" else (dkv, dq)
            assert relative_error(dF_v, numerical_gradient(loss, F_v)) < TOL
            assert relative_error(dX, numerical_gradient(loss, X)) < TOL


class TestAssemblePrefix:
    """测试前缀矩阵的段顺序与梯度"""

    def test_spans_follow_fixed_order(self, rng, streams):
        bridge = CrossModalBridge(4, 6, 2, rng=rng)
        prefix = assemble_prefix(streams["v"], streams["kv"], streams["kg2v"], streams["v2kg"], bridge)
        assert prefix.n_f == 11
        assert prefix.spans == {"v": (0, 3), "kv": (3, 6), "kg2v": (6, 9), "v2kg": (9, 11)}
        np.testing.assert_allclose(prefix.segment("v2kg"), streams["v2kg"] @ bridge.params["proj_v2kg"])

    def test_absent_streams_take_no_rows(self, rng, streams):
        bridge = CrossModalBridge(4, 6, 2, rng=rng)
        prefix = assemble_prefix(streams["v"], None, streams["kg2v"], streams["v2kg"], bridge)
        assert prefix.span_sizes() == {"v": 3, "kv": 0, "kg2v": 3, "v2kg": 2}
        assert prefix.spans["kv"] == (3, 3)
        assert prefix.F.shape == (8, 6)

    def test_all_streams_absent(self, rng):
        bridge = CrossModalBridge(4, 6, 2, rng=rng)
        prefix = assemble_prefix(None, None, None, None, bridge)
        assert prefix.F.shape == (0, 6)
        assert all(n == 0 for n in prefix.span_sizes().values())

    def test_tied_projection_names(self, rng):
        names = set(CrossModalBridge(4, 6, 2, tie_projections=True, rng=rng).parameters())
        assert "proj" in names
        assert not any(n.startswith("proj_") for n in names)
        untied = set(CrossModalBridge(4, 6, 2, rng=rng).parameters())
        assert {f"proj_{s}" for s in SEGMENTS} <= untied

    @pytest.mark.parametrize("tied", [False, True])
    def test_gradients(self, tied, streams):
        rng = np.random.default_rng(19)
        bridge = CrossModalBridge(4, 6, 2, tie_projections=tied, rng=rng)
        streams = dict(streams, kv=None)
        _, cache = bridge.assemble_prefix(streams)
        R = rng.normal(size=(8, 6))
        dstreams, grads = bridge.assemble_backward(R, cache)
        assert "kv" not in dstreams

        def loss():
            return projected_loss(bridge.assemble_prefix(streams)[0].F, R)

        params = {k: v for k, v in bridge.parameters().items() if k in grads}
        errors = check_gradients(loss, params, grads)
        assert max(errors.values()) < TOL, errors
        for name, dX in dstreams.items():
            assert relative_error(dX, numerical_gradient(loss, streams[name])) < TOL
