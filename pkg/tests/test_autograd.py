from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from oracles import central_difference, relative_error
from threec import autograd as ag

RNG = np.random.default_rng(0)


def check_grad(build, *shapes, tol=1e-6):
    """Compare backward() of scalar ``build(*params)`` with central differences."""
    params = [ag.parameter(RNG.normal(size=s)) for s in shapes]
    out = build(*params)
    out.backward()
    for p in params:
        numeric = central_difference(lambda: float(build(*[ag.Tensor(q.data) for q in params]).data), p.data)
        assert relative_error(p.grad, numeric) < tol


class TestElementwise:
    def test_add_mul_broadcast(self):
        check_grad(lambda a, b: (a * b + b).sum(), (3, 4), (1, 4))

    def test_sub_div(self):
        check_grad(lambda a, b: ((a - b) / (b * b + 2.0)).sum(), (2, 3), (2, 3))

    def test_matmul(self):
        check_grad(lambda a, b: (a @ b).sum(), (3, 4), (4, 2))

    @pytest.mark.parametrize("op", [ag.exp, ag.sigmoid, ag.silu, ag.leaky_relu])
    def test_unary(self, op):
        check_grad(lambda a: op(a).sum(), (5, 2))

    def test_log(self):
        check_grad(lambda a: ag.log(a * a + 1.0).sum(), (4,))

    def test_clip_passes_gradient_inside_only(self):
        x = ag.parameter([-2.0, 0.3, 2.0])
        ag.clip(x, -1.0, 1.0).sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_mean_reshape_index(self):
        check_grad(lambda a: (a.reshape(6)[1:4] * 3.0).mean(), (2, 3))

    def test_stable_sigmoid_extremes(self):
        out = ag.stable_sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])
        assert np.all(np.isfinite(out))


class TestGraphOps:
    idx = ag.Index(np.array([0, 2, 2, 1, 0]), 3)

    def test_gather_segment_sum_adjoint(self):
        x = RNG.normal(size=(3, 2))
        y = RNG.normal(size=(5, 2))
        lhs = np.sum(ag.gather(ag.Tensor(x), self.idx).data * y)
        rhs = np.sum(x * ag.segment_sum(ag.Tensor(y), self.idx).data)
        assert lhs == pytest.approx(rhs)

    def test_gather_grad(self):
        check_grad(lambda a: (ag.gather(a, self.idx) * 2.0).sum(), (3, 2))

    def test_segment_softmax_normalizes(self):
        s = ag.segment_softmax(ag.Tensor(RNG.normal(size=5)), self.idx).data
        np.testing.assert_allclose(np.bincount(self.idx.idx, weights=s, minlength=3), [1.0, 1.0, 1.0])

    def test_segment_softmax_grad(self):
        w = RNG.normal(size=5)
        check_grad(lambda a: (ag.segment_softmax(a, self.idx) * w).sum(), (5,))

    def test_rowdot_grad(self):
        check_grad(lambda a, b: ag.rowdot(a, b).sum(), (4, 3), (4, 3))

    def test_spmm_grad(self):
        A = sp.random(4, 3, density=0.5, random_state=1, format="csr")
        check_grad(lambda a: (ag.spmm(A, a) * 1.5).sum(), (3, 2))

    def test_shared_subexpression_accumulates(self):
        x = ag.parameter([1.5])
        y = x * x + x
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [2 * 1.5 + 1])
