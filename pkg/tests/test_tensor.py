import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from txt2img_mhn import tensor as T
from txt2img_mhn.gradcheck import check_gradients, relative_error
from txt2img_mhn.tensor import DimensionError, Graph, Tensor, backward

GRAD_TOL = 1e-3


def _probe(rng, shape):
    """Fixed random weights that turn a tensor output into a scalar loss."""
    return Tensor(rng.normal(size=shape))


def _weighted(out, w):
    return T.sum(T.mul(out, w))


def _positive(rng, shape):
    return rng.uniform(0.5, 2.0, size=shape)


# (name, builder(rng) -> (loss_fn, input arrays))
def _cases():
    def unary(op, make=lambda r, s: r.normal(size=s), shape=(3, 4)):
        def build(rng):
            w = _probe(rng, op(Tensor(np.ones(shape))).shape)
            return (lambda xs: _weighted(op(xs[0]), w)), [make(rng, shape)]

        return build

    def binary(op, sa=(3, 4), sb=(3, 4), make_b=lambda r, s: r.normal(size=s)):
        def build(rng):
            out_shape = np.broadcast_shapes(sa, sb)
            w = _probe(rng, out_shape)
            return (lambda xs: _weighted(op(xs[0], xs[1]), w)), [rng.normal(size=sa), make_b(rng, sb)]

        return build

    def matmul_case(sa, sb):
        def build(rng):
            out_shape = np.matmul(np.zeros(sa), np.zeros(sb)).shape
            w = _probe(rng, out_shape)
            return (lambda xs: _weighted(T.matmul(xs[0], xs[1]), w)), [rng.normal(size=sa), rng.normal(size=sb)]

        return build

    def cross_entropy_case(rng):
        targets = rng.integers(0, 5, size=(2, 3))
        return (lambda xs: T.cross_entropy(xs[0], targets)), [rng.normal(size=(2, 3, 5))]

    def mse_case(rng):
        target = rng.normal(size=(3, 4))
        return (lambda xs: T.mse(xs[0], target)), [rng.normal(size=(3, 4))]

    def take_rows_case(rng):
        ids = np.array([[0, 2, 2], [4, 1, 0]])
        w = _probe(rng, (2, 3, 3))
        return (lambda xs: _weighted(T.take_rows(xs[0], ids), w)), [rng.normal(size=(5, 3))]

    def concat_case(rng):
        w = _probe(rng, (2, 5))
        return (lambda xs: _weighted(T.concat([xs[0], xs[1]], axis=1), w)), [rng.normal(size=(2, 2)), rng.normal(size=(2, 3))]

    def masked_case(rng):
        mask = np.triu(np.ones((4, 4), bool), k=1)
        w = _probe(rng, (4, 4))
        return (lambda xs: _weighted(T.softmax(T.masked_fill(xs[0], mask, -np.inf), axis=-1), w)), [rng.normal(size=(4, 4))]

    def index_case(rng):
        w = _probe(rng, (2, 2))
        return (lambda xs: _weighted(xs[0][1:3, ::2], w)), [rng.normal(size=(4, 4))]

    return {
        "add": binary(T.add),
        "add_broadcast": binary(T.add, sb=(4,)),
        "sub": binary(T.sub, sb=(3, 1)),
        "mul": binary(T.mul),
        "mul_broadcast": binary(T.mul, sa=(2, 3, 4), sb=(1, 4)),
        "div": binary(T.div, make_b=_positive),
        "neg": unary(T.neg),
        "exp": unary(T.exp),
        "log": unary(T.log, make=_positive),
        "relu": unary(T.relu, make=lambda r, s: r.choice([-1, 1], size=s) * r.uniform(0.1, 1, size=s)),
        "sigmoid": unary(T.sigmoid),
        "tanh": unary(T.tanh),
        "reshape": unary(lambda x: T.reshape(x, (2, 6))),
        "transpose": unary(lambda x: T.transpose(x)),
        "transpose_axes": unary(lambda x: T.transpose(x, (2, 0, 1)), shape=(2, 3, 4)),
        "sum_axis": unary(lambda x: T.sum(x, axis=1, keepdims=True)),
        "mean": unary(lambda x: T.mean(x, axis=0)),
        "softmax": unary(lambda x: T.softmax(x, axis=-1)),
        "softmax_axis0": unary(lambda x: T.softmax(x, axis=0)),
        "softmax_rows": unary(T.softmax_rows),
        "log_softmax": unary(lambda x: T.log_softmax(x, axis=-1)),
        "layer_norm": unary(T.layer_norm, shape=(3, 6)),
        "scale": unary(lambda x: T.scale(x, 0.37)),
        "matmul_2d": matmul_case((3, 4), (4, 2)),
        "matmul_batched": matmul_case((2, 3, 4), (4, 5)),
        "matmul_batch_both": matmul_case((2, 3, 4), (2, 4, 3)),
        "cross_entropy": cross_entropy_case,
        "mse": mse_case,
        "take_rows": take_rows_case,
        "concat": concat_case,
        "masked_softmax": masked_case,
        "index": index_case,
    }


CASES = _cases()


class TestFiniteDifferences:
    @pytest.mark.parametrize("name", sorted(CASES))
    def test_op_gradient(self, name, rng):
        loss_fn, inputs = CASES[name](rng)
        errors = check_gradients(loss_fn, inputs)
        assert max(errors) < GRAD_TOL, f"{name}: {errors}"

    def test_shared_subexpression_accumulates(self, rng):
        # x feeds the loss along two paths, so its gradient must be the sum
        errors = check_gradients(lambda xs: T.sum(T.mul(T.exp(xs[0]), xs[0]) + T.tanh(xs[0])), [rng.normal(size=(3,))])
        assert errors[0] < GRAD_TOL


class TestForwardValues:
    def test_softmax_matches_closed_form(self):
        x = np.array([[0.0, np.log(2.0), np.log(3.0)]])
        np.testing.assert_allclose(T.softmax(Tensor(x)).data, [[1 / 6, 2 / 6, 3 / 6]], rtol=1e-6)

    def test_softmax_is_shift_invariant_for_large_inputs(self):
        x = np.array([[1000.0, 1001.0]])
        out = T.softmax(Tensor(x)).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [[1 / (1 + np.e), np.e / (1 + np.e)]], rtol=1e-6)

    def test_cross_entropy_is_summed_negative_log_likelihood(self):
        logits = np.log(np.array([[0.5, 0.25, 0.25], [0.1, 0.1, 0.8]]))
        loss = T.cross_entropy(Tensor(logits), np.array([0, 2])).data
        assert loss == pytest.approx(-np.log(0.5) - np.log(0.8), rel=1e-6)

    def test_layer_norm_has_zero_mean_unit_variance(self, rng):
        out = T.layer_norm(Tensor(rng.normal(3.0, 5.0, size=(4, 16)))).data
        np.testing.assert_allclose(out.mean(-1), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(-1), 1.0, rtol=1e-3)

    def test_masked_fill_blocks_positions(self):
        out = T.softmax(T.masked_fill(Tensor(np.zeros((2, 2))), np.array([[False, True], [False, False]]), -np.inf)).data
        np.testing.assert_allclose(out, [[1.0, 0.0], [0.5, 0.5]])

    def test_default_storage_is_float32(self):
        assert Tensor([1, 2, 3]).dtype == np.float32
        assert Tensor(np.ones(2, np.float64)).dtype == np.float64
        assert (Tensor(np.ones(2, np.float64)) * 2.0).dtype == np.float64


class TestBackwardMechanics:
    def test_leaf_gradients_accumulate_across_calls(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        backward(T.sum(x * 3.0))
        backward(T.sum(x * 3.0))
        np.testing.assert_allclose(x.grad, [6.0, 6.0])

    def test_non_scalar_loss_is_rejected(self):
        with pytest.raises(ValueError):
            backward(Tensor(np.ones(3), requires_grad=True) * 2.0)

    def test_graph_is_topologically_ordered(self):
        a = Tensor(np.ones(2), requires_grad=True)
        b = T.exp(a)
        c = T.sum(b * a)
        g = Graph.from_output(c)
        order = {id(t): i for i, t in enumerate(g.nodes)}
        assert order[id(b)] < order[id(c)]

    def test_constants_get_no_gradient(self):
        a = Tensor(np.ones(2), requires_grad=True)
        k = Tensor(np.ones(2))
        backward(T.sum(a * k))
        assert k.grad is None
        np.testing.assert_allclose(a.grad, 1.0)

    def test_deep_chain_does_not_recurse(self):
        x = Tensor(np.array(1.0), requires_grad=True)
        y = x
        for _ in range(5000):
            y = y * 1.0
        backward(y)
        assert x.grad == pytest.approx(1.0)


class TestErrors:
    def test_matmul_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_matmul_requires_matrices(self):
        with pytest.raises(DimensionError):
            T.matmul(Tensor(np.ones((3, 4))), Tensor(np.ones(4)))

    def test_take_rows_out_of_range(self):
        with pytest.raises(IndexError):
            T.take_rows(Tensor(np.ones((3, 2))), np.array([3]))

    def test_cross_entropy_bad_target(self):
        with pytest.raises(IndexError):
            T.cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))

    def test_debug_mode_flags_non_finite_results(self):
        T.set_debug(True)
        try:
            with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
                T.log(Tensor(np.array([-1.0])))
        finally:
            T.set_debug(False)


class TestProperties:
    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=st.floats(-50, 50)))
    def test_softmax_rows_are_distributions(self, x):
        out = T.softmax(Tensor(x)).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(-1), 1.0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)), elements=st.floats(-10, 10)))
    def test_log_softmax_equals_log_of_softmax(self, x):
        np.testing.assert_allclose(T.log_softmax(Tensor(x)).data, np.log(T.softmax(Tensor(x)).data), atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_matmul_matches_numpy(self, a, b, c, seed):
        r = np.random.default_rng(seed)
        x, y = r.normal(size=(a, b)), r.normal(size=(b, c))
        np.testing.assert_allclose(T.matmul(Tensor(x), Tensor(y)).data, x @ y, atol=1e-12)

    def test_relative_error_scale(self):
        assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.002])) == pytest.approx(1e-3, rel=1e-3)
