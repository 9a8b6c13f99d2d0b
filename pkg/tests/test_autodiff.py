import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpsdetect import autodiff as ad
from cpsdetect.errors import NumericError

from oracles import finite_difference, relative_gradient_error

RTOL = 1e-4


def param(values, rng=None):
    return ad.Tensor(np.asarray(values, dtype=float), requires_grad=True)


class TestMatmul:
    def test_identity(self):
        a = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(a, ad.Tensor(np.eye(2)))
        np.testing.assert_array_equal(out.value, [[1, 2], [3, 4]])

    def test_annihilation_by_zeros(self):
        a = ad.Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = ad.Tensor([[0.0], [5.0]])
        np.testing.assert_array_equal(ad.matmul(a, b).value, [[0.0], [0.0]])

    def test_hand_product(self):
        a = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = ad.Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(ad.matmul(a, b).value, [[19, 22], [43, 50]])

    def test_shape_mismatch_names_both_shapes(self):
        a = ad.Tensor(np.zeros((2, 3)))
        b = ad.Tensor(np.zeros((2, 3)))
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(a, b)


class TestSoftmaxRows:
    def test_symmetry(self):
        out = ad.softmax_rows(ad.Tensor([[0.0, 0.0]]))
        np.testing.assert_allclose(out.value, [[0.5, 0.5]])

    def test_large_equal_logits_stable(self):
        out = ad.softmax_rows(ad.Tensor([[1000.0, 1000.0]]))
        np.testing.assert_allclose(out.value, [[0.5, 0.5]])

    def test_closed_form(self):
        out = ad.softmax_rows(ad.Tensor([[0.0, math.log(3.0)]]))
        np.testing.assert_allclose(out.value, [[0.25, 0.75]], atol=1e-12)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=6),
           st.floats(-100, 100))
    def test_rows_sum_to_one_and_shift_invariant(self, row, shift):
        x = np.asarray([row])
        base = ad.softmax_rows(ad.Tensor(x)).value
        shifted = ad.softmax_rows(ad.Tensor(x + shift)).value
        assert abs(base.sum() - 1.0) <= 1e-9
        np.testing.assert_allclose(base, shifted, atol=1e-12)
        assert (base >= 0.0).all()


class TestBackward:
    def test_sum_of_entries_gives_ones(self):
        p = param(np.arange(6.0).reshape(2, 3))
        ad.total_sum(p).backward()
        np.testing.assert_array_equal(p.grad, np.ones((2, 3)))

    def test_half_squared_norm(self):
        p = param([[3.0]])
        ad.scale(ad.frobenius_sq(p), 0.5).backward()
        np.testing.assert_allclose(p.grad, [[3.0]])

    def test_non_scalar_loss_rejected(self):
        p = param([[1.0, 2.0]])
        with pytest.raises(ValueError, match="1x1"):
            ad.add(p, p).backward()

    def test_unreached_parameter_gets_zero(self):
        used = param([[1.0]])
        unused = param([[5.0]])
        loss = ad.frobenius_sq(used)
        grads = ad.gradients(loss, [used, unused])
        np.testing.assert_array_equal(grads[unused], [[0.0]])
        np.testing.assert_allclose(grads[used], [[2.0]])

    def test_repeated_backward_is_deterministic(self):
        rng = np.random.default_rng(0)
        p = param(rng.normal(size=(3, 3)))
        q = param(rng.normal(size=(3, 3)))
        loss = ad.frobenius_sq(ad.relu(ad.matmul(p, ad.sigmoid(q))))
        loss.backward()
        first_p, first_q = p.grad.copy(), q.grad.copy()
        p.grad = None
        q.grad = None
        loss.backward()
        np.testing.assert_array_equal(p.grad, first_p)
        np.testing.assert_array_equal(q.grad, first_q)

    def test_shared_subexpression_visited_once(self):
        # f = sum(x) + sum(x): gradient is exactly 2, not 4.
        p = param([[1.0, 1.0]])
        s = ad.total_sum(p)
        ad.add(s, s).backward()
        np.testing.assert_array_equal(p.grad, [[2.0, 2.0]])


class TestFiniteness:
    def test_non_finite_input_rejected(self):
        with pytest.raises(NumericError):
            ad.Tensor([[np.inf, 1.0]])
        with pytest.raises(NumericError):
            ad.Tensor([[np.nan]])

    def test_overflowing_exp_raises(self):
        with pytest.raises(NumericError):
            ad.exp(ad.Tensor([[1e4]]))

    def test_public_ops_stay_finite_on_large_inputs(self):
        x = ad.Tensor(np.full((3, 4), 1e150))
        for op in (ad.relu, ad.sigmoid, ad.softmax_rows, ad.transpose,
                   ad.mean_rows):
            assert np.isfinite(op(x).value).all()


def _scalar_probe(rng, shape):
    # Contract any matrix output to a scalar with fixed random weights so
    # finite differences can probe the full Jacobian.
    r = ad.Tensor(rng.normal(size=shape))
    return lambda out: ad.total_sum(ad.mul(out, r)) if out.shape != (1, 1) else out


UNARY_OPS = [
    ("relu", lambda t: ad.relu(t), (3, 4)),
    ("leaky_relu", lambda t: ad.leaky_relu(t, 0.1), (3, 4)),
    ("sigmoid", ad.sigmoid, (3, 4)),
    ("exp", ad.exp, (3, 4)),
    ("softmax_rows", ad.softmax_rows, (3, 4)),
    ("transpose", ad.transpose, (3, 4)),
    ("mean_rows", ad.mean_rows, (3, 4)),
    ("total_sum", ad.total_sum, (3, 4)),
    ("frobenius_sq", ad.frobenius_sq, (3, 4)),
    ("scale", lambda t: ad.scale(t, -1.7), (3, 4)),
    ("clamp", lambda t: ad.clamp(t, -0.5, 0.5), (3, 4)),
    ("slice_cols", lambda t: ad.slice_cols(t, 1, 3), (3, 4)),
]


@pytest.mark.parametrize("name,op,shape", UNARY_OPS, ids=[u[0] for u in UNARY_OPS])
def test_gradient_check_unary(name, op, shape):
    rng = np.random.default_rng(hash(name) % 2 ** 31)
    x = param(rng.normal(size=shape))
    probe = _scalar_probe(rng, op(ad.Tensor(x.value)).shape)

    def loss_fn():
        return float(probe(op(ad.Tensor(x.value, requires_grad=True))).value[0, 0])

    loss = probe(op(x))
    loss.backward()
    numeric = finite_difference(loss_fn, x.value)
    assert relative_gradient_error(x.grad, numeric) < RTOL


BINARY_OPS = [
    ("add", ad.add, (3, 4), (3, 4)),
    ("sub", ad.sub, (3, 4), (3, 4)),
    ("mul", ad.mul, (3, 4), (3, 4)),
    ("matmul", ad.matmul, (3, 4), (4, 2)),
]


@pytest.mark.parametrize("name,op,sa,sb", BINARY_OPS, ids=[b[0] for b in BINARY_OPS])
def test_gradient_check_binary(name, op, sa, sb):
    rng = np.random.default_rng(hash(name) % 2 ** 31)
    a = param(rng.normal(size=sa))
    b = param(rng.normal(size=sb))
    probe = _scalar_probe(rng, op(ad.Tensor(a.value), ad.Tensor(b.value)).shape)

    loss = probe(op(a, b))
    loss.backward()
    analytic = {"a": a.grad.copy(), "b": b.grad.copy()}
    for label, p in (("a", a), ("b", b)):
        def loss_fn():
            return float(probe(op(ad.Tensor(a.value), ad.Tensor(b.value))).value[0, 0])
        numeric = finite_difference(loss_fn, p.value)
        assert relative_gradient_error(analytic[label], numeric) < RTOL


def test_gradient_check_concat_cols():
    rng = np.random.default_rng(11)
    a = param(rng.normal(size=(3, 2)))
    b = param(rng.normal(size=(3, 3)))
    probe = _scalar_probe(rng, (3, 5))

    loss = probe(ad.concat_cols([a, b]))
    loss.backward()
    analytic = {id(a): a.grad.copy(), id(b): b.grad.copy()}
    for p in (a, b):
        def loss_fn():
            return float(probe(ad.concat_cols(
                [ad.Tensor(a.value), ad.Tensor(b.value)])).value[0, 0])
        numeric = finite_difference(loss_fn, p.value)
        assert relative_gradient_error(analytic[id(p)], numeric) < RTOL


def test_gradient_check_composite_graph():
    rng = np.random.default_rng(42)
    w1 = param(rng.normal(size=(4, 3)))
    w2 = param(rng.normal(size=(3, 3)))
    x = ad.Tensor(rng.normal(size=(2, 4)))

    def forward():
        h = ad.relu(ad.matmul(x, ad.Tensor(w1.value, requires_grad=False)))
        h = ad.softmax_rows(ad.matmul(h, ad.Tensor(w2.value)))
        return float(ad.frobenius_sq(h).value[0, 0])

    h = ad.relu(ad.matmul(x, w1))
    loss = ad.frobenius_sq(ad.softmax_rows(ad.matmul(h, w2)))
    loss.backward()
    for p in (w1, w2):
        numeric = finite_difference(forward, p.value)
        assert relative_gradient_error(p.grad, numeric) < RTOL


class TestAdam:
    def test_zero_gradient_zero_decay_unchanged(self):
        p = param([[1.0, -2.0]])
        opt = ad.Adam([p], lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.value, [[1.0, -2.0]])

    def test_constant_gradient_descends(self):
        p = param([[0.0]])
        opt = ad.Adam([p], lr=0.01)
        for _ in range(50):
            p.grad = np.array([[3.0]])
            opt.step()
        assert p.value[0, 0] < 0.0

    def test_single_step_on_quadratic(self):
        # f(x) = x^2 from x=1 with lr 0.1 strictly reduces |x|.
        p = param([[1.0]])
        opt = ad.Adam([p], lr=0.1)
        ad.frobenius_sq(p).backward()
        opt.step()
        assert abs(p.value[0, 0]) < 1.0

    def test_step_counter_increments(self):
        p = param([[1.0]])
        opt = ad.Adam([p], lr=0.1)
        for expected in (1, 2, 3):
            opt.step()
            assert opt.count == expected

    def test_gradient_shape_mismatch(self):
        p = param([[1.0, 2.0]])
        opt = ad.Adam([p], lr=0.1)
        p.grad = np.zeros((2, 2))
        with pytest.raises(ValueError, match="shape"):
            opt.step()

    def test_decoupled_decay_shrinks_without_gradient(self):
        p = param([[10.0]])
        opt = ad.Adam([p], lr=0.1, weight_decay=0.5)
        opt.step()
        np.testing.assert_allclose(p.value, [[10.0 - 0.1 * 0.5 * 10.0]])

    def test_bad_hyperparameters_rejected(self):
        with pytest.raises(ValueError):
            ad.Adam([param([[1.0]])], lr=0.0)
        with pytest.raises(ValueError):
            ad.Adam([param([[1.0]])], lr=0.1, weight_decay=-1.0)


def test_uniform_init_is_seeded_and_bounded():
    a = ad.uniform_init(np.random.default_rng(5), 4, 3)
    b = ad.uniform_init(np.random.default_rng(5), 4, 3)
    np.testing.assert_array_equal(a.value, b.value)
    assert (np.abs(a.value) <= 1.0 / math.sqrt(4)).all()
    assert a.requires_grad
