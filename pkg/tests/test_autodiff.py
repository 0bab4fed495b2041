"""Autodiff engine tests: op semantics, finite-difference oracles, Adam."""

import math

import numpy as np
import pytest

from disner import autodiff as ad
from disner.errors import ConfigError, NonFiniteError, ShapeError


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestForwardValues:
    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(ad.constant(0.0)).item() == 0.5

    def test_logsumexp_two_zeros(self):
        out = ad.logsumexp(ad.constant([0.0, 0.0]))
        assert out.item() == pytest.approx(math.log(2), abs=1e-12)

    def test_matmul_shape(self):
        out = ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((3, 1))))
        assert out.shape == (2, 1)

    def test_matmul_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 1\)"):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 1))))

    def test_add_broadcast_mismatch(self):
        with pytest.raises(ShapeError, match="broadcast"):
            ad.add(ad.constant(np.ones(3)), ad.constant(np.ones(4)))

    def test_concat(self):
        out = ad.concat([ad.constant([1.0, 2.0]), ad.constant([3.0])])
        np.testing.assert_array_equal(out.value, [1, 2, 3])

    def test_lookup_rows(self):
        table = ad.constant([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        out = ad.lookup(table, [2, 0])
        np.testing.assert_array_equal(out.value, [[5, 6], [1, 2]])

    def test_reduce_max_tie_breaks_low(self):
        _, arg = ad.reduce_max(ad.constant([3.0, 7.0, 7.0]))
        assert arg == 1

    def test_non_finite_trips(self):
        big = ad.constant(1e308)
        with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
            ad.mul(big, big)

    def test_logsumexp_shift_invariance(self):
        v = _rng(1).normal(size=7)
        base = ad.logsumexp(ad.constant(v)).item()
        shifted = ad.logsumexp(ad.constant(v + 123.456)).item()
        assert shifted == pytest.approx(base + 123.456, abs=1e-10)

    def test_logsumexp_large_scores_stable(self):
        out = ad.logsumexp(ad.constant([1e3, 1e3 - 5.0]))
        assert out.item() == pytest.approx(1e3 + math.log(1 + math.exp(-5.0)), abs=1e-9)


class TestBackwardBasics:
    def test_x_squared(self):
        x = ad.param(3.0)
        ad.backward(ad.mul(x, x))
        assert x.grad == pytest.approx(6.0)

    def test_sigmoid_grad_at_zero(self):
        x = ad.param(0.0)
        ad.backward(ad.sigmoid(x))
        assert x.grad == pytest.approx(0.25)

    def test_backward_rejects_non_scalar(self):
        x = ad.param([1.0, 2.0])
        with pytest.raises(ShapeError, match="scalar"):
            ad.backward(ad.mul(x, x))

    def test_unreachable_parameter_keeps_none_grad(self):
        x, y = ad.param(1.0), ad.param(2.0)
        ad.backward(ad.mul(x, x))
        assert y.grad is None

    def test_reused_node_accumulates(self):
        x = ad.param(2.0)
        y = ad.add(ad.mul(x, x), x)  # x² + x → dy/dx = 2x + 1 = 5
        ad.backward(y)
        assert x.grad == pytest.approx(5.0)

    def test_five_parameter_composite(self):
        rng = _rng(7)
        params = {f"p{i}": ad.param(rng.normal(size=(2, 2))) for i in range(5)}

        def build():
            a = ad.tanh(ad.matmul(params["p0"], params["p1"]))
            b = ad.sigmoid(ad.add(a, params["p2"]))
            c = ad.mul(b, params["p3"])
            d = ad.matmul(c, params["p4"])
            return ad.logsumexp(ad.reshape(d, (-1,)))

        assert ad.gradient_check(build, params) < 1e-6


OPS = {
    "add": lambda p, w: ad.add(p["a"], p["b"]),
    "sub": lambda p, w: ad.sub(p["a"], p["b"]),
    "mul": lambda p, w: ad.mul(p["a"], p["b"]),
    "neg": lambda p, w: ad.neg(p["a"]),
    "matmul": lambda p, w: ad.matmul(p["a"], ad.transpose(p["b"])),
    "matvec": lambda p, w: ad.matmul(p["a"], p["v"]),
    "vecmat": lambda p, w: ad.matmul(p["v"], ad.transpose(p["a"])),
    "sigmoid": lambda p, w: ad.sigmoid(p["a"]),
    "tanh": lambda p, w: ad.tanh(p["a"]),
    "concat": lambda p, w: ad.concat([p["v"], p["v2"]]),
    "lookup": lambda p, w: ad.lookup(p["a"], [1, 0, 1]),
    "take_scalar": lambda p, w: ad.take(p["a"], (1, 2)),
    "take_row": lambda p, w: ad.take(p["a"], 0),
    "reshape": lambda p, w: ad.reshape(p["a"], (-1,)),
    "transpose": lambda p, w: ad.transpose(p["a"]),
    "sum_all": lambda p, w: ad.reduce_sum(p["a"]),
    "sum_axis": lambda p, w: ad.reduce_sum(p["a"], axis=0),
    "logsumexp_all": lambda p, w: ad.logsumexp(p["a"]),
    "logsumexp_axis": lambda p, w: ad.logsumexp(p["a"], axis=1),
    "max_all": lambda p, w: ad.reduce_max(p["a"])[0],
    "max_axis": lambda p, w: ad.reduce_max(p["a"], axis=0)[0],
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_randomized_finite_difference_per_op(name):
    rng = _rng(hash(name) % 2**31)
    params = {
        "a": ad.param(rng.normal(size=(3, 4))),
        "b": ad.param(rng.normal(size=(3, 4))),
        "v": ad.param(rng.normal(size=4)),
        "v2": ad.param(rng.normal(size=3)),
    }
    weights = {}

    def build():
        out = OPS[name](params, weights)
        if "w" not in weights:
            weights["w"] = np.asarray(_rng(99).normal(size=out.shape))
        return ad.reduce_sum(ad.mul(out, ad.constant(weights["w"])))

    assert ad.gradient_check(build, params) < 1e-5, name


class TestDropout:
    def test_rate_zero_identity(self):
        x = ad.param([1.0, 2.0])
        assert ad.dropout(x, 0.0, _rng(), training=True) is x

    def test_inference_identity(self):
        x = ad.param([1.0, 2.0])
        assert ad.dropout(x, 0.5, _rng(), training=False) is x

    def test_invalid_rate(self):
        with pytest.raises(ConfigError):
            ad.dropout(ad.param([1.0]), 1.0, _rng(), training=True)

    def test_zero_fraction(self):
        x = ad.constant(np.ones(10_000))
        out = ad.dropout(Node_like(x), 0.5, _rng(3), training=True)
        zero_frac = float(np.mean(out.value == 0.0))
        assert abs(zero_frac - 0.5) < 0.02

    def test_survivors_scaled(self):
        x = ad.constant(np.ones(1000))
        out = ad.dropout(Node_like(x), 0.25, _rng(3), training=True)
        survivors = out.value[out.value != 0]
        np.testing.assert_allclose(survivors, 1.0 / 0.75)

    def test_gradient_through_mask(self):
        params = {"x": ad.param(_rng(5).normal(size=20))}

        def build():
            out = ad.dropout(params["x"], 0.5, _rng(11), training=True)
            return ad.reduce_sum(out)

        assert ad.gradient_check(build, params) < 1e-6


def Node_like(x):
    return ad.Node(x.value.copy(), requires_grad=True)


class TestAdam:
    def test_zero_gradient_no_move(self):
        p = ad.param([1.0, -2.0])
        opt = ad.Adam({"p": p}, lr=0.1)
        before = p.value.copy()
        p.grad = np.zeros_like(p.value)
        opt.step()
        np.testing.assert_array_equal(p.value, before)

    def test_descends_quadratic(self):
        x = ad.param(1.0)
        opt = ad.Adam({"x": x}, lr=0.1)
        ad.backward(ad.mul(x, x))
        opt.step()
        assert float(x.value) < 1.0

    def test_converges_to_three(self):
        x = ad.param(1.0)
        opt = ad.Adam({"x": x}, lr=0.05, decay=1.0)
        for _ in range(500):
            opt.zero_grad()
            d = ad.sub(x, ad.constant(3.0))
            ad.backward(ad.mul(d, d))
            opt.step()
        assert abs(float(x.value) - 3.0) < 1e-2

    def test_decay_schedule(self):
        opt = ad.Adam({"x": ad.param(0.0)}, lr=0.001, decay=0.9)
        assert opt.effective_lr == pytest.approx(0.001)
        opt.epoch = 2
        assert opt.effective_lr == pytest.approx(0.001 * 0.81)

    def test_deterministic_updates(self):
        def run():
            x = ad.param(np.array([1.0, 2.0]))
            opt = ad.Adam({"x": x}, lr=0.01)
            for _ in range(10):
                opt.zero_grad()
                ad.backward(ad.reduce_sum(ad.mul(x, x)))
                opt.step()
            return x.value
        np.testing.assert_array_equal(run(), run())


class TestClip:
    def test_norm_reported_and_scaled(self):
        p = ad.param(np.zeros(2))
        p.grad = np.array([3.0, 4.0])
        norm = ad.clip_global_norm({"p": p}, max_norm=1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(p.grad) == pytest.approx(1.0)

    def test_below_threshold_untouched(self):
        p = ad.param(np.zeros(2))
        p.grad = np.array([0.3, 0.4])
        ad.clip_global_norm({"p": p}, max_norm=5.0)
        np.testing.assert_array_equal(p.grad, [0.3, 0.4])
