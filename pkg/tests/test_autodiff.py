"""Tensor engine: backward contracts, op gradients vs finite differences,
optimizer arithmetic."""

import numpy as np
import pytest

from helpers import check_gradients, rel_error, central_diff

from text23d.autodiff import Tensor, backward, default_dtype, no_grad, nn, ops
from text23d.autodiff.optim import AdamW, Schedule
from text23d.errors import ContractViolation, NumericError


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    y = ops.mul(x, x)
    y.backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_unreachable_param_gets_zero():
    x = Tensor(2.0, requires_grad=True)
    p = Tensor(np.ones(3), requires_grad=True)
    loss = ops.mul(x, x)
    backward(loss, params=[x, p])
    assert np.array_equal(p.grad, np.zeros(3))


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(4), requires_grad=True)
    with pytest.raises(ContractViolation):
        ops.mul(x, x).backward()


def test_backward_rejects_non_finite_and_names_op():
    x = Tensor(np.inf, requires_grad=True)
    loss = ops.exp(x)
    with pytest.raises(NumericError, match="exp"):
        loss.backward()


def test_two_layer_perceptron_matches_finite_differences():
    with default_dtype(np.float64):
        rng = np.random.default_rng(7)
        w1 = nn.uniform_fan_in(rng, (5, 8), 5)
        b1 = nn.zeros_param((8,))
        w2 = nn.uniform_fan_in(rng, (8, 3), 8)
        b2 = nn.zeros_param((3,))
        x = np.asarray(rng.normal(size=(4, 5)))
        t = np.array([0, 2, 1, 2])

        def loss_fn():
            h = ops.tanh(ops.add(ops.matmul(Tensor(x), w1), b1))
            logits = ops.add(ops.matmul(h, w2), b2)
            return ops.softmax_cross_entropy(logits, t)

        err = check_gradients(loss_fn, [w1, b1, w2, b2])
    assert err < 1e-4


def test_backward_linearity_is_exact():
    # Two losses over the same parameters, each with its own forward pass:
    # gradient accumulation is then exactly additive.
    with default_dtype(np.float64):
        rng = np.random.default_rng(3)
        w = nn.uniform_fan_in(rng, (6, 6), 6)
        x = Tensor(np.asarray(rng.normal(size=(2, 6))))

        def loss_a():
            h = ops.relu(ops.matmul(x, w))
            return ops.mean(ops.mul(h, h))

        def loss_b():
            h = ops.tanh(ops.matmul(x, w))
            return ops.mean(ops.abs(h))

        ops.add(loss_a(), loss_b()).backward()
        combined = w.grad.copy()

        w.grad = None
        loss_a().backward()
        ga = w.grad.copy()
        w.grad = None
        loss_b().backward()
        gb = w.grad.copy()
    assert np.array_equal(combined, ga + gb)


def test_topological_traversal_visits_once():
    # Diamond graph: y = (x*x) + (x*x reused); each node contributes once.
    x = Tensor(2.0, requires_grad=True)
    sq = ops.mul(x, x)
    y = ops.add(sq, sq)
    y.backward()
    assert x.grad == pytest.approx(8.0)


def test_no_grad_builds_no_graph():
    x = Tensor(2.0, requires_grad=True)
    with no_grad():
        y = ops.mul(x, x)
    assert not y.requires_grad
    assert y._backward_fn is None


# -- softmax cross entropy ---------------------------------------------------


def test_cross_entropy_uniform_logits():
    loss = ops.softmax_cross_entropy(Tensor(np.zeros(4)), 2)
    assert loss.item() == pytest.approx(np.log(4.0), abs=1e-6)


def test_cross_entropy_dominant_logit():
    logits = np.zeros(5)
    logits[3] = 50.0
    loss = ops.softmax_cross_entropy(Tensor(logits), 3)
    assert loss.item() < 1e-8


def test_cross_entropy_direct_value():
    # Frozen from direct evaluation of -log softmax([1,2,3])[0].
    loss = ops.softmax_cross_entropy(Tensor(np.array([1.0, 2.0, 3.0])), 0)
    assert loss.item() == pytest.approx(2.407606, abs=1e-6)


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        ops.softmax_cross_entropy(Tensor(np.zeros(4)), 7)


# -- op-by-op finite-difference spot checks ----------------------------------


def _fd_case(name, build):
    with default_dtype(np.float64):
        rng = np.random.default_rng(hash(name) % (2**32))
        params, loss_fn = build(rng)
        err = check_gradients(loss_fn, params, rng=rng)
    assert err < 1e-4, f"{name}: rel err {err}"


def test_grad_elementwise_chain():
    def build(rng):
        a = Tensor(np.asarray(rng.normal(size=(3, 4))) + 3.0, requires_grad=True)
        b = Tensor(np.asarray(rng.normal(size=(3, 4))), requires_grad=True)

        def loss_fn():
            y = ops.div(ops.mul(a, ops.sigmoid(b)), ops.add(ops.exp(ops.neg(a)), 1.0))
            y = ops.add(ops.log(ops.add(ops.abs(y), 0.5)), ops.tanh(b))
            return ops.mean(ops.mul(y, y))
        return [a, b], loss_fn
    _fd_case("elementwise", build)


def test_grad_reductions_and_shape():
    def build(rng):
        a = Tensor(np.asarray(rng.normal(size=(2, 3, 4))), requires_grad=True)

        def loss_fn():
            s = ops.sum(a, axis=1)
            m = ops.mean(ops.reshape(s, (2, 2, 2)), axis=(0, 2))
            return ops.sum(ops.mul(m, m))
        return [a], loss_fn
    _fd_case("reductions", build)


def test_grad_matmul_broadcast():
    def build(rng):
        a = Tensor(np.asarray(rng.normal(size=(2, 3, 4))), requires_grad=True)
        b = Tensor(np.asarray(rng.normal(size=(4, 5))), requires_grad=True)

        def loss_fn():
            return ops.mean(ops.pow_const(ops.matmul(a, b), 2))
        return [a, b], loss_fn
    _fd_case("matmul", build)


def test_grad_layer_norm():
    def build(rng):
        x = Tensor(np.asarray(rng.normal(size=(4, 6))), requires_grad=True)
        g = Tensor(np.asarray(rng.normal(size=(6,))) + 1.0, requires_grad=True)
        b = Tensor(np.asarray(rng.normal(size=(6,))), requires_grad=True)

        def loss_fn():
            return ops.mean(ops.abs(ops.layer_norm(x, g, b)))
        return [x, g, b], loss_fn
    _fd_case("layer_norm", build)


def test_grad_softmax_and_attention():
    def build(rng):
        q = Tensor(np.asarray(rng.normal(size=(2, 5, 4))), requires_grad=True)
        k = Tensor(np.asarray(rng.normal(size=(2, 5, 4))), requires_grad=True)
        v = Tensor(np.asarray(rng.normal(size=(2, 5, 4))), requires_grad=True)
        mask = np.triu(np.full((5, 5), -np.inf), k=1)

        def loss_fn():
            return ops.mean(ops.pow_const(ops.attention(q, k, v, mask), 2))
        return [q, k, v], loss_fn
    _fd_case("attention", build)


def test_grad_embedding():
    def build(rng):
        w = Tensor(np.asarray(rng.normal(size=(7, 3))), requires_grad=True)
        ids = rng.integers(0, 7, size=(4, 2))

        def loss_fn():
            return ops.mean(ops.exp(ops.embedding(w, ids)))
        return [w], loss_fn
    _fd_case("embedding", build)


def test_grad_conv2d():
    def build(rng):
        x = Tensor(np.asarray(rng.normal(size=(2, 6, 6, 3))), requires_grad=True)
        w = Tensor(np.asarray(rng.normal(size=(3, 3, 3, 4))) * 0.3, requires_grad=True)
        b = Tensor(np.asarray(rng.normal(size=(4,))), requires_grad=True)

        def loss_fn():
            return ops.mean(ops.relu(ops.conv2d(x, w, b, stride=2, padding=1)))
        return [x, w, b], loss_fn
    _fd_case("conv2d", build)


def test_grad_conv_transpose2d():
    def build(rng):
        x = Tensor(np.asarray(rng.normal(size=(2, 3, 3, 4))), requires_grad=True)
        w = Tensor(np.asarray(rng.normal(size=(4, 4, 3, 4))) * 0.3, requires_grad=True)
        b = Tensor(np.asarray(rng.normal(size=(3,))), requires_grad=True)

        def loss_fn():
            return ops.mean(ops.tanh(ops.conv_transpose2d(x, w, b, stride=2, padding=1)))
        return [x, w, b], loss_fn
    _fd_case("conv_transpose2d", build)


def test_conv_transpose_doubles_spatial_size():
    rng = np.random.default_rng(0)
    layer = nn.ConvTranspose2d(4, 2, 4, rng, stride=2, padding=1)
    out = layer(Tensor(np.zeros((1, 6, 6, 4), dtype=np.float32)))
    assert out.shape == (1, 12, 12, 2)


def test_grad_bilinear_sample():
    def build(rng):
        f = Tensor(np.asarray(rng.normal(size=(2, 5, 5, 3))), requires_grad=True)
        coords = rng.uniform(-1.0, 5.5, size=(2, 6, 2))  # includes out-of-range
        valid = rng.uniform(size=(2, 6)) > 0.2

        def loss_fn():
            return ops.mean(ops.pow_const(ops.bilinear_sample(f, coords, valid), 2))
        return [f], loss_fn
    _fd_case("bilinear_sample", build)


def test_grad_straight_through():
    with default_dtype(np.float64):
        soft = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        hard = np.array([5.0, -1.0])
        out = ops.straight_through(hard, soft)
        assert np.array_equal(out.data, hard)
        ops.sum(ops.mul(out, np.array([2.0, 3.0]))).backward()
        assert np.array_equal(soft.grad, np.array([2.0, 3.0]))


def test_grad_concat_stack_getitem():
    def build(rng):
        a = Tensor(np.asarray(rng.normal(size=(2, 3))), requires_grad=True)
        b = Tensor(np.asarray(rng.normal(size=(2, 2))), requires_grad=True)

        def loss_fn():
            c = ops.concat([a, b], axis=1)
            s = ops.stack([c, ops.mul(c, 2.0)], axis=0)
            return ops.mean(ops.pow_const(s[:, :, 1:4], 2))
        return [a, b], loss_fn
    _fd_case("concat_stack_getitem", build)


def test_grad_softplus_sqrt_gelu():
    def build(rng):
        a = Tensor(np.asarray(rng.normal(size=(3, 3))), requires_grad=True)

        def loss_fn():
            return ops.mean(ops.sqrt(ops.add(ops.softplus(a), ops.mul(ops.gelu(a), ops.gelu(a)))))
        return [a], loss_fn
    _fd_case("softplus_sqrt_gelu", build)


# -- optimizer ----------------------------------------------------------------


def test_adamw_zero_grad_is_fixed_point():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    p.grad = np.zeros_like(p.data)
    before = p.data.copy()
    opt.step()
    assert np.array_equal(p.data, before)


def test_adamw_pure_weight_decay():
    p = Tensor(np.array([2.0], dtype=np.float64), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    p.grad = np.zeros_like(p.data)
    opt.step()
    assert p.data[0] == pytest.approx(2.0 * (1.0 - 0.1 * 0.5), rel=1e-12)


def test_adamw_first_step_magnitude():
    # Hand evaluation: m̂ = v̂ = 1 at t=1, so the step is -lr/(1+eps).
    p = Tensor(np.array([0.0], dtype=np.float64), requires_grad=True)
    opt = AdamW([p], lr=0.1, betas=(0.9, 0.96), eps=1e-8)
    p.grad = np.ones_like(p.data)
    opt.step()
    assert p.data[0] == pytest.approx(-0.1, abs=1e-6)


def test_adamw_deterministic():
    def run():
        p = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
        opt = AdamW([p], lr=0.05, weight_decay=0.01)
        for i in range(5):
            p.grad = np.array([0.5, -1.0], dtype=np.float32) * (i + 1)
            opt.step()
        return p.data.copy()
    assert np.array_equal(run(), run())


def test_adamw_shape_mismatch_rejected():
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = AdamW([p], lr=0.1)
    p.grad = np.zeros(4)
    with pytest.raises(ContractViolation):
        opt.step()


def test_cosine_schedule_endpoints():
    s = Schedule("cosine", base_lr=1.0, total_steps=100)
    assert s.lr_at(0) == pytest.approx(1.0)
    assert s.lr_at(50) == pytest.approx(0.5)
    assert s.lr_at(100) == pytest.approx(0.0, abs=1e-12)
