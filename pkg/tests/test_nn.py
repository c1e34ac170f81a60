import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hindsight import nn
from hindsight.errors import ConfigError, NumericalError

from conftest import finite_difference_gradient, random_net_without_kinks, relative_error


def test_zero_net_outputs_zero():
    net = nn.Mlp((3, 4, 5), np.zeros(nn.param_count((3, 4, 5))))
    out = nn.mlp_forward(net, np.array([1.0, -2.0, 0.5]))
    assert out.shape == (5,)
    assert np.all(out == 0.0)


def test_identity_single_layer():
    net = nn.Mlp((3, 3), np.zeros(nn.param_count((3, 3))))
    net.weights[0][:] = np.eye(3)
    x = np.array([0.3, -1.2, 7.0])
    assert np.allclose(nn.mlp_forward(net, x), x)


def test_forward_shape_and_chaining():
    rng = np.random.default_rng(0)
    net = nn.init_mlp((4, 8, 6, 3), rng)
    assert [w.shape for w in net.weights] == [(8, 4), (6, 8), (3, 6)]
    assert [b.shape for b in net.biases] == [(8,), (6,), (3,)]
    out = nn.forward_many(net, rng.standard_normal((10, 4)))
    assert out.shape == (10, 3)


def test_forward_dimension_mismatch():
    net = nn.init_mlp((4, 8, 3), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        nn.mlp_forward(net, np.zeros(5))


def test_views_share_flat_params():
    net = nn.init_mlp((2, 3, 2), np.random.default_rng(1))
    net.params[:] = 0.0
    assert all(np.all(w == 0.0) for w in net.weights)


def test_backward_zero_output_grad():
    net = nn.init_mlp((3, 5, 4), np.random.default_rng(2))
    grad = nn.mlp_backward(net, np.ones(3), np.zeros(4))
    assert np.all(grad == 0.0)


def test_backward_linear_layer_is_outer_product():
    net = nn.init_mlp((3, 2), np.random.default_rng(3))
    x = np.array([0.5, -1.0, 2.0])
    g = np.array([2.0, -3.0])
    grad = nn.mlp_backward(net, x, g)
    expected = np.concatenate([np.outer(g, x).ravel(), g])
    assert np.allclose(grad, expected, atol=1e-12)


def test_backward_shape_mismatch():
    net = nn.init_mlp((3, 5, 4), np.random.default_rng(4))
    with pytest.raises(ConfigError):
        nn.mlp_backward(net, np.ones(3), np.zeros(3))


def test_gradient_matches_finite_differences_100_cases():
    rng = np.random.default_rng(12345)
    shapes = ((3, 6, 2), (4, 8, 8, 5), (2, 5, 3, 4), (5, 7, 3))
    for case in range(100):
        sizes = shapes[case % len(shapes)]
        x = rng.standard_normal(sizes[0])
        net = random_net_without_kinks(sizes, x, rng)
        g_out = rng.standard_normal(sizes[-1])
        analytic = nn.mlp_backward(net, x, g_out)
        fd = finite_difference_gradient(net, lambda n: float(nn.mlp_forward(n, x) @ g_out))
        assert relative_error(analytic, fd) < 1e-6


def test_batched_backward_sums_per_sample_gradients():
    rng = np.random.default_rng(7)
    net = nn.init_mlp((3, 6, 4), rng)
    xs = rng.standard_normal((5, 3))
    gs = rng.standard_normal((5, 4))
    _, cache = nn.forward_many_cached(net, xs)
    batched = nn.backward_many(net, cache, gs)
    single = sum(nn.mlp_backward(net, x, g) for x, g in zip(xs, gs))
    assert np.allclose(batched, single, atol=1e-12)


# -- Adam -------------------------------------------------------------------

def test_adam_zero_grad_fixed_point():
    params = np.array([1.0, -2.0, 3.0])
    state = nn.AdamState.fresh(3)
    nn.adam_step(params, np.zeros(3), state)
    assert np.array_equal(params, [1.0, -2.0, 3.0])
    assert state.step_count == 1


def test_adam_zero_lr_leaves_params():
    rng = np.random.default_rng(0)
    params = rng.standard_normal(5)
    before = params.copy()
    state = nn.AdamState.fresh(5, lr=0.0)
    for _ in range(10):
        nn.adam_step(params, rng.standard_normal(5), state)
    assert np.array_equal(params, before)


def test_adam_constant_grad_step_magnitude_approaches_lr():
    # With a constant gradient the bias-corrected moments are exact from the
    # first step, so every step moves by lr * g / (|g| + eps).
    g = np.array([2.0, -0.5, 1e3])
    params = np.zeros(3)
    state = nn.AdamState.fresh(3, lr=5e-4)
    prev = params.copy()
    for _ in range(50):
        nn.adam_step(params, g, state)
        delta = params - prev
        assert np.allclose(np.abs(delta), state.lr * np.abs(g) / (np.abs(g) + state.eps),
                           rtol=1e-12)
        assert np.allclose(np.abs(delta), state.lr, rtol=1e-6)
        assert np.array_equal(np.sign(delta), -np.sign(g))
        prev = params.copy()


def test_adam_rejects_non_finite_gradient():
    state = nn.AdamState.fresh(2)
    with pytest.raises(NumericalError):
        nn.adam_step(np.zeros(2), np.array([1.0, np.nan]), state)


def test_adam_moment_length_check():
    state = nn.AdamState.fresh(3)
    with pytest.raises(ConfigError):
        nn.adam_step(np.zeros(2), np.zeros(2), state)


# -- Polyak -----------------------------------------------------------------

def test_polyak_exact_formula():
    online = nn.init_mlp((2, 3, 2), np.random.default_rng(0))
    target = nn.TargetCopy.of(online, tau=0.995)
    target.net.params[:] = 0.0
    online.params[:] = 1.0
    nn.polyak_update(target, online.params)
    assert np.allclose(target.net.params, 0.005, rtol=0, atol=1e-15)


@given(tau=st.sampled_from([0.0, 0.25, 0.5, 0.995, 1.0]))
@settings(deadline=None, max_examples=5)
def test_polyak_endpoints_and_formula(tau):
    rng = np.random.default_rng(11)
    online = nn.init_mlp((2, 4, 2), rng)
    target = nn.TargetCopy.of(online, tau=tau)
    shadow0 = rng.standard_normal(target.net.params.size)
    target.net.params[:] = shadow0
    expected = shadow0 * tau
    expected += (1.0 - tau) * online.params
    nn.polyak_update(target, online.params)
    assert np.array_equal(target.net.params, expected)
    if tau == 1.0:
        assert np.array_equal(target.net.params, shadow0)
    if tau == 0.0:
        assert np.array_equal(target.net.params, online.params)


def test_polyak_geometric_contraction():
    online = nn.init_mlp((3, 4, 3), np.random.default_rng(5))
    target = nn.TargetCopy.of(online, tau=0.9)
    target.net.params[:] = online.params + 1.0
    d0 = np.linalg.norm(target.net.params - online.params)
    for n in range(1, 30):
        nn.polyak_update(target, online.params)
        d = np.linalg.norm(target.net.params - online.params)
        assert d == pytest.approx(d0 * 0.9**n, rel=1e-9)


# -- logsumexp --------------------------------------------------------------

def test_logsumexp_uniform_and_single():
    assert nn.logsumexp(np.zeros(5)) == pytest.approx(np.log(5.0), abs=1e-12)
    assert nn.logsumexp(np.array([3.7])) == pytest.approx(3.7, abs=0)


def test_logsumexp_shift_identity_no_overflow():
    assert nn.logsumexp(np.array([1000.0, 1000.0])) == pytest.approx(1000.0 + np.log(2.0), abs=1e-12)
    assert np.isfinite(nn.logsumexp(np.array([1e300, -1e300])))


def test_logsumexp_empty_rejected():
    with pytest.raises(ValueError):
        nn.logsumexp(np.array([]))


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=12))
@settings(deadline=None, max_examples=80)
def test_logsumexp_bounds(values):
    v = np.array(values)
    out = nn.logsumexp(v)
    assert out >= v.max() - 1e-12
    assert out <= v.max() + np.log(len(values)) + 1e-12


def test_logsumexp_axis():
    m = np.array([[0.0, 0.0], [1.0, 2.0]])
    out = nn.logsumexp(m, axis=1)
    assert out == pytest.approx([np.log(2.0), 2.0 + np.log(1 + np.e**-1)], abs=1e-12)


# -- determinism & checkpoints ----------------------------------------------

def test_seeded_init_is_bit_identical():
    a = nn.init_mlp((4, 16, 5), np.random.default_rng(42))
    b = nn.init_mlp((4, 16, 5), np.random.default_rng(42))
    assert np.array_equal(a.params, b.params)


def test_training_trajectory_bit_identical():
    def run():
        rng = np.random.default_rng(9)
        net = nn.init_mlp((3, 8, 2), rng)
        state = nn.AdamState.fresh(net.params.size)
        for _ in range(20):
            x = rng.standard_normal((4, 3))
            _, cache = nn.forward_many_cached(net, x)
            g = nn.backward_many(net, cache, rng.standard_normal((4, 2)))
            nn.adam_step(net.params, g, state)
        return net.params

    assert np.array_equal(run(), run())


def test_checkpoint_roundtrip(tmp_path):
    net = nn.init_mlp((4, 8, 3), np.random.default_rng(3))
    path = tmp_path / "net.ckpt"
    nn.save_checkpoint(path, net)
    loaded = nn.load_checkpoint(path)
    assert loaded.layer_sizes == net.layer_sizes
    assert np.array_equal(loaded.params, net.params)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bogus.ckpt"
    path.write_bytes(b"definitely not a checkpoint")
    with pytest.raises(ConfigError):
        nn.load_checkpoint(path)
