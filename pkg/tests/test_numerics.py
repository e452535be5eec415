import numpy as np
import pytest

from zerodiffusion import (
    AdamState,
    NumericalError,
    Rng,
    adam_step,
    affine_backward,
    affine_forward,
    clip_global_norm,
    dropout,
    finite_diff_check,
    gaussian_sample,
    leaky_relu,
    tanh_act,
)
from zerodiffusion.errors import DimensionError
from zerodiffusion.numerics import global_norm, init_affine


def test_affine_forward_identity():
    out = affine_forward(np.array([[1.0, 2.0]]), np.eye(2), np.zeros(2))
    assert np.array_equal(out, [[1.0, 2.0]])


def test_affine_forward_hand_case():
    out = affine_forward(
        np.array([[1.0, 1.0]]),
        np.array([[2.0, 0.0], [0.0, 3.0]]),
        np.array([1.0, -1.0]),
    )
    assert np.array_equal(out, [[3.0, 2.0]])


def test_affine_forward_matches_triple_loop():
    rng = Rng(17).stream("matmul")
    x = rng.normal(size=(4, 8))
    w = rng.normal(size=(8, 3))
    b = rng.normal(size=3)
    naive = np.zeros((4, 3))
    for i in range(4):
        for j in range(3):
            acc = b[j]
            for k in range(8):
                acc += x[i, k] * w[k, j]
            naive[i, j] = acc
    # BLAS reassociates the inner sum, so agreement is to rounding error.
    assert np.allclose(affine_forward(x, w, b), naive, rtol=1e-13, atol=0)


def test_affine_forward_shape_mismatch():
    with pytest.raises(DimensionError):
        affine_forward(np.ones((2, 3)), np.ones((4, 2)), np.zeros(2))
    with pytest.raises(DimensionError):
        affine_forward(np.ones((2, 3)), np.ones((3, 2)), np.zeros(5))


def test_affine_backward_scalar_chain():
    grad_x, grad_w, grad_b = affine_backward(
        np.array([[2.0]]), np.array([[3.0]]), np.array([[1.0]])
    )
    assert grad_w[0, 0] == 2.0
    assert grad_x[0, 0] == 3.0
    assert grad_b[0] == 1.0


def test_affine_backward_zero_upstream():
    grad_x, grad_w, grad_b = affine_backward(
        np.ones((3, 4)), np.ones((4, 2)), np.zeros((3, 2))
    )
    assert not grad_x.any() and not grad_w.any() and not grad_b.any()


def test_affine_backward_matches_finite_differences():
    rng = Rng(21)
    x = rng.stream("x").normal(size=(5, 4))
    coeff = rng.stream("coeff").normal(size=(5, 3))

    def loss(params):
        out = affine_forward(x, params["w"], params["b"])
        _, grad_w, grad_b = affine_backward(x, params["w"], coeff)
        return float((out * coeff).sum()), {"w": grad_w, "b": grad_b}

    params = {
        "w": rng.stream("w").normal(size=(4, 3)),
        "b": rng.stream("b").normal(size=3),
    }
    assert finite_diff_check(loss, params) < 1e-6


def test_leaky_relu_values():
    out, deriv = leaky_relu(np.array([5.0, -2.0, 0.0]), slope=0.01)
    assert np.array_equal(out, [5.0, -0.02, 0.0])
    assert np.array_equal(deriv, [1.0, 0.01, 0.01])  # slope branch at exactly 0


def test_leaky_relu_slope_domain():
    with pytest.raises(ValueError):
        leaky_relu(np.zeros(2), slope=0.0)
    with pytest.raises(ValueError):
        leaky_relu(np.zeros(2), slope=1.0)


def test_tanh_act_origin_and_saturation():
    out, deriv = tanh_act(np.array([0.0, 50.0]))
    assert out[0] == 0.0 and deriv[0] == 1.0
    assert abs(out[1] - 1.0) < 1e-12


def test_tanh_act_bounds():
    # Float64 tanh saturates to exactly +-1 past |x| ~ 19, so the closed
    # interval is the invariant; moderate inputs stay strictly inside.
    big, _ = tanh_act(Rng(2).stream("t").normal(size=(20, 20)) * 100)
    assert np.all(np.abs(big) <= 1.0)
    small, _ = tanh_act(Rng(2).stream("t").normal(size=(20, 20)) * 5)
    assert np.all(np.abs(small) < 1.0)


def test_tanh_act_derivative_matches_finite_differences():
    def loss(params):
        out, deriv = tanh_act(params["x"])
        return float(out.sum()), {"x": deriv}

    assert finite_diff_check(loss, {"x": Rng(4).stream("x").normal(size=(4, 4))}) < 1e-6


def test_dropout_inference_is_identity():
    x = Rng(6).stream("x").normal(size=(5, 5))
    out, mask = dropout(x, 0.5, Rng(6).stream("d"), training=False)
    assert np.array_equal(out, x)
    assert out is not x  # callers may mutate the output
    assert mask.all()


def test_dropout_rate_zero_identity():
    x = np.ones((3, 3))
    out, mask = dropout(x, 0.0, Rng(6).stream("d"), training=True)
    assert np.array_equal(out, x) and mask.all()


def test_dropout_law_of_large_numbers():
    x = Rng(3).stream("x").uniform(0.5, 1.5, size=(100, 100))
    out, mask = dropout(x, 0.3, Rng(3).stream("drop"), training=True)
    assert abs(mask.mean() - 0.7) < 0.02
    assert abs(out.mean() - x.mean()) / x.mean() < 0.03


def test_dropout_survivor_scaling():
    x = Rng(9).stream("x").normal(size=(40, 40))
    out, mask = dropout(x, 0.3, Rng(9).stream("d"), training=True)
    kept = mask == 1.0
    assert np.array_equal(out[kept], x[kept] / 0.7)
    assert not out[~kept].any()


def test_adam_zero_gradient_is_fixed_point():
    params = {"p": np.array([1.0, -2.0])}
    state = AdamState.for_params(params, lr=0.1)
    adam_step(params, {"p": np.zeros(2)}, state)
    assert np.array_equal(params["p"], [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step_magnitude():
    # Bias-corrected moments make the first step ~= lr * sign(g).
    params = {"p": np.array([1.0])}
    state = AdamState.for_params(params, lr=0.1)
    adam_step(params, {"p": np.array([1.0])}, state)
    assert abs(params["p"][0] - 0.9) < 1e-6


def test_adam_weight_decay_applied_before_delta():
    params = {"p": np.array([1.0])}
    state = AdamState.for_params(params, lr=0.1, weight_decay=0.5)
    adam_step(params, {"p": np.zeros(1)}, state)
    assert params["p"][0] == 1.0 - 0.1 * 0.5


def test_adam_ten_steps_deterministic():
    grads = [Rng(13).stream("g", i).normal(size=(3, 2)) for i in range(10)]

    def run():
        params = {"p": np.ones((3, 2))}
        state = AdamState.for_params(params, lr=0.01, weight_decay=1e-4)
        for g in grads:
            adam_step(params, {"p": g}, state)
        return params["p"]

    assert np.array_equal(run(), run())


def test_adam_rejects_nonfinite_gradient():
    params = {"w": np.ones(2)}
    state = AdamState.for_params(params, lr=0.1)
    with pytest.raises(NumericalError, match="'w'"):
        adam_step(params, {"w": np.array([1.0, np.nan])}, state)


def test_adam_shape_and_key_errors():
    params = {"w": np.ones(2)}
    state = AdamState.for_params(params, lr=0.1)
    with pytest.raises(DimensionError):
        adam_step(params, {"w": np.ones(3)}, state)
    with pytest.raises(KeyError):
        adam_step(params, {}, AdamState.for_params(params, lr=0.1))


def test_clip_under_threshold_unchanged():
    grads = {"g": np.array([3.0, 4.0])}
    clipped, norm = clip_global_norm(grads, 10.0)
    assert norm == 5.0
    assert np.array_equal(clipped["g"], [3.0, 4.0])


def test_clip_scales_to_max_norm():
    grads = {"g": np.array([3.0, 4.0])}
    clipped, norm = clip_global_norm(grads, 1.0)
    assert norm == 5.0
    assert np.allclose(clipped["g"], [0.6, 0.8])


def test_clip_zero_gradients_safe():
    grads = {"g": np.zeros(4)}
    clipped, norm = clip_global_norm(grads, 1.0)
    assert norm == 0.0 and not clipped["g"].any()


def test_clip_spans_blocks_and_preserves_direction():
    before = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert global_norm(before) == 5.0
    original = {k: v.copy() for k, v in before.items()}
    clipped, _ = clip_global_norm(before, 2.0)
    assert abs(global_norm(clipped) - 2.0) < 1e-12
    flat_pre = np.concatenate([original["a"], original["b"]])
    flat_post = np.concatenate([clipped["a"], clipped["b"]])
    cosine = flat_pre @ flat_post / (np.linalg.norm(flat_pre) * np.linalg.norm(flat_post))
    assert abs(cosine - 1.0) < 1e-12


def test_finite_diff_quadratic():
    def loss(params):
        p = params["p"]
        return 0.5 * float((p * p).sum()), {"p": p.copy()}

    assert finite_diff_check(loss, {"p": Rng(5).stream("q").normal(size=(3, 3))}) < 1e-9


def test_finite_diff_detects_wrong_gradient():
    def loss(params):
        p = params["p"]
        return 0.5 * float((p * p).sum()), {"p": 1.1 * p}

    err = finite_diff_check(loss, {"p": Rng(5).stream("q").normal(size=(3, 3))})
    assert 0.05 < err < 0.15


def test_finite_diff_rejects_nondeterministic_loss():
    shared = Rng(1).stream("noise")

    def loss(params):
        p = params["p"]
        return float((p * p).sum()) + float(shared.normal()), {"p": 2 * p}

    with pytest.raises(NumericalError):
        finite_diff_check(loss, {"p": np.ones((2, 2))})


def test_gaussian_sample_degenerate_std():
    out = gaussian_sample(Rng(1).stream("g"), (4, 4), mean=2.5, std=0.0)
    assert np.array_equal(out, np.full((4, 4), 2.5))


def test_gaussian_sample_moments():
    out = gaussian_sample(Rng(42).stream("moments"), 100_000, 0.0, 0.3162)
    assert abs(out.mean()) < 0.005
    assert abs(out.std() - 0.3162) < 0.01


def test_gaussian_sample_deterministic():
    a = gaussian_sample(Rng(7).stream("g"), (3, 3))
    b = gaussian_sample(Rng(7).stream("g"), (3, 3))
    assert np.array_equal(a, b)


def test_gaussian_sample_rejects_negative_std():
    with pytest.raises(ValueError):
        gaussian_sample(Rng(7).stream("g"), 4, std=-1.0)


def test_rng_streams_are_purpose_isolated():
    """Creating an extra stream must not perturb an existing one."""
    plain = Rng(7).stream("x").normal(size=5)
    other = Rng(7)
    other.stream("y").normal(size=100)  # unrelated consumer
    assert np.array_equal(other.stream("x").normal(size=5), plain)
    assert not np.array_equal(Rng(7).stream("y").normal(size=5), plain)
    assert not np.array_equal(Rng(8).stream("x").normal(size=5), plain)


def test_rng_multi_part_purposes():
    a = Rng(3).stream("gen", 0).normal(size=4)
    b = Rng(3).stream("gen", 1).normal(size=4)
    assert not np.array_equal(a, b)
    assert np.array_equal(Rng(3).stream("gen", 0).normal(size=4), a)


def test_init_affine_bounds_and_shapes():
    w, b = init_affine(Rng(11).stream("init"), fan_in=16, fan_out=9)
    bound = 1.0 / np.sqrt(16)
    assert w.shape == (16, 9) and b.shape == (9,)
    assert np.all(np.abs(w) <= bound) and np.all(np.abs(b) <= bound)
    with pytest.raises(ValueError):
        init_affine(Rng(11).stream("init"), 0, 3)
