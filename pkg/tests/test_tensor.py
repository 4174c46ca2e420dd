import numpy as np
import pytest

from signstream.autodiff import (
    Adam,
    Tensor,
    concat,
    conv_spatial,
    conv_temporal,
    cosine_lr,
    kl_divergence,
    log_softmax,
    pool_spatial_mean,
    relu,
    softmax,
    transposed_conv_spatial,
    transposed_conv_temporal,
)
from signstream.autodiff import checkpoint
from signstream.autodiff.gradcheck import check_tensor_gradients, relative_error
from signstream.autodiff.nn import BatchNorm
from signstream.errors import ConfigError, DimensionError


def rng(seed=0):
    return np.random.default_rng(seed)


# --------------------------------------------------------------------- matmul


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = Tensor(np.eye(2)) @ Tensor(a)
    np.testing.assert_allclose(out.data, a)


def test_matmul_hand_case():
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    np.testing.assert_allclose(out.data, [[3.0], [7.0]])


def test_matmul_gradient_vs_finite_differences():
    a = Tensor(rng(1).normal(size=(3, 4)), requires_grad=True, name="a")
    b = Tensor(rng(2).normal(size=(4, 2)), requires_grad=True, name="b")
    errs = check_tensor_gradients(lambda: (a @ b).sum(), [a, b])
    assert max(errs.values()) < 1e-6


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((4, 2)))


# ------------------------------------------------------------------- backward


def test_backward_sum_gives_ones():
    x = Tensor(rng(3).normal(size=(4, 5)), requires_grad=True)
    x.sum().backward()
    np.testing.assert_allclose(x.grad, np.ones((4, 5)))


def test_backward_square_at_three():
    x = Tensor([3.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(DimensionError):
        (x * 2.0).backward()


def test_backward_accumulates_until_reset():
    x = Tensor([2.0], requires_grad=True)
    (x * x).sum().backward()
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [8.0])
    x.zero_grad()
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [4.0])


def test_backward_diamond_graph_sums_contributions():
    # y = x*x, loss = sum(y + 3*y): d/dx = 8x
    x = Tensor([1.5, -2.0], requires_grad=True)
    y = x * x
    (y + y * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, 8.0 * x.data)


# ----------------------------------------------------------------- conv ops


def test_conv_spatial_identity_kernel():
    x = Tensor(rng(4).normal(size=(2, 5, 5, 3)))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0] = np.eye(3)
    out = conv_spatial(x, Tensor(w), stride=1, pad=0)
    np.testing.assert_allclose(out.data, x.data)


def test_conv_spatial_box_sum():
    x = Tensor(np.ones((1, 5, 5, 1)))
    out = conv_spatial(x, Tensor(np.ones((3, 3, 1, 1))), stride=1, pad=0)
    assert out.shape == (1, 3, 3, 1)
    np.testing.assert_allclose(out.data, 9.0)


def test_conv_spatial_gradient():
    x = Tensor(rng(5).normal(size=(2, 4, 4, 2)), requires_grad=True, name="x")
    w = Tensor(rng(6).normal(size=(3, 3, 2, 3)), requires_grad=True, name="w")
    errs = check_tensor_gradients(lambda: (conv_spatial(x, w, stride=2, pad=1) ** 2.0).sum(), [x, w])
    assert max(errs.values()) < 1e-6


def test_conv_spatial_nonpositive_extent():
    with pytest.raises(DimensionError):
        conv_spatial(Tensor(np.zeros((1, 2, 2, 1))), Tensor(np.zeros((3, 3, 1, 1))), stride=1, pad=0)


def test_conv_temporal_identity():
    x = Tensor(rng(7).normal(size=(6, 4)))
    w = np.zeros((1, 4, 4))
    w[0] = np.eye(4)
    np.testing.assert_allclose(conv_temporal(x, Tensor(w)).data, x.data)


def test_conv_temporal_length_arithmetic():
    x = Tensor(rng(8).normal(size=(8, 3)))
    w = Tensor(rng(9).normal(size=(3, 3, 5)))
    assert conv_temporal(x, w, stride=1, pad=1).shape == (8, 5)
    assert conv_temporal(x, w, stride=2, pad=1).shape == (4, 5)


def test_conv_temporal_gradient_on_volumes():
    x = Tensor(rng(10).normal(size=(5, 2, 2, 3)), requires_grad=True, name="x")
    w = Tensor(rng(11).normal(size=(3, 3, 2)), requires_grad=True, name="w")
    errs = check_tensor_gradients(lambda: (conv_temporal(x, w, stride=2, pad=1) ** 2.0).sum(), [x, w])
    assert max(errs.values()) < 1e-6


def test_transposed_temporal_identity():
    x = Tensor(rng(12).normal(size=(4, 3)))
    w = np.zeros((1, 3, 3))
    w[0] = np.eye(3)
    np.testing.assert_allclose(transposed_conv_temporal(x, Tensor(w), stride=1).data, x.data)


def test_transposed_temporal_doubles_length():
    x = Tensor(rng(13).normal(size=(4, 2)))
    w = Tensor(rng(14).normal(size=(2, 2, 5)))
    assert transposed_conv_temporal(x, w, stride=2).shape == (8, 5)


def test_strided_of_transposed_restores_extents():
    # The factor-2 resampling pair used by the lateral connections and SPN.
    x = Tensor(rng(15).normal(size=(3, 4, 4, 2)))
    up = transposed_conv_spatial(x, Tensor(rng(16).normal(size=(2, 2, 2, 3))), stride=2)
    assert up.shape == (3, 8, 8, 3)
    down = conv_spatial(up, Tensor(rng(17).normal(size=(2, 2, 3, 2))), stride=2, pad=0)
    assert down.shape[:3] == x.shape[:3]

    t = Tensor(rng(18).normal(size=(5, 2)))
    t_up = transposed_conv_temporal(t, Tensor(rng(19).normal(size=(2, 2, 4))), stride=2)
    assert t_up.shape == (10, 4)
    t_down = conv_temporal(t_up, Tensor(rng(20).normal(size=(2, 4, 2))), stride=2, pad=0)
    assert t_down.shape[0] == t.shape[0]


def test_transposed_gradients():
    x = Tensor(rng(21).normal(size=(3, 2, 2, 2)), requires_grad=True, name="x")
    w = Tensor(rng(22).normal(size=(2, 2, 2, 3)), requires_grad=True, name="w")
    errs = check_tensor_gradients(
        lambda: (transposed_conv_spatial(x, w, stride=2) ** 2.0).sum(), [x, w]
    )
    assert max(errs.values()) < 1e-6
    xt = Tensor(rng(23).normal(size=(4, 3)), requires_grad=True, name="xt")
    wt = Tensor(rng(24).normal(size=(2, 3, 2)), requires_grad=True, name="wt")
    errs = check_tensor_gradients(
        lambda: (transposed_conv_temporal(xt, wt, stride=2) ** 2.0).sum(), [xt, wt]
    )
    assert max(errs.values()) < 1e-6


# -------------------------------------------------------------------- pooling


def test_pool_spatial_mean_constant():
    x = Tensor(np.full((3, 2, 2, 4), 7.5))
    np.testing.assert_allclose(pool_spatial_mean(x).data, 7.5)


def test_pool_spatial_mean_hand_case():
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 2, 2, 1))
    np.testing.assert_allclose(pool_spatial_mean(x).data, [[2.5]])


def test_pool_spatial_mean_gradient_distributes():
    x = Tensor(rng(25).normal(size=(2, 3, 4, 2)), requires_grad=True)
    pool_spatial_mean(x).sum().backward()
    np.testing.assert_allclose(x.grad, 1.0 / 12.0)


# ----------------------------------------------------------------- batch norm


def test_batch_norm_standardized_input_unchanged():
    x = rng(26).normal(size=(200, 3))
    x = (x - x.mean(0)) / x.std(0)
    bn = BatchNorm(3, dtype=np.float64)
    out = bn(Tensor(x))
    np.testing.assert_allclose(out.data, x, atol=1e-4)


def test_batch_norm_constant_input_gives_beta():
    bn = BatchNorm(2, dtype=np.float64)
    bn.beta.data[:] = [1.0, -2.0]
    out = bn(Tensor(np.full((10, 2), 3.3)))
    np.testing.assert_allclose(out.data, np.broadcast_to([1.0, -2.0], (10, 2)), atol=1e-6)


def test_batch_norm_gradient():
    gen = rng(27)
    bn = BatchNorm(3, dtype=np.float64)
    bn.gamma.data[:] = gen.normal(size=3)
    bn.beta.data[:] = gen.normal(size=3)
    x = Tensor(gen.normal(size=(6, 3)), requires_grad=True, name="x")
    coeff = Tensor(gen.normal(size=(6, 3)))
    tensors = {"x": x, "gamma": bn.gamma, "beta": bn.beta}
    errs = check_tensor_gradients(
        lambda: (bn(x, update_stats=False) * coeff).sum(), tensors
    )
    assert max(errs.values()) < 1e-5


def test_batch_norm_eval_uses_running_stats():
    bn = BatchNorm(2, dtype=np.float64)
    for _ in range(50):
        bn(Tensor(rng(28).normal(loc=5.0, scale=2.0, size=(64, 2))))
    bn.eval()
    out = bn(Tensor(np.full((4, 2), 5.0)))
    assert np.all(np.abs(out.data) < 0.5)


# ------------------------------------------------------------------ softmaxes


def test_softmax_of_zeros_is_uniform():
    out = softmax(Tensor(np.zeros((2, 5))))
    np.testing.assert_allclose(out.data, 0.2)


def test_softmax_log_softmax_agree():
    x = Tensor(rng(29).normal(size=(4, 6)) * 10.0)
    np.testing.assert_allclose(np.exp(log_softmax(x).data), softmax(x).data, atol=1e-7)


def test_softmax_rows_sum_to_one():
    out = softmax(Tensor(rng(30).normal(size=(7, 3)) * 5.0))
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)


def test_softmax_gradients():
    x = Tensor(rng(31).normal(size=(3, 4)), requires_grad=True, name="x")
    coeff = rng(32).normal(size=(3, 4))
    errs = check_tensor_gradients(lambda: (softmax(x) * Tensor(coeff)).sum(), [x])
    assert max(errs.values()) < 1e-6
    errs = check_tensor_gradients(lambda: (log_softmax(x) * Tensor(coeff)).sum(), [x])
    assert max(errs.values()) < 1e-6


def test_kl_divergence_cases():
    p = np.array([[0.3, 0.7]])
    assert kl_divergence(p, Tensor(np.log(p))).item() == pytest.approx(0.0, abs=1e-12)
    val = kl_divergence(np.array([[1.0, 0.0]]), Tensor(np.log([[0.5, 0.5]]))).item()
    assert val == pytest.approx(np.log(2.0), abs=1e-9)


def test_kl_divergence_nonnegative_and_clamped():
    gen = rng(33)
    for _ in range(20):
        p = softmax(Tensor(gen.normal(size=(3, 4)))).data
        q = softmax(Tensor(gen.normal(size=(3, 4)))).data
        assert kl_divergence(p, Tensor(np.log(q))).item() >= 0.0
    # teacher mass on an impossible event gives a large finite value
    val = kl_divergence(np.array([[1.0, 0.0]]), Tensor(np.array([[-1e30, 0.0]]))).item()
    assert np.isfinite(val) and val > 1e3


def test_kl_divergence_gradient():
    gen = rng(34)
    p = softmax(Tensor(gen.normal(size=(2, 3)))).data
    lq = Tensor(gen.normal(size=(2, 3)), requires_grad=True, name="lq")
    errs = check_tensor_gradients(lambda: kl_divergence(p, log_softmax(lq)), [lq])
    assert max(errs.values()) < 1e-6


# -------------------------------------------------------- misc ops and concat


def test_concat_and_reshape_gradients():
    a = Tensor(rng(35).normal(size=(2, 3)), requires_grad=True, name="a")
    b = Tensor(rng(36).normal(size=(2, 2)), requires_grad=True, name="b")

    def loss():
        return (concat([a, b], axis=1).reshape(10) ** 2.0).sum()

    errs = check_tensor_gradients(loss, [a, b])
    assert max(errs.values()) < 1e-6


def test_relu_gradient_mask():
    x = Tensor(np.array([-1.0, 0.5, 2.0]), requires_grad=True)
    relu(x).sum().backward()
    np.testing.assert_allclose(x.grad, [0.0, 1.0, 1.0])


def test_randomized_op_sweep_finite_differences():
    gen = rng(37)
    for trial in range(5):
        x = Tensor(gen.normal(size=(3, 4)), requires_grad=True, name="x")
        w = Tensor(gen.normal(size=(4, 3)), requires_grad=True, name="w")

        def loss():
            h = relu(x @ w)
            return (softmax(h) * Tensor(np.ones((3, 3)) * 0.5)).sum() + (h.mean() ** 2.0)

        errs = check_tensor_gradients(loss, [x, w])
        assert max(errs.values()) < 1e-4


# ------------------------------------------------------------------ optimizer


def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True, name="p")
    opt = Adam({"p": p}, weight_decay=0.0)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_allclose(p.data, [1.0, -2.0])


def test_adam_first_step_direction():
    p = Tensor(np.array([0.5, -0.5]), requires_grad=True, name="p")
    opt = Adam([{"params": {"p": p}, "lr": 1e-2}], weight_decay=0.0)
    p.grad = np.array([0.3, -0.7])
    opt.step()
    np.testing.assert_allclose(p.data, [0.5 - 1e-2, -0.5 + 1e-2], atol=1e-6)


def test_adam_nan_gradient_aborts():
    p = Tensor(np.array([1.0]), requires_grad=True, name="p")
    opt = Adam({"p": p})
    p.grad = np.array([np.nan])
    with pytest.raises(FloatingPointError, match="p"):
        opt.step()


def test_adam_converges_on_quadratic():
    p = Tensor(np.array([1.0]), requires_grad=True, name="p")
    opt = Adam([{"params": {"p": p}, "lr": 1e-2}], weight_decay=0.0)
    for _ in range(500):
        opt.zero_grad()
        (p * p).sum().backward()
        opt.step()
    assert abs(p.data[0]) < 1e-3


def test_adam_decoupled_weight_decay():
    p = Tensor(np.array([2.0]), requires_grad=True, name="p")
    opt = Adam([{"params": {"p": p}, "lr": 0.1, "weight_decay": 0.5}])
    p.grad = np.array([0.0])
    opt.step()
    # zero gradient: only the decay term moves the parameter
    np.testing.assert_allclose(p.data, [2.0 * (1.0 - 0.1 * 0.5)])


# ------------------------------------------------------------------- schedule


def test_cosine_lr_endpoints():
    assert cosine_lr(0, 40, 1e-3) == pytest.approx(1e-3)
    assert cosine_lr(40, 40, 1e-3) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(20, 40, 1e-3) == pytest.approx(5e-4)


def test_cosine_lr_rejects_bad_total():
    with pytest.raises(ConfigError):
        cosine_lr(0, 0, 1e-3)


# ----------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip_bit_exact(tmp_path):
    gen = rng(38)
    arrays = {
        "a.w": gen.normal(size=(3, 4)).astype(np.float32),
        "b": gen.normal(size=(7,)).astype(np.float32),
        "scalar": np.float32(1.25).reshape(()),
    }
    prefix = str(tmp_path / "ckpt")
    checkpoint.save(prefix, arrays, meta={"epoch": 3})
    loaded, meta = checkpoint.load(prefix)
    assert meta["epoch"] == "3"
    for name, arr in arrays.items():
        assert loaded[name].dtype == np.float32
        assert loaded[name].tobytes() == np.asarray(arr, dtype="<f4").tobytes()


def test_checkpoint_save_is_deterministic(tmp_path):
    arrays = {"x": np.arange(6, dtype=np.float32).reshape(2, 3)}
    p1, p2 = str(tmp_path / "c1"), str(tmp_path / "c2")
    checkpoint.save(p1, arrays, meta={"k": "v"})
    checkpoint.save(p2, arrays, meta={"k": "v"})
    assert open(p1 + ".idx", "rb").read() == open(p2 + ".idx", "rb").read()
    assert open(p1 + ".bin", "rb").read() == open(p2 + ".bin", "rb").read()


def test_relative_error_helper():
    assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0
    assert relative_error(np.array([1.0]), np.array([2.0])) == pytest.approx(0.5)
