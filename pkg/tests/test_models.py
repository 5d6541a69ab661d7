import numpy as np
import pytest

from suredip import diffcore as dc
from suredip import losses as L
from suredip import operators as O
from suredip.diffcore import DimensionError, Tensor
from suredip.models import (
    ArchConfig,
    Denoiser,
    UNet,
    Unrolled,
    build_network,
    denoiser_forward,
    expected_param_count,
    load_checkpoint,
    save_checkpoint,
    unet_forward,
    unrolled_forward,
)

from conftest import check_param_grads


def masked_op(rng, H=16, frac=0.35):
    return O.fourier_operator(rng.random((H, H)) < frac)


# -- denoiser ---


def test_denoiser_zero_params_is_identity(rng):
    net = Denoiser.build(ArchConfig(arch="denoiser")).zero_()
    x = rng.standard_normal((2, 8, 8))
    np.testing.assert_array_equal(net(x).data, x)


def test_denoiser_zero_input_zero_bias():
    net = Denoiser.build(ArchConfig(arch="denoiser", width=8), seed=3)
    assert not net(np.zeros((2, 8, 8))).data.any()


def test_denoiser_param_count_hand_count():
    # 2->32, 3 x (32->32), 32->2 with 3x3 kernels and biases
    hand = (32 * 2 * 9 + 32) + 3 * (32 * 32 * 9 + 32) + (2 * 32 * 9 + 2)
    assert hand == 28930
    net = build_network(ArchConfig(arch="denoiser"))
    assert net.param_count == hand == expected_param_count(net.cfg)
    assert len(net.params) == 10


def test_denoiser_shape_error():
    net = build_network(ArchConfig(arch="denoiser", width=4))
    with pytest.raises(DimensionError):
        net(np.zeros((3, 8, 8)))


def test_denoiser_forward_function_matches_call(rng):
    net = build_network(ArchConfig(arch="denoiser", width=4), seed=1)
    x = rng.standard_normal((2, 8, 8))
    np.testing.assert_array_equal(denoiser_forward(net, x).data, net(x).data)


def test_he_uniform_bounds():
    net = build_network(ArchConfig(arch="denoiser", width=16), seed=0)
    w0 = net.params[0].data
    assert np.abs(w0).max() <= np.sqrt(6 / (2 * 9))
    assert not net.params[1].data.any()


# -- UNET ---


def test_unet_shape_contract(rng):
    net = UNet.build(ArchConfig(arch="unet", unet_channels=(4, 8, 16)), seed=0)
    out = unet_forward(net, rng.standard_normal((2, 64, 64)))
    assert out.shape == (2, 64, 64)


def test_unet_zero_params_zero_output(rng):
    net = UNet.build(ArchConfig(arch="unet", unet_channels=(4, 8, 16))).zero_()
    assert not net(rng.standard_normal((2, 16, 16))).data.any()


def test_unet_deterministic_replay(rng):
    u = rng.standard_normal((2, 16, 16))
    a = UNet.build(ArchConfig(arch="unet", unet_channels=(4, 8, 16)), seed=5)(u).data
    b = UNet.build(ArchConfig(arch="unet", unet_channels=(4, 8, 16)), seed=5)(u).data
    assert a.tobytes() == b.tobytes()


def test_unet_requires_divisible_extents():
    net = UNet.build(ArchConfig(arch="unet", unet_channels=(2, 2, 2)))
    with pytest.raises(DimensionError):
        net(np.zeros((2, 18, 16)))


def test_unet_param_count():
    cfg = ArchConfig(arch="unet")
    assert build_network(cfg).param_count == expected_param_count(cfg)


# -- unrolled ---


def test_unrolled_identity_denoiser_full_mask_fixed_point(rng):
    op = O.fourier_operator(np.ones((8, 8)))
    net = Unrolled.build(ArchConfig(arch="unrolled", width=4), op).zero_()
    y = rng.standard_normal(op.measurement_shape)
    out = unrolled_forward(net, op, y)
    np.testing.assert_allclose(out.data, op.adjoint_array(y), atol=1e-12)


def test_unrolled_k1_matches_manual_composition(rng):
    op = masked_op(rng)
    net = Unrolled.build(ArchConfig(arch="unrolled", width=4, unrolls=1, lambda_dc=0.7), op, seed=2)
    y = rng.standard_normal(op.measurement_shape)
    u = op.adjoint_array(y)
    z = denoiser_forward(net, u).data
    # (AᴴA + λI)^{-1} = P/(1+λ) + (I-P)/λ for a projector
    rhs = u + 0.7 * z
    manual = op.normal_array(rhs) / 1.7 + (rhs - op.normal_array(rhs)) / 0.7
    np.testing.assert_allclose(unrolled_forward(net, op, y).data, manual, atol=1e-12)


def test_unrolled_consistency_fixed_point(rng):
    op = masked_op(rng)
    x = rng.standard_normal(op.image_shape)
    y = op.apply_array(x)
    net = Unrolled.build(ArchConfig(arch="unrolled", width=4, unrolls=3), op)

    # replace the denoiser by an oracle returning the truth: x is a fixed point of every step
    class Oracle(Unrolled):
        def forward(self, u, op=None, cg=None):
            lam = 1.0
            xk = u
            for _ in range(self.cfg.unrolls):
                xk = O.cg_solve(self.op, u + lam * Tensor(x), self.cg_config, lam=lam)
            return xk

    oracle = Oracle(net.cfg, net.params, op)
    np.testing.assert_allclose(oracle(op.adjoint_array(y)).data, x, atol=1e-9)


def test_unrolled_lambda_limits(rng):
    # one step gives P(u + λz)/(1+λ) + (I-P)z: data consistency wins as λ→0, the denoiser as λ→∞
    op = masked_op(rng)
    y = rng.standard_normal(op.measurement_shape)
    u = op.adjoint_array(y)
    for lam in (1e4, 1e-4):
        net = Unrolled.build(ArchConfig(arch="unrolled", width=4, unrolls=1, lambda_dc=lam), op, seed=1)
        z = denoiser_forward(net, u).data
        out = unrolled_forward(net, op, y).data
        null = z - op.normal_array(z)
        expected = z if lam > 1 else u + null
        scale = np.abs(u).max() + np.abs(z).max()
        np.testing.assert_allclose(out, expected, atol=3 * min(lam, 1 / lam) * scale)


@pytest.mark.parametrize("lam", [1e3, 1e-4])
def test_unrolled_step_matches_closed_form(rng, lam):
    op = masked_op(rng)
    y = rng.standard_normal(op.measurement_shape)
    u = op.adjoint_array(y)
    net = Unrolled.build(ArchConfig(arch="unrolled", width=4, unrolls=1, lambda_dc=lam), op, seed=1)
    z = denoiser_forward(net, u).data
    out = unrolled_forward(net, op, y).data
    pz = op.normal_array(z)
    np.testing.assert_allclose(out, (u + lam * pz) / (1 + lam) + z - pz, atol=1e-4)


def test_unrolled_weight_sharing_gradient_accumulation(rng):
    op = masked_op(rng, H=8)
    y = rng.standard_normal(op.measurement_shape)
    shared = Unrolled.build(ArchConfig(arch="unrolled", width=3, unrolls=3), op, seed=4)
    unshared = shared.unshared()
    np.testing.assert_allclose(unrolled_forward(unshared, op, y).data, unrolled_forward(shared, op, y).data, atol=1e-13)
    w = Tensor(rng.standard_normal(op.image_shape))
    gs = dc.backward(dc.dot(unrolled_forward(shared, op, y), w))
    gu = dc.backward(dc.dot(unrolled_forward(unshared, op, y), w))
    n = 2 * shared.cfg.depth
    for i, p in enumerate(shared.params[:n]):
        total = sum(gu.of(unshared.params[k * n + i]) for k in range(3))
        np.testing.assert_allclose(gs[p], total, rtol=1e-10, atol=1e-12)


def test_unrolled_param_count():
    op = O.fourier_operator(np.ones((8, 8)))
    cfg = ArchConfig(arch="unrolled")
    assert build_network(cfg, op).param_count == expected_param_count(cfg) == 28931


def test_build_unrolled_needs_operator():
    with pytest.raises(ValueError):
        build_network(ArchConfig(arch="unrolled"))


@pytest.mark.parametrize("arch", ["denoiser", "unet", "unrolled"])
@pytest.mark.parametrize("loss", ["dip", "gsure"])
def test_gradients_every_architecture_and_loss(rng, arch, loss):
    op = masked_op(rng, H=16)
    cfg = ArchConfig(arch=arch, width=4, unet_channels=(4, 4, 4), unrolls=2)
    net = build_network(cfg, op, seed=7)
    y = op.apply_array(rng.standard_normal(op.image_shape)) + 0.05 * rng.standard_normal(op.measurement_shape)
    u = op.adjoint_array(y)
    gcfg = L.GsureConfig(sigma=0.05, eps=1e-3, probe_seed=3)
    if loss == "dip":
        fn = lambda: L.dip_loss(net, op, u, y).total  # noqa: E731
    else:
        fn = lambda: L.gsure_loss(net, op, y, gcfg).total  # noqa: E731
    # 1e-5 lets the stencil straddle a ReLU kink in the unrolled chain (min |pre-activation| ~ 4e-6 here)
    assert check_param_grads(fn, net.params, sample=6, step=1e-6) < 1e-4


def test_checkpoint_roundtrip(tmp_path, rng):
    op = masked_op(rng, H=8)
    net = build_network(ArchConfig(arch="unrolled", width=3, unrolls=2), op, seed=3)
    sdt, meta = save_checkpoint(net, tmp_path / "ckpt")
    assert sdt.read_bytes()[:4] == b"SDT1"
    again = load_checkpoint(tmp_path / "ckpt", op)
    np.testing.assert_array_equal(again.flat(), net.flat())
    u = op.adjoint_array(rng.standard_normal(op.measurement_shape))
    np.testing.assert_array_equal(again(u).data, net(u).data)


def test_set_flat_size_check():
    net = build_network(ArchConfig(arch="denoiser", width=2))
    with pytest.raises(DimensionError):
        net.set_flat(np.zeros(3))
