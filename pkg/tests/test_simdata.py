import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suredip import operators as O
from suredip import simdata as S
from suredip.diffcore import DimensionError


def ellipse_sum_at(x, y):
    """Direct evaluation of the modified Shepp-Logan ellipse sum at one point."""
    total = 0.0
    for rho, a, b, x0, y0, deg in S.SHEPP_LOGAN_ELLIPSES:
        c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
        u = ((x - x0) * c + (y - y0) * s) / a
        v = (-(x - x0) * s + (y - y0) * c) / b
        if u * u + v * v <= 1:
            total += rho
    return total


def test_zero_phase_has_zero_imaginary():
    ph = S.make_phantom("shepp_logan", 32, 32, 0.0)
    assert not ph.image[1].any()


@pytest.mark.parametrize("name,amp", [("shepp_logan", 0.0), ("shepp_logan", 0.7), ("blobs", 0.3)])
def test_phantom_range(name, amp):
    ph = S.make_phantom(name, 32, 48, amp)
    assert ph.image.shape == (2, 32, 48)
    assert np.abs(ph.image).max() <= 1.0
    assert ph.peak == pytest.approx(np.abs(ph.image).max())


def test_shepp_logan_central_pixel():
    ph = S.make_phantom("shepp_logan", 64, 64)
    i = j = 32
    x = -1 + (2 * j + 1) / 64
    y = 1 - (2 * i + 1) / 64
    peak = max(ellipse_sum_at(-1 + (2 * c + 1) / 64, 1 - (2 * r + 1) / 64) for r in range(64) for c in range(64))
    assert ph.image[0, i, j] == pytest.approx(ellipse_sum_at(x, y) / peak, abs=1e-12)


def test_phantom_errors():
    with pytest.raises(ValueError):
        S.make_phantom("cat", 32, 32)
    with pytest.raises(ValueError):
        S.make_phantom("shepp_logan", 8, 32)


def test_phantom_reproducible():
    a = S.make_phantom("blobs", 32, 32, 0.5).image
    b = S.make_phantom("blobs", 32, 32, 0.5).image
    assert a.tobytes() == b.tobytes()


# -- masks ---


@pytest.mark.parametrize("kind", ["vd2d", "cartesian1d", "full"])
def test_acceleration_one_is_full(kind):
    assert S.make_mask(S.MaskSpec(kind, 1.0, 0, 3), 16, 16).all()


@pytest.mark.parametrize("kind", ["vd2d", "cartesian1d"])
def test_four_x_count(kind):
    m = S.make_mask(S.MaskSpec(kind, 4.0, 8, 0), 64, 64)
    assert 1003 <= m.sum() <= 1045
    assert set(np.unique(m)) <= {0.0, 1.0}


def test_fraction_invariant_over_seeds():
    for seed in range(100):
        for kind in ("vd2d", "cartesian1d"):
            m = S.make_mask(S.MaskSpec(kind, 4.0, 8, seed), 64, 64)
            assert abs(m.mean() - 0.25) <= 0.02


def test_cartesian_lines_are_whole_columns():
    m = S.make_mask(S.MaskSpec("cartesian1d", 4.0, 8, 5), 64, 64)
    assert (m == m[0:1, :]).all()


def test_calibration_region_sampled():
    m = S.make_mask(S.MaskSpec("vd2d", 4.0, 8, 2), 64, 64)
    assert m[28:36, 28:36].all()
    m1 = S.make_mask(S.MaskSpec("cartesian1d", 4.0, 8, 2), 64, 64)
    assert m1[:, 28:36].all()


def test_vd2d_is_denser_near_center():
    m = S.make_mask(S.MaskSpec("vd2d", 4.0, 8, 1), 64, 64)
    r = np.hypot(*np.meshgrid(np.arange(64) - 32, np.arange(64) - 32))
    assert m[(r > 6) & (r < 16)].mean() > m[r > 24].mean()


def test_mask_deterministic_and_seed_dependent():
    a = S.make_mask(S.MaskSpec("vd2d", 4.0, 8, 7), 32, 32)
    b = S.make_mask(S.MaskSpec("vd2d", 4.0, 8, 7), 32, 32)
    c = S.make_mask(S.MaskSpec("vd2d", 4.0, 8, 8), 32, 32)
    assert (a == b).all() and (a != c).any()


def test_infeasible_calibration():
    with pytest.raises(ValueError):
        S.make_mask(S.MaskSpec("vd2d", 8.0, 16, 0), 32, 32)
    with pytest.raises(ValueError):
        S.make_mask(S.MaskSpec("cartesian1d", 8.0, 8, 0), 32, 32)
    with pytest.raises(ValueError):
        S.MaskSpec("vd2d", 0.5)


@settings(deadline=None, max_examples=30, derandomize=True)
@given(st.sampled_from(["vd2d", "cartesian1d"]), st.floats(2.0, 6.0), st.integers(0, 10**6))
def test_mask_fraction_property(kind, acc, seed):
    m = S.make_mask(S.MaskSpec(kind, acc, 4, seed), 32, 32)
    assert abs(m.mean() - 1 / acc) <= 0.02


# -- measurement & PSNR ---


def test_measure_noiseless_is_apply():
    ph = S.make_phantom("shepp_logan", 32, 32)
    op = O.fourier_operator(S.make_mask(S.MaskSpec("vd2d", 4, 4, 0), 32, 32))
    np.testing.assert_array_equal(S.measure(ph, op, 0.0, 1), op.apply_array(ph.image))


def test_measure_noise_statistics():
    ph = S.make_phantom("shepp_logan", 64, 64)
    op = O.fourier_operator(np.ones((64, 64)))
    n = S.measure(ph, op, 0.01, 3) - op.apply_array(ph.image)
    for comp in n:
        assert 0.0095 <= comp.std() <= 0.0105


def test_measure_seed_determinism():
    ph = S.make_phantom("blobs", 32, 32)
    op = O.fourier_operator(S.make_mask(S.MaskSpec("vd2d", 4, 4, 0), 32, 32))
    assert S.measure(ph, op, 0.01, 9).tobytes() == S.measure(ph, op, 0.01, 9).tobytes()


def test_psnr_cap_and_closed_form():
    ph = S.make_phantom("shepp_logan", 32, 32)
    assert S.psnr(ph.image, ph) == S.PSNR_CAP_DB
    assert S.psnr(ph.image + 0.1, ph) == pytest.approx(20.0, abs=1e-10)


def test_psnr_recomputation(rng):
    ph = S.make_phantom("blobs", 32, 32, 0.4)
    est = ph.image + 0.05 * rng.standard_normal(ph.image.shape)
    ref = 10 * np.log10(ph.peak**2 / np.mean((est - ph.image) ** 2))
    assert S.psnr(est, ph) == pytest.approx(ref, abs=1e-10)
    with pytest.raises(DimensionError):
        S.psnr(est[:, :16], ph)


def test_pgm_roundtrip(tmp_path):
    ph = S.make_phantom("shepp_logan", 32, 32)
    S.write_pgm(tmp_path / "x.pgm", ph.image)
    pix = S.read_pgm(tmp_path / "x.pgm")
    assert pix.shape == (32, 32) and pix.max() == 255 and pix.min() == 0
    assert (tmp_path / "x.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")
