import numpy as np
import pytest

from oracles import direct_lag1_product, gaussian_spot
from ffsrm.metrics import gaussian_fit_fwhm
from ffsrm.probes import pair_probe
from ffsrm.sacd import (SacdParams, fourier_interpolate, lucy_richardson, mpac, sacd_kernel,
                       sacd_reconstruct)
from ffsrm.simulator import generate_two_point_sample, simulate
from ffsrm.sofi import temporal_cumulant


def test_interpolate_identity_and_constant():
    x = np.random.default_rng(0).uniform(size=(5, 6))
    np.testing.assert_array_equal(fourier_interpolate(x, 1), x)
    np.testing.assert_allclose(fourier_interpolate(np.full((4, 6), 2.5), 4), 2.5, rtol=1e-12)


def test_interpolate_band_limited_sinusoid():
    n, m = 16, 4
    x = np.arange(n)
    f = 2 + np.cos(2 * np.pi * 3 * x / n)
    img = np.tile(f, (n, 1))
    up = fourier_interpolate(img, m)
    xs = np.arange(n * m) / m
    np.testing.assert_allclose(up[0], 2 + np.cos(2 * np.pi * 3 * xs / n), atol=1e-12)
    np.testing.assert_allclose(up[::m, ::m], img, atol=1e-12)


def test_rl_delta_kernel_is_identity():
    k = np.zeros((3, 3))
    k[1, 1] = 1.0
    x = np.random.default_rng(1).uniform(size=(8, 8))
    np.testing.assert_allclose(lucy_richardson(x, k, 20), x, rtol=1e-12)


def test_rl_conserves_flux_and_narrows():
    k = gaussian_spot((15, 15), (7, 7), 2.0)
    k /= k.sum()
    from scipy.signal import fftconvolve

    truth = np.zeros((41, 41))
    truth[20, 20] = 100.0
    blurred = np.clip(fftconvolve(truth, k, mode="same"), 0, None)
    est = lucy_richardson(blurred, k, 30)
    assert est.sum() == pytest.approx(blurred.sum(), rel=1e-6)
    assert est.min() >= 0
    assert gaussian_fit_fwhm(est[20]).fwhm_nm < gaussian_fit_fwhm(blurred[20]).fwhm_nm


def test_rl_input_checks():
    with pytest.raises(ValueError, match="unit sum"):
        lucy_richardson(np.ones((4, 4)), np.ones((3, 3)))
    with pytest.raises(ValueError, match="non-negative"):
        lucy_richardson(-np.ones((4, 4)), np.full((1, 1), 1.0))


def test_mpac_single_plane_is_lag1_product():
    f = np.random.default_rng(2).uniform(size=(30, 5, 5))
    np.testing.assert_allclose(mpac(f, 2, planes=(1,)), np.abs(direct_lag1_product(f)),
                               rtol=1e-12)


def test_mpac_skips_short_planes():
    f = np.random.default_rng(3).uniform(size=(8, 3, 3))
    _, used = mpac(f, 3, planes=(1, 2, 4), return_planes=True)
    assert used == (1, 2)
    with pytest.raises(ValueError, match="at least 6"):
        mpac(f[:5], 3)


def test_reduces_to_sofi_without_deconvolution():
    f = np.random.default_rng(4).uniform(1, 5, size=(20, 6, 6))
    delta = np.ones((1, 1))
    r = sacd_reconstruct(f, delta, SacdParams(magnification=1, lr_iterations=0, planes=(1,)))
    np.testing.assert_allclose(r.image.data,
                               np.abs(temporal_cumulant(f, 2, "distinct_frames").data),
                               rtol=1e-12)


def test_sixteen_frames_suffice(psf):
    em = generate_two_point_sample(300.0, fov_px=(16, 16))
    sim = simulate(em, 16, "high", 0, 1, 2, psf=psf)
    r = sacd_reconstruct(sim.stack, psf, SacdParams(magnification=4))
    assert r.image.shape == (64, 64)
    assert np.all(r.image.data >= 0) and r.image.data.max() > 0
    assert r.parameters["mpac_planes"] == [1, 2, 4]
    assert r.image.origin_px == 0.0


def test_kernel_unit_sum(psf):
    k = sacd_kernel(psf, 10.0)
    assert k.sum() == pytest.approx(1.0)
    assert k.shape[0] % 2 == 1 and np.unravel_index(np.argmax(k), k.shape) == (k.shape[0] // 2,) * 2


def test_params_validation():
    with pytest.raises(ValueError):
        SacdParams(magnification=0)
    with pytest.raises(ValueError):
        SacdParams(mpac_order=1)
    with pytest.raises(ValueError):
        SacdParams(psf_power=0.5)
    with pytest.raises(ValueError):
        SacdParams(planes=(2, 4))
    assert SacdParams(mpac_order=3).effective_psf_power == 3.0


def test_resolves_pair_250nm(psf):
    em = generate_two_point_sample(250.0, fov_px=(20, 20))
    sim = simulate(em, 100, "high", 0, 1, 2, psf=psf)
    r = sacd_reconstruct(sim.stack, psf, SacdParams(magnification=4))
    probe = pair_probe(r.image, em)
    assert probe.resolved
