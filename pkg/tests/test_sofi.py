import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import lagged_cumulant, moment_cumulant
from ffsrm.core import ImageStack
from ffsrm.metrics import gaussian_fit_fwhm
from ffsrm.simulator import apply_camera_noise, generate_two_point_sample, render_stack, \
    simulate_blinking
from ffsrm.sofi import (SofiParams, bsofi_balance, cumulant, cumulant_terms, sofi_reconstruct,
                        temporal_cumulant)


def test_order1_is_mean_order2_is_variance():
    f = np.random.default_rng(0).gamma(3.0, 2.0, size=(64, 9, 11))
    m = temporal_cumulant(f, 1, "zero_lag").data
    v = temporal_cumulant(f, 2, "zero_lag").data
    np.testing.assert_allclose(m, f.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(v, f.var(axis=0), rtol=1e-12)


def test_two_value_trace():
    x = np.tile([0.0, 1.0], 50)
    assert cumulant(x, 2, "zero_lag") == pytest.approx(0.25, abs=1e-15)
    assert cumulant(x, 3, "zero_lag") == pytest.approx(0.0, abs=1e-15)
    assert cumulant(x, 4, "zero_lag") == pytest.approx(-0.125, abs=1e-15)


@pytest.mark.parametrize("mode", ["zero_lag", "distinct_frames"])
def test_constant_trace(mode):
    for n in (2, 3, 4):
        assert cumulant(np.full(30, 5.5), n, mode) == 0.0


def test_kernel_matches_moment_oracle():
    """1000 random length-50 traces, orders 2-4, zero lag, against raw-moment formulas."""
    traces = np.random.default_rng(1).normal(3.0, 1.5, size=(1000, 50))
    for n in (2, 3, 4):
        got = cumulant(traces.T, n, "zero_lag")
        want = np.array([moment_cumulant(t, n) for t in traces])
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-10 * np.abs(want).max())


def test_lagged_kernel_matches_loop_oracle():
    traces = np.random.default_rng(2).exponential(2.0, size=(200, 50))
    for n in (2, 3, 4, 5):
        got = cumulant(traces.T, n, "distinct_frames")
        want = np.array([lagged_cumulant(t, n) for t in traces])
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


def test_partition_counts():
    # partitions without singletons: 1, 1, 4, 11, 41 for n = 2..6
    assert [len(cumulant_terms(n)) for n in range(2, 7)] == [1, 1, 4, 11, 41]


def test_additivity_over_independent_traces():
    rng = np.random.default_rng(3)
    x = (rng.uniform(size=(20000, 200)) < 0.3).astype(float)
    y = 2.0 * (rng.uniform(size=(20000, 200)) < 0.6)
    for n in (2, 3, 4):
        kx, ky, kxy = (cumulant(a.T, n, "zero_lag") for a in (x, y, x + y))
        diff = kxy - kx - ky
        # plug-in order-4 estimates carry a -12 var(x) var(y) / T cross term
        bias = -12 * 0.21 * 0.96 / 200 if n == 4 else 0.0
        assert abs(diff.mean() - bias) < 3 * diff.std(ddof=1) / np.sqrt(diff.size)


def test_shot_noise_rejection():
    clean = np.zeros((400, 30, 30))
    clean[0, 0, 0] = 1e-9
    noisy = apply_camera_noise(ImageStack(clean), seed=4)
    d = temporal_cumulant(noisy, 2, "distinct_frames").data.ravel()[1:]
    assert abs(d.mean()) <= 3 * d.std(ddof=1) / np.sqrt(d.size)
    z = temporal_cumulant(noisy, 2, "zero_lag").data.ravel()[1:]
    assert z.mean() == pytest.approx(50, rel=0.02)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (12, 2, 3), elements=st.floats(0, 100)), st.sampled_from([2, 3, 4]))
def test_reversal_symmetry(f, n):
    for mode in ("zero_lag", "distinct_frames"):
        a = cumulant(f, n, mode)
        b = cumulant(f[::-1], n, mode)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(f).max() ** n))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 50))
def test_balanced_scaling(seed, c):
    f = np.random.default_rng(seed).uniform(0, 3, size=(20, 3, 3))
    a = bsofi_balance(f, 4).data
    b = bsofi_balance(c * f, 4).data
    np.testing.assert_allclose(b, c * a, rtol=1e-9, atol=1e-12)


def test_balanced_zero_region():
    f = np.random.default_rng(5).uniform(size=(20, 4, 4))
    f[:, :2, :2] = 1.0
    b = bsofi_balance(f, 3).data
    assert np.all(b[:2, :2] == 0) and np.all(b >= 0)


def test_balanced_narrower_than_mean(psf):
    em = generate_two_point_sample(1.0, fov_px=(21, 21)).subset([0])
    clean = render_stack(em, simulate_blinking(em, 500, "high", seed=2), psf)
    noisy = apply_camera_noise(clean, seed=3)
    mean = noisy.frames.mean(axis=0)
    b = bsofi_balance(noisy, 4).data
    r = np.unravel_index(np.argmax(mean), mean.shape)[0]
    assert gaussian_fit_fwhm(b[r], 80.0).fwhm_nm < gaussian_fit_fwhm(mean[r], 80.0).fwhm_nm


def test_params_and_lengths():
    with pytest.raises(ValueError):
        SofiParams(order=5)
    with pytest.raises(ValueError):
        SofiParams(lag_mode="fancy")
    with pytest.raises(ValueError, match="T >= 5"):
        temporal_cumulant(np.ones((4, 2, 2)), 3)
    r = sofi_reconstruct(np.random.default_rng(0).uniform(size=(10, 3, 3)), SofiParams(3))
    assert r.method == "sofi" and r.parameters["lag_mode"] == "distinct_frames"
    assert sofi_reconstruct(np.ones((10, 3, 3)), SofiParams(2, balanced=True)).method == "bsofi"
