import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import born_wolf_focal_profile, gaussian_spot
from ffsrm.core import OpticalConfig
from ffsrm.metrics import gaussian_fit_fwhm
from ffsrm.optics import (GibsonLanniLayers, PsfGridSpec, QuadratureError, abbe_limits,
                          gibson_lanni_psf, lateral_slice, psf_power, psf_slice,
                          radial_psf_table)


def test_abbe_reference_values():
    lat, ax = abbe_limits(OpticalConfig(510, 1.42))
    assert lat == pytest.approx(179.58, abs=0.01)
    assert ax == pytest.approx(505.85, abs=0.01)
    assert (round(lat), round(ax)) == (180, 506)


def test_abbe_unit_na():
    assert abbe_limits(OpticalConfig(500, 1.0)) == pytest.approx((250.0, 1000.0))


def test_abbe_670():
    lat, ax = abbe_limits(OpticalConfig(670, 1.49))
    assert lat == pytest.approx(670 / 2.98, rel=1e-12)
    # direct evaluation: 2 * 670 / 1.49**2
    assert ax == pytest.approx(603.576, abs=1e-3)


@given(st.floats(300, 500), st.floats(0.1, 1.5))
def test_abbe_homogeneous(lam, na):
    a = abbe_limits(OpticalConfig(lam, na))
    b = abbe_limits(OpticalConfig(2 * lam, na))
    assert b[0] == 2 * a[0] and b[1] == 2 * a[1]


def test_psf_normalised_and_symmetric(psf):
    v = psf.values
    assert v.sum() == pytest.approx(1.0, abs=1e-3)
    assert np.unravel_index(np.argmax(v), v.shape) == psf.center
    np.testing.assert_allclose(v, v[:, :, ::-1], atol=1e-9 * v.max())
    np.testing.assert_allclose(v, v[:, ::-1, :], atol=1e-9 * v.max())
    np.testing.assert_allclose(v, np.swapaxes(v, 1, 2), atol=1e-9 * v.max())


def test_psf_axially_symmetric_when_matched(psf):
    np.testing.assert_allclose(psf.values, psf.values[::-1], atol=1e-12 * psf.values.max())


def test_psf_peak_monotone_near_focus(psf):
    peaks = psf.values.max(axis=(1, 2))
    c = psf.center[0]
    # 50 nm planes out to ~600 nm
    assert np.all(np.diff(peaks[c:c + 12]) < 0)


def test_psf_deterministic():
    a = gibson_lanni_psf(OpticalConfig(500, 1.35))
    b = gibson_lanni_psf(OpticalConfig(500, 1.35))
    assert np.array_equal(a.values, b.values)


def test_psf_focal_fwhm_against_dense_integral(psf):
    """In-focus FWHM within 15% of 0.51 lambda/NA, and close to a 1 nm quadrature oracle."""
    r = np.arange(0.0, 400.0, 1.0)
    prof = born_wolf_focal_profile(510, 1.42, 1.515, r)
    prof /= prof[0]
    oracle_fwhm = 2 * np.interp(0.5, prof[::-1], r[::-1])
    c = psf.center
    line = psf.values[c[0], c[1], :]
    fit = gaussian_fit_fwhm(line, psf.lateral_step_nm)
    assert abs(fit.fwhm_nm - 0.51 * 510 / 1.42) / (0.51 * 510 / 1.42) < 0.15
    # direct half-maximum width of the grid line
    x = (np.arange(line.size) - c[2]) * psf.lateral_step_nm
    half = line / line.max()
    right = x >= 0
    grid_fwhm = 2 * np.interp(0.5, half[right][::-1], x[right][::-1])
    assert grid_fwhm == pytest.approx(oracle_fwhm, rel=0.02)


def test_grid_too_coarse():
    with pytest.raises(ValueError, match="too coarse"):
        gibson_lanni_psf(OpticalConfig(), PsfGridSpec(lateral_step_nm=50.0))


def test_grid_extent_check():
    with pytest.raises(ValueError, match="lateral extent"):
        gibson_lanni_psf(OpticalConfig(), PsfGridSpec(lateral_extent_nm=300.0))
    with pytest.raises(ValueError, match="axial extent"):
        gibson_lanni_psf(OpticalConfig(), PsfGridSpec(axial_extent_nm=600.0))


def test_quadrature_failure_reported():
    with pytest.raises(QuadratureError) as err:
        radial_psf_table(OpticalConfig(), np.array([0.0, 5000.0]), np.array([0.0, 1e5]),
                         epsrel=1e-12, limit=2)
    assert err.value.residual > err.value.tolerance


def test_mismatched_indices_break_axial_symmetry():
    cfg = OpticalConfig(510, 1.3, sample_refractive_index=1.33)
    spec = PsfGridSpec(lateral_extent_nm=800.0, axial_extent_nm=1600.0, lateral_step_nm=40.0,
                       axial_step_nm=100.0)
    p = gibson_lanni_psf(cfg, spec, emitter_depth_nm=2000.0, layers=GibsonLanniLayers())
    assert p.values.sum() == pytest.approx(1.0)
    assert not np.allclose(p.values, p.values[::-1], rtol=1e-3)


def test_psf_power_identity_and_sum():
    k = gaussian_spot((21, 21), (10, 10), 3.0)
    k /= k.sum()
    np.testing.assert_allclose(psf_power(k, 1), k, rtol=1e-15)
    for p in (1.5, 2, 3.7):
        assert psf_power(k, p).sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        psf_power(k, 0.5)


def test_psf_power_two_narrows_gaussian():
    sigma = 3.0
    k = gaussian_spot((41, 41), (20, 20), sigma)
    sq = psf_power(k, 2)
    fit = gaussian_fit_fwhm(sq[20], 1.0)
    assert fit.sigma == pytest.approx(sigma / np.sqrt(2), rel=1e-6)


def test_psf_power_on_psf3d(psf):
    p2 = psf_power(psf, 2)
    assert p2.values.sum() == pytest.approx(1.0)
    assert p2.metadata["power"] == 2


def test_slices(psf):
    s0 = psf_slice(psf, 0.0)
    np.testing.assert_allclose(lateral_slice(psf, 0.0), psf.values[psf.center[0]])
    np.testing.assert_allclose(psf_slice(psf, 400.0), psf_slice(psf, -400.0), rtol=1e-12)
    assert psf_slice(psf, 400.0).max() < s0.max()
    assert np.all(s0 >= 0)
    with pytest.raises(ValueError):
        psf_slice(psf, 5000.0)


def test_slice_mass_sums_to_one(psf):
    zs = psf.z_nm
    sums = [psf_slice(psf, z).sum() for z in zs]
    assert max(sums) <= 1.0
    # pixel-resampled slice sums track the plane masses; all planes together ~1
    assert sum(sums) == pytest.approx(1.0, rel=0.02)
