import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import histogram_entropy
from ffsrm.esi import EsiParams, central_moment, esi_image, esi_reconstruct, trace_entropy
from ffsrm.metrics import gaussian_fit_fwhm, line_profile
from ffsrm.simulator import generate_two_point_sample, render_stack, simulate, simulate_blinking


def test_entropy_single_bin():
    assert trace_entropy(np.full(50, 3.0), 100, (0.0, 10.0)) == 0.0


def test_entropy_uniform_fill():
    x = (np.arange(100) + 0.5) / 100
    assert trace_entropy(x, 100, (0.0, 1.0)) == pytest.approx(np.log2(100), abs=1e-12)


def test_entropy_degenerate_range():
    assert trace_entropy(np.ones(10), 100) == 0.0


def test_entropy_matches_histogram_oracle():
    rng = np.random.default_rng(0)
    traces = rng.gamma(2.0, 3.0, size=(200, 80))
    lo, hi = traces.min(), traces.max()
    got = trace_entropy(traces, 100, (lo, hi))
    want = [histogram_entropy(t, 100, lo, hi) for t in traces]
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("n,expected", [(2, 0.25), (4, 0.0625), (3, 0.0)])
def test_two_value_moments(n, expected):
    assert central_moment(np.tile([0.0, 1.0], 50), n) == pytest.approx(expected, abs=1e-15)


def test_constant_moment():
    for n in (2, 3, 4, 6):
        assert central_moment(np.full(20, 4.0), n) == 0.0


def test_output_grid_and_partition():
    f = np.random.default_rng(1).uniform(1, 2, size=(100, 6, 7))
    r = esi_reconstruct(f, EsiParams(n_images=2))
    assert len(r.images) == 2
    assert r.images[0].shape == (11, 13) and r.images[0].upscale_factor == 2
    np.testing.assert_allclose(r.images[1].data, esi_image(f[50:], 4, 100))
    assert r.parameters["frames_per_image"] == 50
    assert np.all(r.image.data >= 0)


def test_in_between_uses_geometric_mean():
    f = np.random.default_rng(2).uniform(1, 2, size=(30, 2, 2))
    out = esi_image(f, 2, 10)
    lo, hi = f.min(), f.max()
    v = np.sqrt(f[:, 0, 0] * f[:, 0, 1])
    expected = trace_entropy(v, 10, (lo, hi)) * abs(central_moment(v, 2))
    assert out[0, 1] == pytest.approx(expected, rel=1e-12)
    v4 = (f[:, 0, 0] * f[:, 0, 1] * f[:, 1, 0] * f[:, 1, 1]) ** 0.25
    assert out[1, 1] == pytest.approx(trace_entropy(v4, 10, (lo, hi)) * abs(central_moment(v4, 2)),
                                      rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 20), st.sampled_from([2, 3, 4]))
def test_scale_covariance(seed, c, order):
    f = np.random.default_rng(seed).uniform(0, 5, size=(20, 3, 4))
    a = esi_image(f, order, 50)
    b = esi_image(c * f, order, 50)
    np.testing.assert_allclose(b, c**order * a, rtol=1e-9, atol=1e-12 * max(b.max(), 1e-300))


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    f = rng.uniform(0, 5, size=(40, 4, 4))
    np.testing.assert_allclose(esi_image(f[rng.permutation(40)]), esi_image(f), rtol=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        EsiParams(order=1)
    with pytest.raises(ValueError):
        EsiParams(bins=1)
    with pytest.raises(ValueError, match="frames"):
        esi_reconstruct(np.ones((3, 4, 4)), EsiParams(n_images=2))


def test_background_suppressed():
    """Offset-only regions fall to <= 1% of the emitter-region peak."""
    em = generate_two_point_sample(1.0, fov_px=(24, 24))
    em = em.subset([0])
    sim = simulate(em, 500, "high", 0, 11, 12)
    img = esi_reconstruct(sim.stack).image
    bg = img.data[:8, :8].mean()
    assert bg <= 0.01 * img.data.max()


def test_narrowing_blinking_emitter(psf):
    """Order-4 ESI spot narrower than PSF/sqrt(2) plus one subpixel.

    A blinking emitter is used: an always-on emitter has no temporal
    variance apart from shot noise, so its ESI spot only carries noise.
    """
    em = generate_two_point_sample(1.0, fov_px=(21, 21)).subset([0])
    on = simulate_blinking(em, 400, "medium", seed=3)
    clean = render_stack(em, on, psf)
    img = esi_reconstruct(clean).image
    wf = clean.frames.mean(axis=0)
    c = np.unravel_index(np.argmax(wf), wf.shape)
    wf_fit = gaussian_fit_fwhm(wf[c[0]], 80.0)
    r, col = np.unravel_index(np.argmax(img.data), img.shape)
    prof = line_profile(img, (0, r), (img.shape[1] - 1, r))
    esi_fit = gaussian_fit_fwhm(prof, img.pixel_size_nm)
    assert esi_fit.fwhm_nm <= wf_fit.fwhm_nm / np.sqrt(2) + img.pixel_size_nm
