import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp

from rpsfcam import (
    CameraConfig,
    ComplexField,
    ConfigurationError,
    DefocusSpec,
    DegenerateInputError,
    DomainError,
    SamplingError,
    circular_aperture,
    defocus_from_distance,
    fresnel_propagate,
    lens_phase,
    psf_from_pupil,
    pupil_function,
)
from rpsfcam.wiener import convolve_circular

mp.dps = 50


def test_thin_lens_consistency(cam):
    lhs = 1.0 / cam.focus_distance + 1.0 / cam.sensor_distance
    assert abs(lhs - 1.0 / cam.focal_length) < 1e-12 / cam.focal_length


def test_defocus_zero_at_focus(cam):
    assert defocus_from_distance(cam, cam.focus_distance, 536.67e-9).psi == pytest.approx(0.0, abs=1e-10)


def test_defocus_at_infinity(cam):
    lam = 536.67e-9
    r = cam.pupil_radius
    expected = (np.pi * r * r / lam) * (1.0 / cam.sensor_distance - 1.0 / cam.focal_length)
    assert defocus_from_distance(cam, np.inf, lam).psi == pytest.approx(expected, rel=1e-12)


def test_defocus_extended_precision_oracle(cam):
    # 50-digit evaluation of the same formula, z_o = 2.5 m
    lam = 536.67e-9
    got = defocus_from_distance(cam, 2.5, lam).psi
    f = mp.mpf("16e-3")
    z_i = 1 / (1 / f - 1 / mp.mpf(5))
    r = mp.mpf("2e-3")
    want = mp.pi * r * r / mp.mpf("536.67e-9") * (1 / mp.mpf("2.5") + 1 / z_i - 1 / f)
    assert abs(got - float(want)) < 1e-10 * abs(float(want))


def test_defocus_rejects_bad_distance(cam):
    with pytest.raises(DomainError):
        defocus_from_distance(cam, 0.0, 536.67e-9)
    with pytest.raises(DomainError):
        defocus_from_distance(cam, -1.0, 536.67e-9)


def test_defocus_sign_convention(cam):
    # objects nearer than the focus plane defocus positively
    assert defocus_from_distance(cam, 2.5, 536.67e-9).psi > 0
    assert defocus_from_distance(cam, 10.0, 536.67e-9).psi < 0


def test_lens_phase_center_is_maximum(cam):
    grid = lens_phase(cam, (256, 256), 2.5e-5, 536.67e-9)
    assert grid[128, 128] == grid.max()


def test_lens_phase_quadratic_difference(cam):
    # phase(center) - phase(r) = pi r^2 / (lambda f), the (n-1) factors cancel
    lam, pitch = 536.67e-9, 2.5e-5
    grid = lens_phase(cam, (256, 256), pitch, lam)
    m = 80  # r = 2 mm
    r = m * pitch
    got = grid[128, 128] - grid[128, 128 + m]
    want = mp.pi * mp.mpf(r) ** 2 / (mp.mpf("536.67e-9") * mp.mpf("16e-3"))
    assert got == pytest.approx(float(want), rel=1e-10)


def test_lens_phase_grid_too_small(cam):
    with pytest.raises(ConfigurationError):
        lens_phase(cam, (32, 32), 1e-5, 536.67e-9)


def test_pupil_modulus_equals_aperture(cam):
    pitch = 2.5e-5
    ap = circular_aperture((64, 64), pitch, 5e-4)
    phase = np.random.default_rng(0).uniform(-np.pi, np.pi, (64, 64))
    p = pupil_function(ap, phase, DefocusSpec(3.0), 5e-4, pitch, 536.67e-9)
    assert np.abs(np.abs(p.data) - ap).max() < 1e-14


def test_pupil_trivial_cases():
    pitch = 2.5e-5
    ap = circular_aperture((64, 64), pitch, 5e-4)
    p = pupil_function(ap, np.zeros((64, 64)), DefocusSpec(0.0), 5e-4, pitch, 536.67e-9)
    assert np.array_equal(p.data, ap.astype(complex))


def test_pupil_rim_quadratic_phase():
    # sample exactly at the rim: radius R along the +x axis
    pitch, R = 2.5e-5, 20 * 2.5e-5
    ap = np.ones((64, 64))
    p = pupil_function(ap, np.zeros((64, 64)), DefocusSpec(5.0), R, pitch, 536.67e-9)
    assert np.angle(p.data[32, 32 + 20]) == pytest.approx(5.0 - 2 * np.pi, abs=1e-12)


def test_psf_airy_symmetry():
    pitch = 2.5e-5
    ap = circular_aperture((128, 128), pitch, 30 * pitch)
    p = pupil_function(ap, np.zeros((128, 128)), DefocusSpec(0.0), 30 * pitch, pitch, 536.67e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # outer Airy rings leave the crop
        k = psf_from_pupil(p, 21)
    assert k[10, 10] == k.max()
    assert np.abs(k - np.flip(k)).max() < 1e-6
    assert np.abs(k - k.T).max() < 1e-6


def test_psf_unit_mass_and_nonnegative():
    pitch = 2.5e-5
    ap = circular_aperture((64, 64), pitch, 20 * pitch)
    p = pupil_function(ap, np.zeros((64, 64)), DefocusSpec(2.0), 20 * pitch, pitch, 536.67e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        k = psf_from_pupil(p, 15)
    assert k.min() >= 0
    assert k.sum() == pytest.approx(1.0, abs=1e-12)


def test_psf_rejects_empty_pupil():
    f = ComplexField(np.zeros((32, 32)), 1e-5, 536.67e-9)
    with pytest.raises(DegenerateInputError):
        psf_from_pupil(f, 11)


def test_psf_validates_output_size():
    pitch = 1e-5
    ap = circular_aperture((32, 32), pitch, 10 * pitch)
    p = pupil_function(ap, np.zeros((32, 32)), DefocusSpec(0.0), 10 * pitch, pitch, 536.67e-9)
    with pytest.raises(ConfigurationError):
        psf_from_pupil(p, 10)  # even
    with pytest.raises(ConfigurationError):
        psf_from_pupil(p, 33)  # larger than the grid


def test_psf_crop_loss_warning():
    # heavy defocus spreads energy outside a tiny crop
    pitch = 2.5e-5
    ap = circular_aperture((128, 128), pitch, 40 * pitch)
    p = pupil_function(ap, np.zeros((128, 128)), DefocusSpec(30.0), 40 * pitch, pitch, 536.67e-9)
    with pytest.warns(RuntimeWarning):
        psf_from_pupil(p, 5)


def test_fresnel_roundtrip():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    u = ComplexField(data, 1e-4, 536.67e-9)
    z = 0.5
    back = fresnel_propagate(fresnel_propagate(u, z), -z)
    assert np.sqrt(np.mean(np.abs(back.data - u.data) ** 2)) < 1e-8


def test_fresnel_plane_wave_eigenfunction():
    u = ComplexField(np.full((32, 32), 1.0 + 0.0j), 1e-4, 536.67e-9)
    out = fresnel_propagate(u, 0.2)
    ratio = out.data / u.data
    assert np.abs(np.abs(ratio) - 1.0).max() < 1e-12
    assert np.abs(ratio - ratio[0, 0]).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), z=st.floats(0.01, 2.0))
def test_fresnel_energy_conservation(seed, z):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    u = ComplexField(data, 1e-3, 536.67e-9)
    out = fresnel_propagate(u, z)
    assert out.energy() == pytest.approx(u.energy(), rel=1e-6)


def test_fresnel_sampling_check():
    u = ComplexField(np.ones((32, 32)), 1e-6, 536.67e-9)
    with pytest.raises(SamplingError):
        fresnel_propagate(u, 1.0)


def test_fresnel_zero_distance_is_identity():
    u = ComplexField(np.ones((32, 32)), 1e-4, 536.67e-9)
    assert np.array_equal(fresnel_propagate(u, 0.0).data, u.data)


def _direct_circular_convolution(img, psf):
    h, w = img.shape
    k = psf.shape[0]
    c = k // 2
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(k):
                for j in range(k):
                    acc += psf[i, j] * img[(y - (i - c)) % h, (x - (j - c)) % w]
            out[y, x] = acc
    return out


def test_fft_convolution_matches_direct():
    # oracle for every FFT convolution used downstream
    rng = np.random.default_rng(7)
    img = rng.uniform(size=(16, 16))
    psf = rng.uniform(size=(5, 5))
    psf /= psf.sum()
    assert np.abs(convolve_circular(img, psf) - _direct_circular_convolution(img, psf)).max() < 1e-9


def test_camera_config_validation():
    with pytest.raises(ConfigurationError):
        CameraConfig(focal_length=-1.0, aperture_diameter=4e-3, focus_distance=5.0)
    with pytest.raises(ConfigurationError):
        CameraConfig(focal_length=16e-3, aperture_diameter=4e-3, focus_distance=10e-3)
    with pytest.raises(ConfigurationError):
        CameraConfig(16e-3, 4e-3, 5.0, refractive_index=0.9)


def test_complex_field_validation():
    with pytest.raises(ConfigurationError):
        ComplexField(np.ones((8, 8)), 1e-5, 536.67e-9)
    with pytest.raises(ConfigurationError):
        ComplexField(np.ones((33, 32)), 1e-5, 536.67e-9)
    with pytest.raises(ConfigurationError):
        ComplexField(np.ones((32, 32)), -1e-5, 536.67e-9)
