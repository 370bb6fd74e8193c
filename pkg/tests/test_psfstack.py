import numpy as np
import pytest

from rpsfcam import (
    ConfigurationError,
    DegenerateInputError,
    InsufficientDataError,
    PsfStack,
    RotationTrace,
    build_stack,
    clear_aperture_stack,
    peak_angles,
    rotation_rate,
)
from rpsfcam.psfstack import (
    load_stack_binary,
    load_stack_dir,
    lobe_angles,
    save_stack_binary,
    save_stack_dir,
    stack_checksum,
)


def small_stack(cam, spec, psis=(-3.0, 0.0, 3.0)):
    return build_stack(spec, cam, psis, grid=128, aperture_samples=64)


def test_stack_shape(stack10):
    assert stack10.kernels.shape == (10, 3, 23, 23)
    assert stack10.n_planes == 10
    assert stack10.n_channels == 3
    assert stack10.kernel_size == 23


def test_stack_unit_mass(stack10):
    sums = stack10.kernels.sum(axis=(2, 3))
    assert np.abs(sums - 1.0).max() < 1e-9


def test_masked_kernel_less_peaked_than_clear(cam, spec):
    masked = small_stack(cam, spec, psis=[0.0])
    clear = clear_aperture_stack(cam, [0.0], grid=128, aperture_samples=64)
    assert masked.kernels[0, 1].max() < 0.9 * clear.kernels[0, 1].max()


def test_per_plane_independence(cam, spec):
    # each plane only depends on its own defocus value
    full = small_stack(cam, spec, psis=(-3.0, 0.0, 3.0))
    for i, psi in enumerate((-3.0, 0.0, 3.0)):
        single = small_stack(cam, spec, psis=[psi])
        assert np.array_equal(single.kernels[0], full.kernels[i])


def test_build_determinism(cam, spec):
    a = small_stack(cam, spec)
    b = small_stack(cam, spec)
    assert np.array_equal(a.kernels, b.kernels)


def test_chromatic_rotation_offset(cam, spec):
    st = build_stack(spec, cam, [10.0], grid=256, aperture_samples=128)
    angles = [lobe_angles(st.kernels[0, c])[0][0] for c in range(3)]
    # red and blue lobes sit at measurably different azimuths
    diff = np.rad2deg(abs(np.angle(np.exp(1j * (angles[0] - angles[2])))))
    assert diff > 0.5


def test_two_lobe_antipodal_geometry(cam):
    from rpsfcam import MaskSpec

    spec2 = MaskSpec(n_peaks=2, zones=5, epsilon=0.9, radius=cam.pupil_radius)
    st = build_stack(spec2, cam, [0.0], grid=256, aperture_samples=128)
    pair = lobe_angles(st.kernels[0, 1], n_lobes=2)
    sep = np.rad2deg(abs(np.angle(np.exp(1j * (pair[0][0] - pair[1][0])))))
    assert abs(sep - 180.0) < 5.0


def test_rotation_monotone_near_focus(cam, spec, stack10):
    trace = peak_angles(stack10)
    steps = np.diff(trace.unwrapped())
    assert np.all(steps < 0) or np.all(steps > 0)


def test_rotation_rate_matches_inverse_nl(cam, spec, stack10):
    # slope of angle vs defocus is ~ -1/(N*L) per unit defocus (radians)
    rate = rotation_rate(peak_angles(stack10))
    assert np.sign(rate) == -1
    assert 0.5 / (spec.n_peaks * spec.zones) < abs(rate) < 2.0 / (spec.n_peaks * spec.zones)


def test_lobe_angles_synthetic_kernel():
    k = np.zeros((21, 21))
    k[10, 16] = 1.0  # lobe on the +x axis
    k /= k.sum()
    (ang, rad), = lobe_angles(k)
    assert ang == pytest.approx(0.0, abs=1e-12)
    assert rad == pytest.approx(6 / 10.5, rel=1e-6)


def test_lobe_angles_rejects_centered_kernel():
    k = np.zeros((21, 21))
    k[10, 10] = 1.0
    with pytest.raises(DegenerateInputError):
        lobe_angles(k)


def test_lobe_angles_rejects_flat_kernel():
    with pytest.raises(DegenerateInputError):
        lobe_angles(np.full((21, 21), 1.0 / 441))


def test_rotation_rate_needs_three_planes():
    trace = RotationTrace(
        angles=np.array([0.1, 0.2]), radii=np.array([0.5, 0.5]), psis=np.array([-1.0, 1.0])
    )
    with pytest.raises(InsufficientDataError):
        rotation_rate(trace)


def test_rotation_rate_exact_linear_trace():
    psis = np.linspace(-5, 5, 7)
    trace = RotationTrace(angles=-0.2 * psis, radii=np.full(7, 0.5), psis=psis)
    assert rotation_rate(trace) == pytest.approx(-0.2, abs=1e-12)


def test_stack_validation():
    good = np.full((2, 1, 3, 3), 1.0 / 9)
    with pytest.raises(ConfigurationError):
        PsfStack(kernels=good, psis=np.array([1.0, -1.0]), wavelengths=np.array([5e-7]))
    with pytest.raises(ConfigurationError):
        PsfStack(kernels=np.full((2, 1, 4, 4), 1 / 16), psis=np.array([-1.0, 1.0]), wavelengths=np.array([5e-7]))
    with pytest.raises(ConfigurationError):
        PsfStack(kernels=good * 2, psis=np.array([-1.0, 1.0]), wavelengths=np.array([5e-7]))
    bad = good.copy()
    bad[0, 0, 0, 0] = -bad[0, 0, 0, 0]
    with pytest.raises(ConfigurationError):
        PsfStack(kernels=bad, psis=np.array([-1.0, 1.0]), wavelengths=np.array([5e-7]))


def test_dir_round_trip(tmp_path, cam, spec):
    st = small_stack(cam, spec)
    save_stack_dir(st, tmp_path / "stack")
    back = load_stack_dir(tmp_path / "stack")
    assert np.array_equal(back.psis, st.psis)
    assert np.array_equal(back.wavelengths, st.wavelengths)
    assert np.abs(back.kernels - st.kernels).max() < 1e-6  # f32 storage


def test_binary_round_trip(tmp_path, cam, spec):
    st = small_stack(cam, spec)
    path = tmp_path / "stack.rpsf"
    save_stack_binary(st, path)
    back = load_stack_binary(path)
    assert np.array_equal(back.psis, st.psis)
    assert np.abs(back.kernels - st.kernels).max() < 1e-6


def test_binary_rejects_garbage(tmp_path):
    path = tmp_path / "bad.rpsf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ConfigurationError):
        load_stack_binary(path)


def test_checksum_sensitivity(cam, spec):
    st = small_stack(cam, spec)
    assert stack_checksum(st) == stack_checksum(st)
    other = small_stack(cam, spec, psis=(-3.0, 0.0, 3.5))
    assert stack_checksum(st) != stack_checksum(other)
