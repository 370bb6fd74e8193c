import warnings

import numpy as np
import pytest

from rpsfcam import CameraConfig, MaskSpec
from rpsfcam.psfstack import build_stack


@pytest.fixture(scope="session")
def cam():
    return CameraConfig(focal_length=16e-3, aperture_diameter=4e-3, focus_distance=5.0)


@pytest.fixture(scope="session")
def spec(cam):
    return MaskSpec(n_peaks=1, zones=5, epsilon=0.9, radius=cam.pupil_radius)


@pytest.fixture(scope="session")
def stack10(cam, spec):
    """10-plane RGB stack used by the rendering/restoration/depth tests."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_stack(
            spec, cam, np.linspace(-5.0, 5.0, 10), aperture_samples=320
        )


def binary_texture(rng, shape):
    """High-contrast random texture that survives the CFA round trip."""
    return np.where(rng.random(shape) < 0.5, 0.05, 0.95)
