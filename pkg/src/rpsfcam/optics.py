"""Scalar wave-optics core: pupil assembly, defocus, PSFs, Fresnel propagation.

All operations are pure functions of their inputs. Grids are square-sampled
with an explicit physical pitch; the grid center sits at index (H//2, W//2)
so that FFT centering via ifftshift/fftshift is exact for even sizes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, DomainError, SamplingError

DEFAULT_WAVELENGTHS = (610e-9, 536.67e-9, 470e-9)


@dataclass(frozen=True)
class ComplexField:
    """A 2-D complex wavefront sampled on a uniform grid.

    data is dimensionless amplitude, pitch is meters per sample.
    """

    data: np.ndarray
    pitch: float
    wavelength: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        h, w = data.shape
        if h < 16 or w < 16 or h % 2 or w % 2:
            raise ConfigurationError(f"field grid must be even and >= 16, got {h}x{w}")
        if not (self.pitch > 0 and self.wavelength > 0):
            raise ConfigurationError("pitch and wavelength must be positive")

    @property
    def shape(self):
        return self.data.shape

    def energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))


@dataclass(frozen=True)
class CameraConfig:
    """Thin-lens camera: the sensor distance is derived from the focus distance."""

    focal_length: float
    aperture_diameter: float
    focus_distance: float
    wavelengths: tuple = DEFAULT_WAVELENGTHS
    refractive_index: float = 1.5
    sensor_distance: float = field(init=False)

    def __post_init__(self):
        if min(self.focal_length, self.aperture_diameter, self.focus_distance) <= 0:
            raise ConfigurationError("focal length, aperture, and focus distance must be positive")
        if self.refractive_index <= 1:
            raise ConfigurationError("refractive index must exceed 1")
        if self.focus_distance <= self.focal_length:
            raise ConfigurationError("focus distance must exceed the focal length")
        z_i = 1.0 / (1.0 / self.focal_length - 1.0 / self.focus_distance)
        object.__setattr__(self, "sensor_distance", z_i)
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))

    @property
    def pupil_radius(self) -> float:
        return self.aperture_diameter / 2.0


@dataclass(frozen=True)
class DefocusSpec:
    """Dimensionless defocus: radians of quadratic phase at the pupil rim.

    Positive for objects nearer than the focus plane.
    """

    psi: float

    def __post_init__(self):
        if not np.isfinite(self.psi):
            raise DomainError("defocus parameter must be finite")


def defocus_from_distance(cam: CameraConfig, z_o: float, wavelength: float) -> DefocusSpec:
    """Defocus parameter for an object at distance z_o.

    psi = (pi R^2 / lambda) * (1/z_o + 1/z_i - 1/f); zero exactly in focus.
    z_o may be +inf (object at optical infinity).
    """
    if not z_o > 0:
        raise DomainError(f"object distance must be positive, got {z_o}")
    r = cam.pupil_radius
    inv_zo = 0.0 if np.isinf(z_o) else 1.0 / z_o
    psi = (np.pi * r * r / wavelength) * (
        inv_zo + 1.0 / cam.sensor_distance - 1.0 / cam.focal_length
    )
    if not np.isfinite(psi):
        raise DomainError("defocus evaluation produced a non-finite value")
    return DefocusSpec(float(psi))


def grid_coords(shape, pitch: float):
    """Centered physical coordinate grids (y, x) in meters."""
    h, w = shape
    y = (np.arange(h) - h // 2) * pitch
    x = (np.arange(w) - w // 2) * pitch
    return np.meshgrid(y, x, indexing="ij")


def circular_aperture(shape, pitch: float, radius: float) -> np.ndarray:
    """Binary mask, 1 inside the given radius about the grid center."""
    yy, xx = grid_coords(shape, pitch)
    return (yy * yy + xx * xx <= radius * radius).astype(np.float64)


def lens_phase(cam: CameraConfig, shape, pitch: float, wavelength: float) -> np.ndarray:
    """Phase delay of a convex thin lens, h0 normalized so min(h) = 0 on the grid."""
    h_, w_ = shape
    if pitch * min(h_, w_) < cam.aperture_diameter:
        raise ConfigurationError(
            f"grid extent {pitch * min(h_, w_):.3e} m is smaller than the aperture "
            f"{cam.aperture_diameter:.3e} m"
        )
    yy, xx = grid_coords(shape, pitch)
    r2 = yy * yy + xx * xx
    n = cam.refractive_index
    sag = r2 / (2.0 * cam.focal_length * (n - 1.0))
    h0 = sag.max()  # thickest point such that min height is zero
    height = h0 - sag
    return (2.0 * np.pi * (n - 1.0) / wavelength) * height


def pupil_function(
    aperture: np.ndarray,
    phase: np.ndarray,
    defocus: DefocusSpec,
    radius: float,
    pitch: float,
    wavelength: float,
) -> ComplexField:
    """Generalized pupil P = A * exp(i(phase + psi * r^2 / R^2))."""
    aperture = np.asarray(aperture, dtype=np.float64)
    yy, xx = grid_coords(aperture.shape, pitch)
    quad = (yy * yy + xx * xx) / (radius * radius)
    data = aperture * np.exp(1j * (np.asarray(phase, dtype=np.float64) + defocus.psi * quad))
    return ComplexField(data, pitch=pitch, wavelength=wavelength)


def psf_from_pupil(pupil: ComplexField, out_size: int, crop_loss_warn: float = 0.02) -> np.ndarray:
    """Incoherent PSF as |FFT(P)|^2, center-cropped and renormalized to unit mass.

    Emits a warning if more than crop_loss_warn of the energy falls outside
    the crop window.
    """
    if out_size % 2 == 0 or out_size < 1:
        raise ConfigurationError("output kernel size must be odd and positive")
    h, w = pupil.shape
    if out_size > min(h, w):
        raise ConfigurationError("output size exceeds the pupil grid")
    amp = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(pupil.data)))
    inten = np.abs(amp) ** 2
    total = inten.sum()
    if total <= 0:
        raise DegenerateInputError("pupil carries no energy")
    cy, cx = h // 2, w // 2
    k = out_size // 2
    crop = inten[cy - k : cy + k + 1, cx - k : cx + k + 1]
    kept = crop.sum()
    if kept < (1.0 - crop_loss_warn) * total:
        warnings.warn(
            f"PSF crop to {out_size} px loses {100 * (1 - kept / total):.1f}% of the energy",
            RuntimeWarning,
            stacklevel=2,
        )
    crop = np.clip(crop, 0.0, None)
    return crop / crop.sum()


def fresnel_propagate(u: ComplexField, distance: float) -> ComplexField:
    """Free-space propagation via the Fresnel transfer function.

    Negative distances use the conjugate transfer function, making the
    operation exactly invertible. Total energy is conserved (|H| = 1).
    """
    if distance == 0:
        return ComplexField(u.data.copy(), u.pitch, u.wavelength)
    h, w = u.shape
    zabs = abs(distance)
    limit = u.wavelength * zabs / min(h, w)
    if u.pitch * u.pitch < limit:
        raise SamplingError(
            f"Fresnel kernel undersampled: pitch^2 = {u.pitch**2:.3e} < "
            f"lambda*|z|/N = {limit:.3e}"
        )
    fy = np.fft.fftfreq(h, d=u.pitch)
    fx = np.fft.fftfreq(w, d=u.pitch)
    fyy, fxx = np.meshgrid(fy, fx, indexing="ij")
    k = 2.0 * np.pi / u.wavelength
    tf = np.exp(1j * (k * distance - np.pi * u.wavelength * distance * (fxx**2 + fyy**2)))
    out = np.fft.ifft2(np.fft.fft2(u.data) * tf)
    return ComplexField(out, u.pitch, u.wavelength)
