"""Depth-indexed per-channel RPSF stacks and rotation-feature extraction.

The pupil phase used by the Fourier PSF route is mask phase + defocus only:
at the imaging condition the thin-lens parabola cancels exactly against the
quadratic kernel of the Fresnel propagation to the sensor plane, and the
residual focusing error is fully captured by the defocus parameter. The
explicit lens-phase/Fresnel route is kept as a cross-check (see tests).

Defocus values and the mask height map are referenced to the mask's design
wavelength; both scale by lambda_ref/lambda per color channel, which is what
produces the chromatic rotation offsets.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import imgio
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    InsufficientDataError,
)
from .mask import MaskSpec, mask_phase_grid, wrapped_phase
from .optics import CameraConfig, DefocusSpec, circular_aperture, psf_from_pupil, pupil_function

STACK_MAGIC = b"RPSF"
STACK_VERSION = 1

DEFAULT_PUPIL_GRID = 512
DEFAULT_APERTURE_SAMPLES = 400
DEFAULT_KERNEL = 23


@dataclass(frozen=True)
class PsfStack:
    """D x C x K x K stack of unit-mass kernels over ascending defocus values."""

    kernels: np.ndarray
    psis: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        kernels = np.ascontiguousarray(np.asarray(self.kernels, dtype=np.float64))
        psis = np.asarray(self.psis, dtype=np.float64)
        wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "psis", psis)
        object.__setattr__(self, "wavelengths", wavelengths)
        if kernels.ndim != 4:
            raise ConfigurationError("kernel stack must be D x C x K x K")
        d, c, k1, k2 = kernels.shape
        if k1 != k2 or k1 % 2 == 0:
            raise ConfigurationError("kernels must be square with odd size")
        if d != psis.size or c != wavelengths.size:
            raise ConfigurationError("stack dims disagree with psis/wavelengths")
        if psis.size > 1 and not np.all(np.diff(psis) > 0):
            raise ConfigurationError("defocus values must be strictly ascending")
        if np.any(kernels < 0):
            raise ConfigurationError("kernels must be nonnegative")
        sums = kernels.sum(axis=(2, 3))
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ConfigurationError("every kernel must sum to 1 within 1e-9")

    @property
    def n_planes(self) -> int:
        return self.kernels.shape[0]

    @property
    def n_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[2]


@dataclass(frozen=True)
class RotationTrace:
    """Dominant-lobe angle and normalized radius per depth plane."""

    angles: np.ndarray
    radii: np.ndarray
    psis: np.ndarray

    def unwrapped(self) -> np.ndarray:
        return np.unwrap(np.asarray(self.angles, dtype=np.float64))


def _pupil_setup(spec: MaskSpec, grid: int, aperture_samples: int):
    pitch = 2.0 * spec.radius / aperture_samples
    shape = (grid, grid)
    aperture = circular_aperture(shape, pitch, spec.radius)
    base_phase = wrapped_phase(mask_phase_grid(spec, shape, pitch))
    return pitch, shape, aperture, base_phase


def build_stack(
    spec: MaskSpec,
    cam: CameraConfig,
    psis,
    kernel_size: int = DEFAULT_KERNEL,
    grid: int = DEFAULT_PUPIL_GRID,
    aperture_samples: int = DEFAULT_APERTURE_SAMPLES,
    wavelengths=None,
) -> PsfStack:
    """Render the RPSF kernel stack for each (defocus plane, color channel)."""
    psis = np.asarray(psis, dtype=np.float64)
    if psis.size == 0:
        raise ConfigurationError("at least one defocus plane is required")
    wavelengths = np.asarray(
        cam.wavelengths if wavelengths is None else wavelengths, dtype=np.float64
    )
    pitch, _, aperture, base_phase = _pupil_setup(spec, grid, aperture_samples)
    kernels = np.empty((psis.size, wavelengths.size, kernel_size, kernel_size))
    for ci, lam in enumerate(wavelengths):
        scale = spec.lambda_ref / lam
        phase = base_phase * scale
        for di, psi in enumerate(psis):
            pupil = pupil_function(
                aperture, phase, DefocusSpec(psi * scale), spec.radius, pitch, lam
            )
            kernels[di, ci] = psf_from_pupil(pupil, kernel_size)
    return PsfStack(kernels=kernels, psis=psis, wavelengths=wavelengths)


def build_stack_from_phase(
    phase: np.ndarray,
    aperture: np.ndarray,
    radius: float,
    pitch: float,
    psis,
    kernel_size: int = DEFAULT_KERNEL,
    wavelength: float = 536.67e-9,
) -> PsfStack:
    """Single-channel stack from a raw (possibly perturbed) mask phase grid.

    Used by the mask optimizer to differentiate through the PSF stage.
    """
    psis = np.asarray(psis, dtype=np.float64)
    kernels = np.empty((psis.size, 1, kernel_size, kernel_size))
    for di, psi in enumerate(psis):
        pupil = pupil_function(aperture, phase, DefocusSpec(psi), radius, pitch, wavelength)
        kernels[di, 0] = psf_from_pupil(pupil, kernel_size)
    return PsfStack(kernels=kernels, psis=psis, wavelengths=np.array([wavelength]))


def clear_aperture_stack(
    cam: CameraConfig,
    psis,
    kernel_size: int = DEFAULT_KERNEL,
    grid: int = DEFAULT_PUPIL_GRID,
    aperture_samples: int = DEFAULT_APERTURE_SAMPLES,
    wavelengths=None,
) -> PsfStack:
    """Baseline stack of an open circular aperture (no phase mask)."""
    psis = np.asarray(psis, dtype=np.float64)
    wavelengths = np.asarray(
        cam.wavelengths if wavelengths is None else wavelengths, dtype=np.float64
    )
    radius = cam.pupil_radius
    pitch = 2.0 * radius / aperture_samples
    shape = (grid, grid)
    aperture = circular_aperture(shape, pitch, radius)
    zero = np.zeros(shape)
    ref = wavelengths[len(wavelengths) // 2]
    kernels = np.empty((psis.size, wavelengths.size, kernel_size, kernel_size))
    for ci, lam in enumerate(wavelengths):
        scale = ref / lam
        for di, psi in enumerate(psis):
            pupil = pupil_function(aperture, zero, DefocusSpec(psi * scale), radius, pitch, lam)
            kernels[di, ci] = psf_from_pupil(pupil, kernel_size)
    return PsfStack(kernels=kernels, psis=psis, wavelengths=wavelengths)


def _dominant_component(kernel: np.ndarray):
    """Connected component (8-neighborhood) containing the global max after a
    50%-of-max threshold; returns the component mask."""
    peak = kernel.max()
    if peak <= 0 or np.ptp(kernel) == 0:
        raise DegenerateInputError("kernel has no dominant lobe")
    labels, _ = ndimage.label(kernel >= 0.5 * peak, structure=np.ones((3, 3)))
    iy, ix = np.unravel_index(np.argmax(kernel), kernel.shape)
    return labels == labels[iy, ix]


def lobe_angles(kernel: np.ndarray, n_lobes: int = 1):
    """Intensity-centroid angles (and radii) of the strongest lobes.

    Lobes are extracted greedily: dominant component first, then the next
    strongest component outside the already-claimed area.
    """
    k = kernel.shape[0]
    center = (k - 1) / 2.0
    work = kernel.copy()
    out = []
    for _ in range(n_lobes):
        comp = _dominant_component(work)
        w = np.where(comp, kernel, 0.0)
        total = w.sum()
        ys, xs = np.mgrid[0:k, 0:k]
        cy = (ys * w).sum() / total
        cx = (xs * w).sum() / total
        dy, dx = cy - center, cx - center
        r = np.hypot(dy, dx)
        if r < 0.25:
            raise DegenerateInputError("lobe centroid coincides with the kernel center")
        out.append((np.arctan2(dy, dx), r / (k / 2.0)))
        work = np.where(comp, 0.0, work)
    return out


def peak_angles(stack: PsfStack, channel: int = 1) -> RotationTrace:
    """Dominant-lobe rotation trace for one color channel."""
    angles, radii = [], []
    for d in range(stack.n_planes):
        (ang, rad), = lobe_angles(stack.kernels[d, channel], n_lobes=1)
        angles.append(ang)
        radii.append(rad)
    return RotationTrace(
        angles=np.array(angles), radii=np.array(radii), psis=stack.psis.copy()
    )


def rotation_rate(trace: RotationTrace) -> float:
    """Least-squares slope of the unwrapped lobe angle versus defocus."""
    if trace.angles.size < 3:
        raise InsufficientDataError("rotation-rate fit needs at least 3 planes")
    slope, _ = np.polyfit(trace.psis, trace.unwrapped(), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# serialization


def save_stack_dir(stack: PsfStack, directory):
    """One color PFM per plane plus a JSON manifest."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for d in range(stack.n_planes):
        name = f"plane_{d:03d}.pfm"
        if stack.n_channels == 3:
            img = np.moveaxis(stack.kernels[d], 0, -1)
        elif stack.n_channels == 1:
            img = stack.kernels[d, 0]
        else:
            raise ConfigurationError("PFM stack export supports 1 or 3 channels")
        imgio.write_pfm(os.path.join(directory, name), img)
        names.append(name)
    manifest = {
        "psis": stack.psis.tolist(),
        "wavelengths": stack.wavelengths.tolist(),
        "K": stack.kernel_size,
        "planes": names,
    }
    imgio.atomic_write_text(os.path.join(directory, "manifest.json"), json.dumps(manifest, indent=2))


def load_stack_dir(directory) -> PsfStack:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    kernels = []
    for name in manifest["planes"]:
        img = imgio.read_pfm(os.path.join(directory, name))
        kernels.append(np.moveaxis(img, -1, 0) if img.ndim == 3 else img[None])
    arr = np.asarray(kernels)
    arr /= arr.sum(axis=(2, 3), keepdims=True)  # renormalize f32 rounding
    return PsfStack(
        kernels=arr,
        psis=np.asarray(manifest["psis"]),
        wavelengths=np.asarray(manifest["wavelengths"]),
    )


def save_stack_binary(stack: PsfStack, path):
    """Single-file container: magic, version, dims, psis/wavelengths f64,
    then little-endian f32 kernel payload."""
    head = STACK_MAGIC + struct.pack(
        "<IIII", STACK_VERSION, stack.n_planes, stack.n_channels, stack.kernel_size
    )
    body = (
        stack.psis.astype("<f8").tobytes()
        + stack.wavelengths.astype("<f8").tobytes()
        + stack.kernels.astype("<f4").tobytes()
    )
    imgio.atomic_write_bytes(path, head + body)


def load_stack_binary(path) -> PsfStack:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != STACK_MAGIC:
        raise ConfigurationError("not an RPSF stack file")
    version, d, c, k = struct.unpack("<IIII", blob[4:20])
    if version != STACK_VERSION:
        raise ConfigurationError(f"unsupported stack version {version}")
    off = 20
    psis = np.frombuffer(blob, dtype="<f8", count=d, offset=off)
    off += 8 * d
    wavelengths = np.frombuffer(blob, dtype="<f8", count=c, offset=off)
    off += 8 * c
    kernels = np.frombuffer(blob, dtype="<f4", count=d * c * k * k, offset=off)
    arr = kernels.reshape(d, c, k, k).astype(np.float64)
    arr = arr / arr.sum(axis=(2, 3), keepdims=True)
    return PsfStack(kernels=arr, psis=psis, wavelengths=wavelengths)


def stack_checksum(stack: PsfStack) -> str:
    h = hashlib.sha256()
    h.update(stack.psis.tobytes())
    h.update(stack.wavelengths.tobytes())
    h.update(stack.kernels.tobytes())
    return h.hexdigest()
