"""Layered depth-dependent image formation.

A continuous depth map is quantized into D planes with binary masks that
partition the image; the coded image is the masked sum of per-plane true
convolutions of the all-in-focus image with the plane's kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigurationError
from .psfstack import PsfStack


@dataclass(frozen=True)
class LayeredScene:
    """All-in-focus image plus a quantized depth-plane assignment."""

    aif: np.ndarray  # H x W x C in [0, 1]
    plane_index: np.ndarray  # H x W ints in [0, D)
    n_planes: int

    def __post_init__(self):
        aif = np.asarray(self.aif, dtype=np.float64)
        idx = np.asarray(self.plane_index, dtype=np.int64)
        object.__setattr__(self, "aif", aif)
        object.__setattr__(self, "plane_index", idx)
        if aif.ndim != 3:
            raise ConfigurationError("all-in-focus image must be H x W x C")
        if idx.shape != aif.shape[:2]:
            raise ConfigurationError("plane index map must match the image extent")
        if idx.min() < 0 or idx.max() >= self.n_planes:
            raise ConfigurationError("plane indices out of range")

    def masks(self) -> np.ndarray:
        """D binary masks M_d = [plane_index == d]; an exact partition of unity."""
        d = np.arange(self.n_planes)
        return (self.plane_index[None] == d[:, None, None]).astype(np.float64)

    @classmethod
    def from_depth(cls, aif: np.ndarray, depth: np.ndarray, planes) -> "LayeredScene":
        idx, _ = quantize_depth(depth, planes)
        return cls(aif=aif, plane_index=idx, n_planes=len(planes))


def quantize_depth(depth: np.ndarray, planes):
    """Assign every pixel the nearest representative depth (ties to the nearer
    plane). Returns (plane_index, masks)."""
    planes = np.asarray(planes, dtype=np.float64)
    if planes.size == 0:
        raise ConfigurationError("planes list is empty")
    if planes.size > 1 and not np.all(np.diff(planes) > 0):
        raise ConfigurationError("planes must be strictly ascending")
    depth = np.asarray(depth, dtype=np.float64)
    mids = 0.5 * (planes[:-1] + planes[1:])
    # searchsorted 'left': depth exactly at a midpoint stays with the nearer plane
    idx = np.searchsorted(mids, depth, side="left")
    masks = (idx[None] == np.arange(planes.size)[:, None, None]).astype(np.float64)
    return idx, masks


def convolve_reflect(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """True 2-D convolution with reflect padding, FFT-accelerated."""
    k = kernel.shape[0] // 2
    padded = np.pad(img, k, mode="reflect")
    return fftconvolve(padded, kernel, mode="valid")


def render(scene: LayeredScene, stack: PsfStack) -> np.ndarray:
    """Compose the depth-coded image: sum_d (aif * K_d) masked by M_d."""
    h, w, c = scene.aif.shape
    if c != stack.n_channels:
        raise ConfigurationError("channel count mismatch between scene and stack")
    if int(scene.plane_index.max()) >= stack.n_planes:
        raise ConfigurationError("scene uses more planes than the stack provides")
    masks = scene.masks()
    out = np.zeros_like(scene.aif)
    for d in range(scene.n_planes):
        if not masks[d].any():
            continue
        for ci in range(c):
            out[:, :, ci] += masks[d] * convolve_reflect(scene.aif[:, :, ci], stack.kernels[d, ci])
    return np.clip(out, 0.0, None)
