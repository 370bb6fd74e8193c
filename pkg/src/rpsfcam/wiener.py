"""Classical non-blind restoration: edgetaper, Wiener deconvolution,
per-depth-layer recomposition, and image quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DomainError
from .psfstack import PsfStack


@dataclass(frozen=True)
class WienerConfig:
    nsr: float = 1e-3
    taper_width: int = 23

    def __post_init__(self):
        if self.nsr < 0:
            raise ConfigurationError("noise-to-signal ratio must be nonnegative")
        if self.taper_width < 0:
            raise ConfigurationError("taper width must be nonnegative")


def _otf(psf: np.ndarray, shape) -> np.ndarray:
    """Zero-pad the kernel into the image frame with its center at the origin."""
    k = psf.shape[0]
    padded = np.zeros(shape)
    padded[:k, :k] = psf
    return np.fft.fft2(np.roll(padded, (-(k // 2), -(k // 2)), axis=(0, 1)))


def convolve_circular(img: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Circular (FFT) convolution; channels handled independently."""
    otf = _otf(psf, img.shape[:2])
    if img.ndim == 2:
        return np.real(np.fft.ifft2(np.fft.fft2(img) * otf))
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = np.real(np.fft.ifft2(np.fft.fft2(img[:, :, c]) * otf))
    return out


def _taper_window(shape, width: int) -> np.ndarray:
    """Separable window: raised-cosine ramp of the given width at each border,
    exactly 1 in the interior."""

    def ramp(n):
        w = np.ones(n)
        t = 0.5 * (1.0 - np.cos(np.pi * (np.arange(width) + 0.5) / width))
        w[:width] = t
        w[n - width :] = t[::-1]
        return w

    return np.outer(ramp(shape[0]), ramp(shape[1]))


def edgetaper(img: np.ndarray, psf: np.ndarray, width: int) -> np.ndarray:
    """Blend the border band toward the blurred image so circular deconvolution
    sees a smoothly periodic input. The interior is untouched."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if width < psf.shape[0]:
        raise ConfigurationError("taper width must be at least the kernel size")
    if width >= min(h, w) // 2:
        raise ConfigurationError("taper width too large for the image")
    if width == 0:
        return img.copy()
    window = _taper_window((h, w), width)
    blurred = convolve_circular(img, psf)
    if img.ndim == 3:
        window = window[..., None]
    return window * img + (1.0 - window) * blurred


def wiener_deconv(img: np.ndarray, psf: np.ndarray, nsr: float) -> np.ndarray:
    """Frequency-domain Wiener filter with a scalar noise-to-signal ratio."""
    img = np.asarray(img, dtype=np.float64)
    otf = _otf(psf, img.shape[:2])
    power = np.abs(otf) ** 2
    if nsr == 0 and power.min() < 1e-15:
        raise DomainError("OTF has zeros; nsr = 0 makes the inverse singular")
    filt = np.conj(otf) / (power + nsr)

    def apply(channel):
        return np.real(np.fft.ifft2(np.fft.fft2(channel) * filt))

    if img.ndim == 2:
        return apply(img)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = apply(img[:, :, c])
    return out


def restore_layered(
    img: np.ndarray, stack: PsfStack, masks: np.ndarray, cfg: WienerConfig
) -> np.ndarray:
    """Per-depth-plane Wiener deconvolution recomposed through the depth masks."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != stack.n_channels:
        raise ConfigurationError("image channels must match the stack")
    masks = np.asarray(masks, dtype=np.float64)
    if masks.shape[0] != stack.n_planes or masks.shape[1:] != img.shape[:2]:
        raise ConfigurationError("mask stack must be D x H x W matching the image")
    out = np.zeros_like(img)
    for d in range(stack.n_planes):
        if not masks[d].any():
            continue
        for c in range(stack.n_channels):
            tapered = edgetaper(img[:, :, c], stack.kernels[d, c], cfg.taper_width)
            out[:, :, c] += masks[d] * wiener_deconv(tapered, stack.kernels[d, c], cfg.nsr)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# metrics


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError("metric inputs must share a shape")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    err = rmse(a, b)
    if err == 0:
        return float("inf")
    return float(20.0 * np.log10(data_range / err))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean SSIM with the standard 11x11 Gaussian window (sigma 1.5).

    Color images are averaged over channels; statistics use the valid region
    only, so border effects never enter.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError("metric inputs must share a shape")
    if a.ndim == 3:
        return float(np.mean([ssim(a[:, :, c], b[:, :, c], data_range) for c in range(a.shape[2])]))
    win = _gaussian_window()
    pad = win.shape[0] // 2
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def filt(x):
        return ndimage.correlate(x, win, mode="reflect")[pad:-pad, pad:-pad]

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def metrics(a: np.ndarray, b: np.ndarray) -> dict:
    """PSNR (dB), SSIM, and RMSE between two images on the [0, 1] range."""
    return {"psnr": psnr(a, b), "ssim": ssim(a, b), "rmse": rmse(a, b)}
