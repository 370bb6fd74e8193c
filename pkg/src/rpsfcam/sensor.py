"""Camera sensor model: Bayer CFA, shot + read noise, ADC, Malvar demosaicing.

The normative stage order is mosaic -> noise -> quantize -> demosaic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError

CFA_PATTERNS = {
    "RGGB": ((0, 1), (1, 2)),
    "BGGR": ((2, 1), (1, 0)),
    "GRBG": ((1, 0), (2, 1)),
    "GBRG": ((1, 2), (0, 1)),
}


@dataclass(frozen=True)
class SensorConfig:
    cfa: str = "RGGB"
    read_sigma: float = 0.01
    photon_scale: float = 1000.0
    adc_bits: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.cfa not in CFA_PATTERNS:
            raise ConfigurationError(f"unknown CFA pattern {self.cfa!r}")
        if self.read_sigma < 0:
            raise ConfigurationError("read_sigma must be nonnegative")
        if not 1 <= self.adc_bits <= 16:
            raise ConfigurationError("adc_bits must lie in [1, 16]")
        if self.photon_scale <= 0:
            raise ConfigurationError("photon_scale must be positive")

    def to_json(self) -> str:
        return json.dumps(
            {
                "cfa": self.cfa,
                "read_sigma": self.read_sigma,
                "photon_scale": self.photon_scale,
                "adc_bits": self.adc_bits,
                "seed": self.seed,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SensorConfig":
        return cls(**json.loads(text))


def _channel_map(cfa: str, shape) -> np.ndarray:
    """H x W map of which RGB channel each photosite samples."""
    pat = np.asarray(CFA_PATTERNS[cfa])
    h, w = shape
    return pat[np.arange(h)[:, None] % 2, np.arange(w)[None, :] % 2]


def mosaic(img: np.ndarray, cfa: str = "RGGB") -> np.ndarray:
    """Per-pixel CFA channel selection; no filtering."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ConfigurationError("mosaic expects an H x W x 3 image")
    h, w, _ = img.shape
    if h % 2 or w % 2:
        raise ConfigurationError("CFA sampling requires even image dimensions")
    chan = _channel_map(cfa, (h, w))
    return np.take_along_axis(img, chan[..., None], axis=2)[..., 0]


def add_noise(raw: np.ndarray, cfg: SensorConfig, clip: bool = True) -> np.ndarray:
    """Shot noise (Gaussian, variance v/photon_scale) plus read noise.

    Deterministic given the seed: both fields come from a Philox stream keyed
    by the config seed. clip=False exposes the unclamped tap for moment tests.
    """
    raw = np.asarray(raw, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.seed)))
    shot_std = np.sqrt(np.clip(raw, 0.0, None) / cfg.photon_scale)
    noisy = (
        raw
        + shot_std * rng.standard_normal(raw.shape)
        + cfg.read_sigma * rng.standard_normal(raw.shape)
    )
    return np.clip(noisy, 0.0, 1.0) if clip else noisy


def quantize(x: np.ndarray, bits: int) -> np.ndarray:
    """Round to the nearest of 2^bits uniform levels spanning [0, 1]."""
    if bits < 1:
        raise ConfigurationError("at least one bit is required")
    levels = float(2**bits - 1)
    return np.round(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * levels) / levels


# Malvar-He-Cutler 5x5 linear filter bank (coefficients x8).
_K_G_AT_RB = np.array(
    [
        [0, 0, -1, 0, 0],
        [0, 0, 2, 0, 0],
        [-1, 2, 4, 2, -1],
        [0, 0, 2, 0, 0],
        [0, 0, -1, 0, 0],
    ],
    dtype=np.float64,
) / 8.0

_K_RB_ROW = np.array(  # e.g. R at a green site whose row contains R
    [
        [0, 0, 0.5, 0, 0],
        [0, -1, 0, -1, 0],
        [-1, 4, 5, 4, -1],
        [0, -1, 0, -1, 0],
        [0, 0, 0.5, 0, 0],
    ],
    dtype=np.float64,
) / 8.0

_K_RB_COL = _K_RB_ROW.T.copy()

_K_RB_DIAG = np.array(  # e.g. R at a B site
    [
        [0, 0, -1.5, 0, 0],
        [0, 2, 0, 2, 0],
        [-1.5, 0, 6, 0, -1.5],
        [0, 2, 0, 2, 0],
        [0, 0, -1.5, 0, 0],
    ],
    dtype=np.float64,
) / 8.0


def demosaic(raw: np.ndarray, cfa: str = "RGGB") -> np.ndarray:
    """Malvar linear demosaicing with reflect padding, clamped to [0, 1]."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ConfigurationError("demosaic expects a single-channel mosaic")
    h, w = raw.shape
    if h % 2 or w % 2 or h < 6 or w < 6:
        raise ConfigurationError("mosaic must be even-sized and at least 6 x 6")
    chan = _channel_map(cfa, (h, w))
    rows_with_r = np.any(chan == 0, axis=1)  # per-row flag: does this row carry red?

    conv = {
        "g": ndimage.correlate(raw, _K_G_AT_RB, mode="reflect"),
        "row": ndimage.correlate(raw, _K_RB_ROW, mode="reflect"),
        "col": ndimage.correlate(raw, _K_RB_COL, mode="reflect"),
        "diag": ndimage.correlate(raw, _K_RB_DIAG, mode="reflect"),
    }

    r_site, g_site, b_site = chan == 0, chan == 1, chan == 2
    in_r_row = rows_with_r[:, None] & np.ones((1, w), dtype=bool)

    out = np.empty((h, w, 3))
    # green: native at green sites, interpolated elsewhere
    out[:, :, 1] = np.where(g_site, raw, conv["g"])
    # red
    out[:, :, 0] = np.select(
        [r_site, g_site & in_r_row, g_site & ~in_r_row, b_site],
        [raw, conv["row"], conv["col"], conv["diag"]],
    )
    # blue (mirror of red)
    out[:, :, 2] = np.select(
        [b_site, g_site & ~in_r_row, g_site & in_r_row, r_site],
        [raw, conv["row"], conv["col"], conv["diag"]],
    )
    return np.clip(out, 0.0, 1.0)


def sense(img: np.ndarray, cfg: SensorConfig):
    """Full pipeline: mosaic -> noise -> quantize -> demosaic.

    Returns (demosaiced, pre_quantization_mosaic).
    """
    raw = mosaic(img, cfg.cfa)
    noisy = add_noise(raw, cfg)
    quantized = quantize(noisy, cfg.adc_bits)
    return demosaic(quantized, cfg.cfa), noisy
