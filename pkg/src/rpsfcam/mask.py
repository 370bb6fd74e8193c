"""Fresnel-zone spiral phase mask.

The mask is a set of L concentric annular zones; zone l (1-based) spans
normalized radii [(l-1)/L]^eps <= rho < [l/L]^eps and carries a spiral phase
of topological charge (l-1)*N + 1. The exact stepwise profile is paired with
a differentiable tanh-ring approximation whose parameters (N, eps) can be
moved by a gradient-based optimizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .optics import grid_coords

_JSON_FIELDS = {
    "n_peaks": "n_peaks",
    "zones": "zones",
    "epsilon": "epsilon",
    "radius_m": "radius",
    "lambda_ref_m": "lambda_ref",
    "refractive_index": "refractive_index",
    "sharpness": "sharpness",
}


@dataclass(frozen=True)
class MaskSpec:
    """Design parameters of the mask.

    n_peaks is continuous (real >= 1) so an optimizer can move it; round at
    export time when an integer lobe count is required.
    """

    n_peaks: float
    zones: int
    epsilon: float
    radius: float
    lambda_ref: float = 536.67e-9
    refractive_index: float = 1.5
    sharpness: float = 100.0

    def __post_init__(self):
        if self.n_peaks < 1:
            raise ConfigurationError("n_peaks must be >= 1")
        if self.zones < 1 or int(self.zones) != self.zones:
            raise ConfigurationError("zones must be a positive integer")
        if not (0 < self.epsilon <= 1):
            raise ConfigurationError("epsilon must lie in (0, 1]")
        if self.radius <= 0 or self.lambda_ref <= 0:
            raise ConfigurationError("radius and reference wavelength must be positive")
        if self.refractive_index <= 1:
            raise ConfigurationError("refractive index must exceed 1")
        if self.sharpness <= 0:
            raise ConfigurationError("sharpness must be positive")

    def ring_radii(self) -> np.ndarray:
        """Zone boundary radii r_0..r_L in meters, r_l = R*(l/L)^eps."""
        l = np.arange(self.zones + 1, dtype=np.float64)
        return self.radius * (l / self.zones) ** self.epsilon

    def normalized_radii(self) -> np.ndarray:
        return self.ring_radii() / self.radius

    def zone_charges(self) -> np.ndarray:
        """Topological charge of each zone, (l-1)*N + 1 for l = 1..L."""
        l = np.arange(1, self.zones + 1, dtype=np.float64)
        return (l - 1.0) * self.n_peaks + 1.0

    def to_json(self) -> str:
        return json.dumps(
            {key: getattr(self, attr) for key, attr in _JSON_FIELDS.items()}, indent=2
        )

    @classmethod
    def from_json(cls, text: str) -> "MaskSpec":
        doc = json.loads(text)
        kwargs = {}
        for key, attr in _JSON_FIELDS.items():
            if key not in doc:
                raise ConfigurationError(f"mask spec missing field '{key}'")
            kwargs[attr] = doc[key]
        kwargs["zones"] = int(kwargs["zones"])
        return cls(**kwargs)

    def rounded(self) -> "MaskSpec":
        """Integer-lobe version for export."""
        return replace(self, n_peaks=float(round(self.n_peaks)))


@dataclass(frozen=True)
class HeightMap:
    """Physical height profile in meters; zero outside the mask radius."""

    data: np.ndarray
    pitch: float


def step_phase(spec: MaskSpec, rho, phi):
    """Exact piecewise phase: charge(l) * phi on zone l, no smoothing."""
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(rho < 0) or np.any(rho > 1):
        raise ConfigurationError("normalized radius must lie in [0, 1]")
    # zone index: rho in [((l-1)/L)^eps, (l/L)^eps)  <=>  l = floor(L*rho^(1/eps)) + 1
    zone = np.floor(spec.zones * rho ** (1.0 / spec.epsilon)).astype(np.int64) + 1
    zone = np.clip(zone, 1, spec.zones)
    charge = (zone - 1) * spec.n_peaks + 1.0
    return charge * phi


def _ring_masks(spec: MaskSpec, rho: np.ndarray) -> np.ndarray:
    """Smooth indicator of each zone, stacked along axis 0 (L, ...)."""
    edges = spec.normalized_radii()  # r_0/R .. r_L/R
    s = spec.sharpness
    t = np.tanh(s * (rho[None, ...] - edges.reshape((-1,) + (1,) * rho.ndim)))
    return 0.5 * (t[:-1] - t[1:])


def smooth_phase(spec: MaskSpec, rho, phi):
    """Differentiable tanh-ring approximation of the stepwise profile."""
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if rho.shape != phi.shape:
        raise ConfigurationError("rho and phi grids must share a shape")
    masks = _ring_masks(spec, rho)
    charges = spec.zone_charges().reshape((-1,) + (1,) * rho.ndim)
    return phi * np.sum(charges * masks, axis=0)


def phase_gradients(spec: MaskSpec, rho, phi):
    """Analytic partials of the smooth phase w.r.t. (n_peaks, epsilon)."""
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    L, s = spec.zones, spec.sharpness
    edges = spec.normalized_radii()
    shape = (-1,) + (1,) * rho.ndim

    masks = _ring_masks(spec, rho)
    lm1 = np.arange(L, dtype=np.float64).reshape(shape)  # l - 1 for l = 1..L
    d_n = phi * np.sum(lm1 * masks, axis=0)

    # d(r_l/R)/d eps = (l/L)^eps * ln(l/L); zero for l = 0 and l = L
    l = np.arange(L + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        dedges = np.where(l > 0, (l / L) ** spec.epsilon * np.log(l / L), 0.0)
    t_arg = s * (rho[None, ...] - edges.reshape(shape))
    sech2 = 1.0 / np.cosh(np.clip(t_arg, -300, 300)) ** 2
    # d mask_l / d eps = 0.5*s*(-sech2(inner)*d_inner + sech2(outer)*d_outer)
    dmask = 0.5 * s * (
        -sech2[:-1] * dedges[:-1].reshape(shape) + sech2[1:] * dedges[1:].reshape(shape)
    )
    charges = spec.zone_charges().reshape(shape)
    d_eps = phi * np.sum(charges * dmask, axis=0)
    return d_n, d_eps


def polar_grids(shape, pitch: float, radius: float):
    """Normalized radius and azimuth grids about the grid center."""
    yy, xx = grid_coords(shape, pitch)
    rho = np.hypot(yy, xx) / radius
    phi = np.arctan2(yy, xx)
    return rho, phi


def mask_phase_grid(spec: MaskSpec, shape, pitch: float) -> np.ndarray:
    """Smooth mask phase sampled on a physical grid (unwrapped, zero outside R)."""
    rho, phi = polar_grids(shape, pitch, spec.radius)
    inside = rho <= 1.0
    phase = np.zeros(shape, dtype=np.float64)
    phase[inside] = smooth_phase(spec, rho[inside], phi[inside])
    return phase


def wrapped_phase(phase: np.ndarray) -> np.ndarray:
    """Phase folded into [0, 2*pi)."""
    return np.mod(phase, 2.0 * np.pi)


def height_map(spec: MaskSpec, shape, pitch: float, levels: int | None = None) -> HeightMap:
    """Physical height profile h = lambda_ref/(2*pi*(n-1)) * (phase mod 2*pi).

    levels, when given, staircases the height to that many fabrication steps.
    """
    h_, w_ = shape
    if pitch * min(h_, w_) < 2 * spec.radius:
        raise ConfigurationError("grid extent is smaller than the mask diameter")
    rho, phi = polar_grids(shape, pitch, spec.radius)
    inside = rho <= 1.0
    wrapped = np.zeros(shape, dtype=np.float64)
    wrapped[inside] = wrapped_phase(smooth_phase(spec, rho[inside], phi[inside]))
    h_max = spec.lambda_ref / (spec.refractive_index - 1.0)
    data = wrapped * (h_max / (2.0 * np.pi))
    if levels is not None:
        if levels < 2:
            raise ConfigurationError("staircase export needs at least 2 levels")
        step = h_max / levels
        data = np.floor(data / step) * step
    return HeightMap(data=data, pitch=pitch)
