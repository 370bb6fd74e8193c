"""Gradient ascent on the mask design parameters (N, eps).

The objective measures how dissimilar the RPSF kernels are across depth
planes; a mask whose kernels separate well in shape encodes depth strongly.
Differentiation is hybrid: analytic through the tanh-ring phase profile,
central finite differences through the |FFT|^2 stage along the analytic
phase-gradient direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, RpsfError
from .mask import MaskSpec, phase_gradients, polar_grids, smooth_phase
from .optics import circular_aperture
from .psfstack import PsfStack, build_stack_from_phase, peak_angles

OBJECTIVES = ("pairwise-dissimilarity", "rotation-spread")


@dataclass(frozen=True)
class OptimizeConfig:
    lr_mask: float = 0.1
    iters: int = 40
    psis: tuple = (-4.5, -3.0, -1.5, 0.0, 1.5, 3.0, 4.5)
    objective: str = "pairwise-dissimilarity"
    n_bounds: tuple = (1.0, 4.0)
    eps_bounds: tuple = (1e-3, 1.0)
    fd_step: float = 1e-3
    grid: int = 128
    aperture_samples: int = 64
    kernel_size: int = 23
    max_shift: int = 2

    def __post_init__(self):
        if self.lr_mask <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.iters < 1:
            raise ConfigurationError("at least one iteration is required")
        if len(self.psis) < 2:
            raise ConfigurationError("at least two defocus planes are required")
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"objective must be one of {OBJECTIVES}")


@dataclass(frozen=True)
class TrajectoryPoint:
    iteration: int
    n_peaks: float
    epsilon: float
    objective: float


def _ncc_max_shift(a: np.ndarray, b: np.ndarray, max_shift: int) -> float:
    """Zero-mean normalized cross-correlation, maximized over integer shifts."""
    best = -1.0
    k = a.shape[0]
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            ya0, ya1 = max(0, dy), min(k, k + dy)
            xa0, xa1 = max(0, dx), min(k, k + dx)
            sa = a[ya0:ya1, xa0:xa1]
            sb = b[ya0 - dy : ya1 - dy, xa0 - dx : xa1 - dx]
            za = sa - sa.mean()
            zb = sb - sb.mean()
            denom = np.sqrt((za * za).sum() * (zb * zb).sum())
            if denom <= 0:
                raise DegenerateInputError("flat kernel in dissimilarity objective")
            best = max(best, float((za * zb).sum() / denom))
    return best


def objective_pairwise(stack: PsfStack, max_shift: int = 2) -> float:
    """Mean over plane pairs (and channels) of 1 - max-shift NCC; in [0, 2]."""
    if stack.n_planes < 2:
        raise ConfigurationError("pairwise objective needs at least 2 planes")
    total, count = 0.0, 0
    for c in range(stack.n_channels):
        for i in range(stack.n_planes):
            for j in range(i + 1, stack.n_planes):
                total += 1.0 - _ncc_max_shift(
                    stack.kernels[i, c], stack.kernels[j, c], max_shift
                )
                count += 1
    return total / count


def objective_rotation_spread(stack: PsfStack) -> float:
    """Variance of the unwrapped dominant-lobe angle across planes."""
    trace = peak_angles(stack, channel=0 if stack.n_channels == 1 else 1)
    return float(np.var(trace.unwrapped()))


def _evaluate(objective: str, stack: PsfStack, max_shift: int) -> float:
    if objective == "pairwise-dissimilarity":
        return objective_pairwise(stack, max_shift)
    return objective_rotation_spread(stack)


class _Evaluator:
    """Caches the pupil geometry; evaluates J and its (N, eps) gradient."""

    def __init__(self, spec0: MaskSpec, cfg: OptimizeConfig):
        self.cfg = cfg
        self.radius = spec0.radius
        self.lambda_ref = spec0.lambda_ref
        self.pitch = 2.0 * spec0.radius / cfg.aperture_samples
        shape = (cfg.grid, cfg.grid)
        self.aperture = circular_aperture(shape, self.pitch, spec0.radius)
        rho, phi = polar_grids(shape, self.pitch, spec0.radius)
        self.inside = rho <= 1.0
        self.rho_in = rho[self.inside]
        self.phi_in = phi[self.inside]
        self.shape = shape
        self.template = replace(spec0)

    def _phase(self, spec: MaskSpec) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.inside] = smooth_phase(spec, self.rho_in, self.phi_in)
        return out

    def _stack_from_phase(self, phase: np.ndarray) -> PsfStack:
        return build_stack_from_phase(
            phase,
            self.aperture,
            self.radius,
            self.pitch,
            self.cfg.psis,
            kernel_size=self.cfg.kernel_size,
            wavelength=self.lambda_ref,
        )

    def spec_at(self, n_peaks: float, epsilon: float) -> MaskSpec:
        return replace(self.template, n_peaks=n_peaks, epsilon=epsilon)

    def value(self, n_peaks: float, epsilon: float) -> float:
        stack = self._stack_from_phase(self._phase(self.spec_at(n_peaks, epsilon)))
        return _evaluate(self.cfg.objective, stack, self.cfg.max_shift)

    def gradient(self, n_peaks: float, epsilon: float) -> np.ndarray:
        """Chain rule: analytic phase direction, central FD through |FFT|^2."""
        spec = self.spec_at(n_peaks, epsilon)
        phase = self._phase(spec)
        d_n, d_eps = phase_gradients(spec, self.rho_in, self.phi_in)
        grad = np.zeros(2)
        h = self.cfg.fd_step
        for i, direction in enumerate((d_n, d_eps)):
            bump = np.zeros(self.shape)
            bump[self.inside] = direction
            j_plus = _evaluate(
                self.cfg.objective, self._stack_from_phase(phase + h * bump), self.cfg.max_shift
            )
            j_minus = _evaluate(
                self.cfg.objective, self._stack_from_phase(phase - h * bump), self.cfg.max_shift
            )
            grad[i] = (j_plus - j_minus) / (2.0 * h)
        return grad


def _project(params: np.ndarray, cfg: OptimizeConfig) -> np.ndarray:
    return np.array(
        [
            np.clip(params[0], cfg.n_bounds[0], cfg.n_bounds[1]),
            np.clip(params[1], cfg.eps_bounds[0], cfg.eps_bounds[1]),
        ]
    )


def optimize(spec0: MaskSpec, cfg: OptimizeConfig) -> list[TrajectoryPoint]:
    """Projected gradient ascent with backtracking (halve the step up to 8
    times; stop when no improving step exists). The trajectory objective is
    non-decreasing by construction."""
    ev = _Evaluator(spec0, cfg)
    params = _project(np.array([spec0.n_peaks, spec0.epsilon]), cfg)
    j = ev.value(*params)
    if not np.isfinite(j):
        raise RpsfError("objective is non-finite at the starting point")
    traj = [TrajectoryPoint(0, float(params[0]), float(params[1]), j)]
    for it in range(1, cfg.iters + 1):
        grad = ev.gradient(*params)
        if not np.all(np.isfinite(grad)):
            raise RpsfError(f"non-finite gradient at iteration {it}")
        step = cfg.lr_mask
        accepted = False
        for _ in range(9):  # initial step plus 8 halvings
            cand = _project(params + step * grad, cfg)
            if np.allclose(cand, params):
                break
            j_cand = ev.value(*cand)
            if np.isfinite(j_cand) and j_cand > j:
                params, j, accepted = cand, j_cand, True
                break
            step *= 0.5
        traj.append(TrajectoryPoint(it, float(params[0]), float(params[1]), j))
        if not accepted:
            break
    return traj


def final_spec(spec0: MaskSpec, traj: list[TrajectoryPoint]) -> MaskSpec:
    last = traj[-1]
    return replace(spec0, n_peaks=last.n_peaks, epsilon=last.epsilon)
