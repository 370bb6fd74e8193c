"""Rotating-PSF coded-aperture camera simulation toolkit."""

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    InsufficientDataError,
    RpsfError,
    SamplingError,
)
from .mask import HeightMap, MaskSpec, height_map, phase_gradients, smooth_phase, step_phase
from .optics import (
    CameraConfig,
    ComplexField,
    DefocusSpec,
    circular_aperture,
    defocus_from_distance,
    fresnel_propagate,
    lens_phase,
    psf_from_pupil,
    pupil_function,
)
from .psfstack import (
    PsfStack,
    RotationTrace,
    build_stack,
    clear_aperture_stack,
    peak_angles,
    rotation_rate,
)
from .scene import LayeredScene, quantize_depth, render
from .sensor import SensorConfig, add_noise, demosaic, mosaic, quantize, sense
from .wiener import WienerConfig, edgetaper, metrics, restore_layered, wiener_deconv
from .depthmap import DepthEstimate, depth_rmse, estimate
from .optim import OptimizeConfig, objective_pairwise, optimize

__version__ = "0.1.0"
