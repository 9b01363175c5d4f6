"""Photon-recoil contrast reduction in a three-grating molecule interferometer.

The package predicts how much fringe visibility is lost when molecules absorb
photons from a laser crossing the beam between the first two gratings, and
inverts measured visibility ratios to obtain the absolute absorption cross
section.
"""
__version__ = "0.1.0"

from .cfgfile import load_config, parse_config_text, save_config
from .config import (
    ExperimentConfig,
    GaussianVelocity,
    InterferometerSpec,
    MoleculeSpec,
    MonochromaticVelocity,
    RecoilLaserSpec,
)
from .errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    DomainError,
    FitError,
    NumericalError,
    QuadratureError,
    RecoilSigmaError,
    ScanCoverageError,
    ValidationError,
    VisibilityRangeError,
)
from .estimation import (
    ReductionCurve,
    SigmaFitResult,
    chi_square,
    fit_sigma,
    predict_curve,
    propagate_systematics,
    quick_sigma,
)
from .fringe import (
    FringeScan,
    RatioPoint,
    VisibilityResult,
    constancy_check,
    extract_visibility,
    fit_offset_profile,
    fit_power_linearity,
    visibility_ratio,
)
from .montecarlo import (
    SimulationConfig,
    estimate_reduction,
    sample_ensemble,
    simulate_fringe_scan,
    simulate_reduction_curve,
)
from .physics import (
    first_minimum_distance,
    mean_photon_number,
    recoil_shift,
    reduction_asymptotic,
    reduction_curve,
    reduction_monochromatic,
    reduction_velocity_averaged,
    revival_period,
)

import types as _types

__all__ = sorted(
    name for name, obj in globals().items()
    if not name.startswith("_") and not isinstance(obj, _types.ModuleType)
)
