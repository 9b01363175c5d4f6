"""Immutable description of the experiment: molecule, gratings, recoil laser, beam.

All quantities are SI.  Conversion from the human-facing units of config
files (nm, mm, AMU, ...) happens in :mod:`recoil_sigma.cfgfile`.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

from .constants import AMU
from .errors import ValidationError

# Half-width of the truncated Gaussian velocity window, in standard deviations.
VELOCITY_TRUNCATION_SIGMAS = 8.0


def _positive(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not (np.isfinite(value) and value > 0):
            raise ValidationError(f"{type(obj).__name__}.{name} must be > 0, got {value!r}")


def _non_negative(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not (np.isfinite(value) and value >= 0):
            raise ValidationError(f"{type(obj).__name__}.{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class MoleculeSpec:
    name: str
    mass: float  # kg

    def __post_init__(self):
        _positive(self, "mass")

    @classmethod
    def from_amu(cls, name, mass_amu):
        return cls(name, mass_amu * AMU)

    @property
    def mass_amu(self):
        return self.mass / AMU


@dataclass(frozen=True)
class RecoilLaserSpec:
    """Recoil laser crossing the molecular beam at distance ``distance_D`` behind G1.

    Waists are 1/e^2 intensity radii.  ``waist_x`` (along the flight
    direction) drops out of the mean photon number and is kept only as part
    of the instrument record.  ``power_err`` and ``waist_y_err`` are the
    1-sigma calibration uncertainties used for the systematic budget.
    """

    wavelength_k: float
    power_k: float
    waist_y: float
    waist_x: float
    distance_D: float
    offset_y: float = 0.0
    power_err: float = 0.0
    waist_y_err: float = 0.0

    def __post_init__(self):
        _non_negative(self, "wavelength_k", "power_k", "distance_D", "power_err", "waist_y_err")
        _positive(self, "waist_y", "waist_x")
        if not np.isfinite(self.offset_y):
            raise ValidationError("RecoilLaserSpec.offset_y must be finite")


@dataclass(frozen=True)
class InterferometerSpec:
    grating_period_d: float
    grating_separation_L: float
    grating_laser_wavelength: float = 0.0
    grating_laser_power: float = 0.0

    def __post_init__(self):
        _positive(self, "grating_period_d", "grating_separation_L")
        _non_negative(self, "grating_laser_wavelength", "grating_laser_power")


@dataclass(frozen=True)
class MonochromaticVelocity:
    v0: float

    def __post_init__(self):
        _positive(self, "v0")

    def domain(self):
        return self.v0, self.v0


@dataclass(frozen=True)
class GaussianVelocity:
    """Gaussian longitudinal velocity distribution truncated to a finite window.

    The density is restricted to ``[max(0, v0 - 8 sigma_v), v0 + 8 sigma_v]``
    and renormalized on that window.
    """

    v0: float
    sigma_v: float

    def __post_init__(self):
        _positive(self, "v0", "sigma_v")

    def domain(self):
        k = VELOCITY_TRUNCATION_SIGMAS
        return max(0.0, self.v0 - k * self.sigma_v), self.v0 + k * self.sigma_v

    def _z_bounds(self):
        lo, hi = self.domain()
        return (lo - self.v0) / self.sigma_v, (hi - self.v0) / self.sigma_v

    @property
    def norm(self):
        """Probability mass of the untruncated Gaussian inside the window."""
        za, zb = self._z_bounds()
        return float(special.ndtr(zb) - special.ndtr(za))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        z = (v - self.v0) / self.sigma_v
        lo, hi = self.domain()
        dens = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * self.sigma_v * self.norm)
        return np.where((v >= lo) & (v <= hi), dens, 0.0)

    def ppf(self, u):
        """Inverse CDF of the truncated density, ``u`` in [0, 1]."""
        za, zb = self._z_bounds()
        u = np.asarray(u, dtype=float)
        pa, pb = special.ndtr(za), special.ndtr(zb)
        z = special.ndtri(pa + u * (pb - pa))
        v = self.v0 + self.sigma_v * z
        lo, hi = self.domain()
        return np.clip(v, np.nextafter(lo, np.inf) if lo == 0.0 else lo, hi)


VelocityModel = Union[GaussianVelocity, MonochromaticVelocity]


@dataclass(frozen=True)
class ExperimentConfig:
    molecule: MoleculeSpec
    recoil_laser: RecoilLaserSpec
    interferometer: InterferometerSpec
    velocity: VelocityModel
    baseline_visibility: float = 0.15
    baseline_mean_rate: float = 300.0  # counts / s
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not (0.0 < self.baseline_visibility <= 1.0):
            raise ValidationError(
                f"baseline_visibility must lie in (0, 1], got {self.baseline_visibility!r}"
            )
        _positive(self, "baseline_mean_rate")
        L = self.interferometer.grating_separation_L
        if not self.recoil_laser.distance_D < L:
            raise ValidationError(
                f"recoil laser distance {self.recoil_laser.distance_D!r} m must be < L = {L!r} m"
            )

    def at_distance(self, distance_D):
        """Copy of the configuration with the recoil laser moved to ``distance_D``."""
        laser = dataclasses.replace(self.recoil_laser, distance_D=float(distance_D))
        return dataclasses.replace(self, recoil_laser=laser)

    def with_laser(self, **changes):
        laser = dataclasses.replace(self.recoil_laser, **changes)
        return dataclasses.replace(self, recoil_laser=laser)

    def monochromatic(self):
        """Same experiment with the velocity spread removed."""
        return dataclasses.replace(self, velocity=MonochromaticVelocity(self.velocity.v0))
