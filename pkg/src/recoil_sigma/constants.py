"""Physical constants (CODATA 2018 via scipy.constants) and unit helpers."""
from dataclasses import dataclass

from scipy import constants as _codata


@dataclass(frozen=True)
class PhysicalConstants:
    planck_h: float = _codata.h
    light_speed_c: float = _codata.c
    atomic_mass_unit: float = _codata.atomic_mass

    def __post_init__(self):
        for name in ("planck_h", "light_speed_c", "atomic_mass_unit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


CONSTANTS = PhysicalConstants()

H = CONSTANTS.planck_h
C = CONSTANTS.light_speed_c
AMU = CONSTANTS.atomic_mass_unit
