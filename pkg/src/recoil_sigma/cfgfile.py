"""Sectioned key/value experiment files with explicit units.

Example::

    [molecule]
    name = C70
    mass = 840.0 amu

    [velocity]
    model = gaussian v0=210.3 m/s sigma=38.4 m/s

Every number carries a unit suffix (dimensionless quantities carry none).
Values are converted to SI on load.  ``save_config`` writes SI values with
``repr`` precision so that ``load_config(save_config(c)) == c`` exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from decimal import Decimal
from importlib import resources
from pathlib import Path

from .config import (
    ExperimentConfig,
    GaussianVelocity,
    InterferometerSpec,
    MoleculeSpec,
    MonochromaticVelocity,
    RecoilLaserSpec,
)
from .constants import AMU
from .errors import ConfigError, ValidationError

UNITS = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "mass": {"kg": 1.0, "amu": AMU, "u": AMU, "da": AMU},
    "power": {"w": 1.0, "mw": 1e-3, "kw": 1e3},
    "velocity": {"m/s": 1.0, "km/s": 1e3, "mm/s": 1e-3},
    "rate": {"1/s": 1.0, "/s": 1.0, "hz": 1.0, "counts/s": 1.0},
    "area": {"m2": 1.0, "m^2": 1.0, "cm2": 1e-4, "cm^2": 1e-4},
    "none": {"": 1.0},
}

# section -> key -> (kind, required)
SCHEMA = {
    "molecule": {"name": ("text", True), "mass": ("mass", True)},
    "interferometer": {
        "grating_period": ("length", True),
        "grating_separation": ("length", True),
        "grating_laser_wavelength": ("length", False),
        "grating_laser_power": ("power", False),
    },
    "recoil_laser": {
        "wavelength": ("length", True),
        "power": ("power", True),
        "power_err": ("power", False),
        "waist_y": ("length", True),
        "waist_y_err": ("length", False),
        "waist_x": ("length", False),
        "distance": ("length", True),
        "offset_y": ("length", False),
    },
    "velocity": {"model": ("velocity_model", True)},
    "baseline": {"visibility": ("none", True), "mean_rate": ("rate", True)},
}

BUNDLED = ("c70_paper.cfg", "c70_offset_scan.cfg", "c70_power_scan.cfg", "c70_constancy.cfg")

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def parse_quantity(text, kind, where=(None, None), allow_bare=True):
    """Convert ``"266 nm"`` (for ``kind="length"``) to SI.

    A bare number is taken as SI when ``allow_bare``; config files pass
    ``allow_bare=False`` so that every dimensional value names its unit.
    """
    m = _QUANTITY.match(text)
    if not m:
        raise ConfigError(f"cannot parse quantity {text!r}", *where)
    number, unit = m.group(1), m.group(2)
    table = UNITS[kind]
    key = unit.lower()
    if key not in table:
        if unit == "" and kind != "none":
            if allow_bare:
                return float(number)
            raise ConfigError(f"{kind} value {text.strip()!r} needs an explicit unit", *where)
        allowed = ", ".join(sorted(u for u in table if u)) or "no unit"
        raise ConfigError(f"unit {unit!r} is not a {kind} unit (expected {allowed})", *where)
    return _to_si(number, table[key])


def _to_si(number, factor):
    """Scale the decimal string ``number`` by ``factor``.

    Power-of-ten factors are applied in decimal arithmetic, so "532.2 nm"
    becomes the float nearest to 5.322e-07.
    """
    exponent = round(math.log10(factor))
    if 10.0**exponent == factor:
        return float(Decimal(number).scaleb(exponent))
    return float(number) * factor


def _parse_velocity_model(text, where):
    parts = text.split()
    if not parts:
        raise ConfigError("empty velocity model", *where)
    kind, rest = parts[0].lower(), " ".join(parts[1:])
    fields = dict(re.findall(r"(\w+)\s*=\s*([^=]+?)(?=\s+\w+\s*=|$)", rest))
    expected = {"gaussian": {"v0", "sigma"}, "monochromatic": {"v0"}}
    if kind not in expected:
        raise ConfigError(f"unknown velocity model {kind!r} (gaussian or monochromatic)", *where)
    if set(fields) != expected[kind]:
        raise ConfigError(
            f"{kind} velocity model takes {sorted(expected[kind])}, got {sorted(fields)}", *where
        )
    vals = {k: parse_quantity(v, "velocity", where, allow_bare=False) for k, v in fields.items()}
    try:
        if kind == "gaussian":
            return GaussianVelocity(vals["v0"], vals["sigma"])
        return MonochromaticVelocity(vals["v0"])
    except ValidationError as exc:
        raise ConfigError(str(exc), *where, kind="range") from exc


def parse_config_text(text, path="<string>"):
    """Parse the text of a config document into an :class:`ExperimentConfig`."""
    values, lines = {}, {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", path, lineno)
            section = line[1:-1].strip().lower()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            values.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        if section is None:
            raise ConfigError("key outside of any section", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", path, lineno)
        if key in values[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", path, lineno)
        kind = SCHEMA[section][key][0]
        where = (path, lineno)
        if kind == "text":
            parsed = val
        elif kind == "velocity_model":
            parsed = _parse_velocity_model(val, where)
        else:
            parsed = parse_quantity(val, kind, where, allow_bare=False)
        values[section][key] = parsed
        lines[(section, key)] = lineno

    for section, keys in SCHEMA.items():
        for key, (_, required) in keys.items():
            if required and key not in values.get(section, {}):
                raise ConfigError(f"missing key {key!r} in [{section}]", path)

    def build(section, factory, **kw):
        try:
            return factory(**kw)
        except ValidationError as exc:
            first = min((ln for (s, _), ln in lines.items() if s == section), default=None)
            raise ConfigError(str(exc), path, first, kind="range") from exc

    mol, inter, las, base = (values[s] for s in ("molecule", "interferometer", "recoil_laser", "baseline"))
    molecule = build("molecule", MoleculeSpec, name=mol["name"], mass=mol["mass"])
    interferometer = build(
        "interferometer", InterferometerSpec,
        grating_period_d=inter["grating_period"],
        grating_separation_L=inter["grating_separation"],
        grating_laser_wavelength=inter.get("grating_laser_wavelength", 0.0),
        grating_laser_power=inter.get("grating_laser_power", 0.0),
    )
    laser = build(
        "recoil_laser", RecoilLaserSpec,
        wavelength_k=las["wavelength"], power_k=las["power"],
        waist_y=las["waist_y"], waist_x=las.get("waist_x", las["waist_y"]),
        distance_D=las["distance"], offset_y=las.get("offset_y", 0.0),
        power_err=las.get("power_err", 0.0), waist_y_err=las.get("waist_y_err", 0.0),
    )
    return build(
        "baseline", ExperimentConfig,
        molecule=molecule, recoil_laser=laser, interferometer=interferometer,
        velocity=values["velocity"]["model"],
        baseline_visibility=base["visibility"], baseline_mean_rate=base["mean_rate"],
        metadata={"source": str(path)},
    )


def resolve_config_path(name):
    """Existing file path, or the bundled fixture of that name."""
    p = Path(name)
    if p.exists():
        return p
    if p.name in BUNDLED and str(p) == p.name:
        return Path(str(resources.files("recoil_sigma") / "data" / p.name))
    raise ConfigError("config file not found", str(name))


def load_config(path):
    p = resolve_config_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    return parse_config_text(text, str(p))


def format_config(config: ExperimentConfig):
    """Config document with every value in SI at full precision."""
    mol, las, inter, vel = config.molecule, config.recoil_laser, config.interferometer, config.velocity
    if isinstance(vel, GaussianVelocity):
        model = f"gaussian v0={vel.v0!r} m/s sigma={vel.sigma_v!r} m/s"
    else:
        model = f"monochromatic v0={vel.v0!r} m/s"
    return "\n".join([
        "[molecule]",
        f"name = {mol.name}",
        f"mass = {mol.mass!r} kg",
        "",
        "[interferometer]",
        f"grating_period = {inter.grating_period_d!r} m",
        f"grating_separation = {inter.grating_separation_L!r} m",
        f"grating_laser_wavelength = {inter.grating_laser_wavelength!r} m",
        f"grating_laser_power = {inter.grating_laser_power!r} W",
        "",
        "[recoil_laser]",
        f"wavelength = {las.wavelength_k!r} m",
        f"power = {las.power_k!r} W",
        f"power_err = {las.power_err!r} W",
        f"waist_y = {las.waist_y!r} m",
        f"waist_y_err = {las.waist_y_err!r} m",
        f"waist_x = {las.waist_x!r} m",
        f"distance = {las.distance_D!r} m",
        f"offset_y = {las.offset_y!r} m",
        "",
        "[velocity]",
        f"model = {model}",
        "",
        "[baseline]",
        f"visibility = {config.baseline_visibility!r}",
        f"mean_rate = {config.baseline_mean_rate!r} 1/s",
        "",
    ])


def save_config(config, path):
    from .io import atomic_write_text

    atomic_write_text(path, format_config(config))


def config_to_dict(config: ExperimentConfig):
    """Resolved configuration as plain SI values (units in the key names)."""
    vel = config.velocity
    las, inter = config.recoil_laser, config.interferometer
    return {
        "molecule": {"name": config.molecule.name, "mass_kg": config.molecule.mass,
                     "mass_amu": config.molecule.mass_amu},
        "interferometer": {
            "grating_period_m": inter.grating_period_d,
            "grating_separation_m": inter.grating_separation_L,
            "grating_laser_wavelength_m": inter.grating_laser_wavelength,
            "grating_laser_power_w": inter.grating_laser_power,
        },
        "recoil_laser": {
            "wavelength_m": las.wavelength_k, "power_w": las.power_k, "power_err_w": las.power_err,
            "waist_y_m": las.waist_y, "waist_y_err_m": las.waist_y_err, "waist_x_m": las.waist_x,
            "distance_m": las.distance_D, "offset_y_m": las.offset_y,
        },
        "velocity": (
            {"model": "gaussian", "v0_m_per_s": vel.v0, "sigma_m_per_s": vel.sigma_v}
            if isinstance(vel, GaussianVelocity)
            else {"model": "monochromatic", "v0_m_per_s": vel.v0}
        ),
        "baseline": {"visibility": config.baseline_visibility,
                     "mean_rate_per_s": config.baseline_mean_rate},
    }


def config_digest(config: ExperimentConfig):
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
