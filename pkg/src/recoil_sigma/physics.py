r"""Photon-recoil dephasing of a near-field interference pattern.

Mean photon number
------------------
The recoil laser has a Gaussian intensity profile with 1/e^2 radii w_x (along
the molecular flight direction) and w_y::

    I(x, y) = 2 P / (pi w_x w_y) * exp(-2 x^2 / w_x^2 - 2 y^2 / w_y^2)

A molecule at height y crossing with speed v absorbs on average::

    n0 = sigma lambda / (h c) * integral I(x, y) dx / v
       = sqrt(2/pi) * sigma lambda P / (h c w_y v) * exp(-2 y^2 / w_y^2)

The x-integral contributes ``w_x sqrt(pi/2)`` and cancels the ``1/w_x`` of
the peak intensity, which is why ``waist_x`` never appears below.

Fringe shift and contrast
-------------------------
Each absorbed photon displaces the molecule in the G3 plane by
``s = h D / (m v lambda_k)``.  With Poisson photon statistics the mean fringe
phasor at fixed velocity is ``exp(-n0 (1 - exp(2 pi i s / d)))``; the
observed contrast ratio is the modulus of its average over the velocity
distribution (average first, modulus second).
"""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from . import quadrature
from .config import ExperimentConfig, GaussianVelocity, MonochromaticVelocity
from .constants import C, H
from .errors import DomainError

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# Fraction of the quadrature tolerance granted to the cycle-averaged low-velocity tail.
_TAIL_TOLERANCE_SHARE = 1e-1


def _check_velocity(v):
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise DomainError("velocity must be > 0")
    return v


def _maybe_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def offset_intensity_factor(offset_y, waist_y):
    """Relative peak intensity seen by a beam displaced ``offset_y`` from the laser axis."""
    if not waist_y > 0:
        raise DomainError("waist_y must be > 0")
    offset_y = np.asarray(offset_y, dtype=float)
    return _maybe_scalar(np.exp(-2.0 * offset_y**2 / waist_y**2))


def photon_number_coefficient(laser, sigma_abs):
    """n0 * v, i.e. the mean photon number of a molecule moving at 1 m/s."""
    if not sigma_abs >= 0:
        raise DomainError(f"sigma_abs must be >= 0, got {sigma_abs!r}")
    return (
        SQRT_2_OVER_PI * sigma_abs * laser.wavelength_k * laser.power_k
        / (H * C * laser.waist_y)
        * offset_intensity_factor(laser.offset_y, laser.waist_y)
    )


def mean_photon_number(laser, sigma_abs, v):
    """Mean number of photons absorbed while crossing the recoil laser.

    Parameters
    ----------
    laser : RecoilLaserSpec
    sigma_abs : float
        Absorption cross section in m^2.
    v : float or ndarray
        Longitudinal velocity in m/s.

    Returns
    -------
    float or ndarray
        n0, linear in ``sigma_abs`` and ``laser.power_k``, proportional to ``1/v``.
    """
    v = _check_velocity(v)
    return _maybe_scalar(photon_number_coefficient(laser, sigma_abs) / v)


def recoil_shift(molecule, wavelength_k, distance_D, v):
    """Fringe-plane displacement per absorbed photon, ``h D / (m v lambda_k)``."""
    v = _check_velocity(v)
    if not distance_D >= 0:
        raise DomainError("distance_D must be >= 0")
    if not wavelength_k > 0:
        raise DomainError("wavelength_k must be > 0")
    return _maybe_scalar(H * distance_D / (molecule.mass * v * wavelength_k))


def reduction_monochromatic(n0, s, period_d):
    """Contrast ratio ``exp(-n0 (1 - cos(2 pi s / d)))`` for a single velocity."""
    n0 = np.asarray(n0, dtype=float)
    if np.any(~(n0 >= 0)):
        raise DomainError("n0 must be >= 0")
    if not period_d > 0:
        raise DomainError("period_d must be > 0")
    # reduce the phase modulo one period before the cosine to keep s -> s + d exact
    frac = np.mod(np.asarray(s, dtype=float), period_d) / period_d
    return _maybe_scalar(np.exp(-n0 * (1.0 - np.cos(2.0 * math.pi * frac))))


def reduction_asymptotic(n0):
    """Large-distance limit ``exp(-n0)``.

    Only meaningful when the laser sits many revival periods behind G1
    (D much larger than twice the first-minimum distance), where the fringe
    phase is washed out by the velocity spread.
    """
    n0 = np.asarray(n0, dtype=float)
    if np.any(~(n0 >= 0)):
        raise DomainError("n0 must be >= 0")
    return _maybe_scalar(np.exp(-n0))


def first_minimum_distance(interferometer, molecule, wavelength_k, v0):
    """Laser distance at which one recoil shifts the pattern by half a period."""
    if not (v0 > 0 and wavelength_k > 0):
        raise DomainError("v0 and wavelength_k must be > 0")
    return interferometer.grating_period_d * molecule.mass * v0 * wavelength_k / (2.0 * H)


def revival_period(interferometer, molecule, wavelength_k, v0):
    return 2.0 * first_minimum_distance(interferometer, molecule, wavelength_k, v0)


def phase_coefficient(config):
    """Fringe phase per absorbed photon times velocity, ``2 pi h D / (m lambda_k d)``."""
    laser = config.recoil_laser
    if laser.distance_D == 0:
        return 0.0
    return (
        2.0 * math.pi * H * laser.distance_D
        / (config.molecule.mass * laser.wavelength_k * config.interferometer.grating_period_d)
    )


def _tail_split_velocity(model, K, tol):
    """Velocity below which the fringe phase is replaced by its cycle average.

    The neglected oscillatory remainder is bounded by ``P(v) v^2 / K`` at the
    split point; the split is placed where that bound drops to ``tol``.
    """
    lo, _ = model.domain()
    if lo > 0 or K == 0:
        return lo

    # solved in log v: for a tiny K the root lies many decades below v0
    log_tol_k = math.log(tol) + math.log(K)

    def excess(x):
        return math.log(float(model.pdf(math.exp(x)))) + 2.0 * x - log_tol_k

    x_hi = math.log(model.v0)
    if excess(x_hi) <= 0:
        return model.v0
    x_lo = math.log(np.finfo(float).tiny)
    if excess(x_lo) > 0:  # pragma: no cover - needs K below ~1e-600
        return math.exp(x_lo)
    return math.exp(optimize.brentq(excess, x_lo, x_hi, xtol=1e-12))


def fringe_phasor(config, sigma_abs, rtol=quadrature.DEFAULT_RTOL, mesh_refine=1):
    """Velocity-averaged mean fringe phasor (complex).

    Its modulus is the contrast ratio, its argument the mean fringe shift
    in radians.  ``mesh_refine`` multiplies the number of initial panels.
    """
    if not sigma_abs >= 0:
        raise DomainError(f"sigma_abs must be >= 0, got {sigma_abs!r}")
    N = photon_number_coefficient(config.recoil_laser, sigma_abs)
    K = phase_coefficient(config)
    model = config.velocity
    if N == 0 or K == 0:
        return complex(1.0, 0.0)

    if isinstance(model, MonochromaticVelocity):
        n0 = N / model.v0
        phase = K / model.v0
        return complex(np.exp(-n0 * (1.0 - np.exp(1j * phase))))
    if not isinstance(model, GaussianVelocity):
        raise TypeError(f"unsupported velocity model {type(model).__name__}")

    lo, hi = model.domain()
    v0, sv = model.v0, model.sigma_v
    amp = 1.0 / (math.sqrt(2.0 * math.pi) * sv * model.norm)
    params = (v0, sv, amp, N, K)

    v_split = _tail_split_velocity(model, K, _TAIL_TOLERANCE_SHARE * rtol)
    t_lo, t_hi = 1.0 / hi, 1.0 / v_split
    periods = K * (t_hi - t_lo) / (2.0 * math.pi)
    n_uniform = max(16, int(math.ceil(periods))) * int(mesh_refine)
    # the kernel variable is u = 1/v - 1/v0; the core points 1/(v0 + k sv) - 1/v0
    # are formed as -k sv / (v0 (v0 + k sv)) to keep narrow beams resolved
    ks = np.arange(-7, 8)
    core_v = v0 + ks * sv
    inside = (core_v > v_split) & (core_v < hi)
    core_u = -ks[inside] * sv / (v0 * core_v[inside])
    u_lo = -(hi - v0) / (v0 * hi)
    u_hi = (v0 - v_split) / (v0 * v_split)
    # beyond the core, panels at most double in t so that no panel spans the slow
    # decay of the low-velocity wing in one step
    t_core = 1.0 / core_v[inside].min()
    n_geom = max(0, int(math.ceil(math.log2(t_hi / t_core))))
    geom_u = t_core * np.exp2(np.arange(1, n_geom)) - 1.0 / v0
    edges = np.unique(np.concatenate([np.linspace(u_lo, u_hi, n_uniform + 1), core_u, geom_u]))
    main = quadrature.integrate(edges, 0, params, rtol=rtol)

    total = main.value
    if v_split > lo:
        tail_edges = np.linspace(lo, v_split, 4 * int(mesh_refine) + 1)
        tail = quadrature.integrate(tail_edges, 1, params, rtol=rtol, atol=quadrature.DEFAULT_ATOL)
        total += tail.value
    return complex(total)


def reduction_velocity_averaged(config, sigma_abs, rtol=quadrature.DEFAULT_RTOL, mesh_refine=1):
    """Contrast ratio averaged over the configured velocity distribution.

    Evaluates ``|int P(v) exp(-n0(v) [1 - exp(2 pi i s(v) / d)]) dv|`` by
    adaptive Gauss-Kronrod quadrature in the variable 1/v, in which the fringe
    phase is linear.  For the monochromatic model this is the closed form.

    Raises
    ------
    DomainError
        For a negative cross section.
    QuadratureError
        When the integral does not converge to ``rtol``.
    """
    if isinstance(config.velocity, MonochromaticVelocity):
        v0 = config.velocity.v0
        laser = config.recoil_laser
        return float(reduction_monochromatic(
            mean_photon_number(laser, sigma_abs, v0),
            recoil_shift(config.molecule, laser.wavelength_k, laser.distance_D, v0),
            config.interferometer.grating_period_d,
        ))
    value = abs(fringe_phasor(config, sigma_abs, rtol=rtol, mesh_refine=mesh_refine))
    return min(value, 1.0)


def reduction_curve(config: ExperimentConfig, sigma_abs, distances, **kw):
    """``reduction_velocity_averaged`` tabulated over laser distances."""
    return np.array([reduction_velocity_averaged(config.at_distance(D), sigma_abs, **kw)
                     for D in np.asarray(distances, dtype=float)])
