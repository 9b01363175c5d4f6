"""Visibility extraction from G3 scans and the auxiliary ratio fits.

The count rate behind G3 is modelled as ``mu + A cos(2 pi x / d + phi)``
with Poisson weights; contrast ratios are then fitted against laser
offset, laser power, or checked for constancy.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._lsq import levenberg_marquardt
from .errors import (
    FitError,
    ScanCoverageError,
    ValidationError,
    VisibilityRangeError,
)

logger = logging.getLogger(__name__)

MIN_SCAN_POINTS = 8


@dataclass(frozen=True)
class FringeScan:
    """Counts recorded at a series of lateral G3 positions.

    ``counts`` are detector counts per dwell.  Measured data are integers;
    expected (noise-free) counts from the simulator may be non-integer.
    """

    positions: np.ndarray
    counts: np.ndarray
    dwell_time: float
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "counts", c)
        if x.ndim != 1 or x.shape != c.shape:
            raise ValidationError("positions and counts must be 1-D arrays of equal length")
        if x.size < MIN_SCAN_POINTS:
            raise ValidationError(f"a fringe scan needs at least {MIN_SCAN_POINTS} points, got {x.size}")
        if not (np.isfinite(self.dwell_time) and self.dwell_time > 0):
            raise ValidationError("dwell_time must be > 0")
        if not np.all(np.isfinite(x)):
            raise ValidationError("positions must be finite")
        if np.any(~np.isfinite(c)) or np.any(c < 0):
            raise ValidationError("counts must be finite and non-negative")
        dx = np.diff(x)
        if not (np.all(dx > 0) or np.all(dx < 0)):
            raise ValidationError("positions must be strictly monotonic")


@dataclass(frozen=True)
class VisibilityResult:
    mean_mu: float
    amplitude_A: float
    phase: float
    visibility: float
    visibility_err: float
    chi2: float
    dof: int
    period_d: float
    period_free: bool = False


@dataclass(frozen=True)
class RatioPoint:
    """A contrast ratio V'/V measured at some abscissa (offset, distance or power)."""

    abscissa: float
    ratio: float
    ratio_err: float

    def __post_init__(self):
        if not (np.isfinite(self.ratio) and self.ratio > 0):
            raise ValidationError(f"ratio must be > 0, got {self.ratio!r}")
        if not (np.isfinite(self.ratio_err) and self.ratio_err > 0):
            raise ValidationError(f"ratio_err must be > 0, got {self.ratio_err!r}")


def _as_arrays(points):
    x = np.array([p.abscissa for p in points], dtype=float)
    r = np.array([p.ratio for p in points], dtype=float)
    e = np.array([p.ratio_err for p in points], dtype=float)
    return x, r, e


# --------------------------------------------------------------------- visibility
def extract_visibility(scan: FringeScan, period_d, period_mode="fixed"):
    """Fit ``mu + A cos(2 pi x / d + phi)`` to a fringe scan.

    Parameters
    ----------
    scan : FringeScan
    period_d : float
        Grating period in m; held fixed in ``"fixed"`` mode and used as the
        starting value in ``"free"`` mode.
    period_mode : {"fixed", "free"}

    Returns
    -------
    VisibilityResult
        ``visibility = A / mu`` with a first-order error from the fit covariance.

    Raises
    ------
    ScanCoverageError
        The scan spans less than one period.
    VisibilityRangeError
        The fitted visibility exceeds 1 or the mean rate is not positive.
    ConvergenceError
        The fit did not converge.
    """
    if period_mode not in ("fixed", "free"):
        raise ValueError(f"period_mode must be 'fixed' or 'free', got {period_mode!r}")
    if not period_d > 0:
        raise ValidationError("period_d must be > 0")
    x = scan.positions
    step = float(np.median(np.abs(np.diff(x))))
    span = abs(x[-1] - x[0]) + step
    if span < period_d * (1.0 - 1e-9):
        raise ScanCoverageError(
            f"scan covers {span:.4g} m, less than one period of {period_d:.4g} m"
        )

    rate = scan.counts / scan.dwell_time
    sigma = np.sqrt(np.maximum(scan.counts, 1.0)) / scan.dwell_time
    w = 1.0 / sigma
    xc = float(np.mean(x))
    u = (x - xc) / period_d  # position in units of the nominal period

    # discrete Fourier component at the nominal period seeds the fit
    c0, s0 = np.cos(2 * math.pi * u), np.sin(2 * math.pi * u)
    mu0 = float(np.mean(rate))
    a0 = 2.0 * float(np.mean(rate * c0))
    b0 = 2.0 * float(np.mean(rate * s0))
    rate_scale = max(mu0, 1e-300)

    if period_mode == "fixed":
        def fun(p):
            mu, a, b = p
            model = mu + a * c0 + b * s0
            J = np.column_stack([np.ones_like(u), c0, s0]) * w[:, None]
            return (model - rate) * w, J

        fit = levenberg_marquardt(fun, [mu0, a0, b0], scale=[rate_scale] * 3)
        mu, a, b = fit.params
        q = 1.0
    else:
        def fun(p):
            mu, a, b, q = p
            arg = 2 * math.pi * u / q
            c, s = np.cos(arg), np.sin(arg)
            model = mu + a * c + b * s
            dq = (a * s - b * c) * arg / q
            J = np.column_stack([np.ones_like(u), c, s, dq]) * w[:, None]
            return (model - rate) * w, J

        fit = levenberg_marquardt(fun, [mu0, a0, b0, 1.0], scale=[rate_scale] * 3 + [1.0])
        mu, a, b, q = fit.params
        if not q > 0:
            raise FitError("fitted fringe period is not positive")

    if not mu > 0:
        raise VisibilityRangeError(f"fitted mean rate {mu:.4g} is not positive")
    cov = fit.covariance()[:3, :3]
    amp = math.hypot(a, b)
    vis = amp / mu
    if vis > 1.0:
        raise VisibilityRangeError(f"fitted visibility {vis:.4f} exceeds 1")
    if amp > 0:
        grad = np.array([-amp / mu**2, a / (amp * mu), b / (amp * mu)])
        var = float(grad @ cov @ grad)
    else:
        # direction of a zero amplitude is undefined; take the widest direction
        var = float(np.linalg.eigvalsh(cov[1:, 1:]).max()) / mu**2
    d_fit = period_d * q
    phase = math.atan2(-b, a) - 2 * math.pi * xc / d_fit
    phase = (phase + math.pi) % (2 * math.pi) - math.pi
    return VisibilityResult(
        mean_mu=float(mu),
        amplitude_A=float(amp),
        phase=float(phase),
        visibility=float(vis),
        visibility_err=math.sqrt(max(var, 0.0)),
        chi2=float(fit.chi2),
        dof=int(x.size - fit.params.size),
        period_d=float(d_fit),
        period_free=period_mode == "free",
    )


def visibility_ratio(perturbed: VisibilityResult, reference: VisibilityResult, abscissa=math.nan):
    """Contrast ratio V'/V with relative errors added in quadrature."""
    if not reference.visibility > 0:
        raise ValidationError("reference visibility must be > 0")
    ratio = perturbed.visibility / reference.visibility
    rel_p = perturbed.visibility_err / perturbed.visibility if perturbed.visibility > 0 else math.inf
    rel_r = reference.visibility_err / reference.visibility
    return RatioPoint(abscissa, ratio, ratio * math.hypot(rel_p, rel_r))


# ---------------------------------------------------------------- offset profile
@dataclass(frozen=True)
class OffsetFit:
    center_y: float
    n_eff: float
    waist: float
    chi2: float
    dof: int
    center_err: float
    n_eff_err: float
    waist_err: float
    waist_free: bool


def offset_profile(y, n_eff, center_y, waist):
    """Contrast ratio for a laser displaced vertically: ``exp(-n_eff exp(-2 (y - y0)^2 / w^2))``."""
    y = np.asarray(y, dtype=float)
    return np.exp(-n_eff * np.exp(-2.0 * (y - center_y) ** 2 / waist**2))


def fit_offset_profile(points, waist, waist_mode="fixed"):
    """Fit the Gaussian depletion profile of a vertical laser scan.

    ``n_eff`` is the on-axis value of ``-ln(V'/V)``; ``waist`` is the 1/e^2
    intensity radius, held at its input value in ``"fixed"`` mode.
    """
    if waist_mode not in ("fixed", "free"):
        raise ValueError(f"waist_mode must be 'fixed' or 'free', got {waist_mode!r}")
    if len(points) < 4:
        raise ValidationError("an offset profile fit needs at least 4 points")
    if not waist > 0:
        raise ValidationError("waist must be > 0")
    y, r, e = _as_arrays(points)
    if np.unique(y).size < 3:
        raise ValidationError("offset abscissas are degenerate (fewer than 3 distinct values)")
    w = 1.0 / e

    i_min = int(np.argmin(r))
    y0 = float(y[i_min])
    n0 = max(-math.log(min(r[i_min], 1.0)), 0.0)
    span = float(np.ptp(y))
    free = waist_mode == "free"

    def fun(p):
        n, yc = p[0], p[1]
        ww = p[2] if free else waist
        g = np.exp(-2.0 * (y - yc) ** 2 / ww**2)
        m = np.exp(-n * g)
        cols = [-g * m, -n * m * g * 4.0 * (y - yc) / ww**2]
        if free:
            cols.append(-n * m * g * 4.0 * (y - yc) ** 2 / ww**3)
        return (m - r) * w, np.column_stack(cols) * w[:, None]

    p0 = [n0, y0] + ([waist] if free else [])
    scale = [1.0, span] + ([waist] if free else [])
    fit = levenberg_marquardt(fun, p0, scale=scale)
    cov = fit.covariance()
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return OffsetFit(
        center_y=float(fit.params[1]),
        n_eff=float(fit.params[0]),
        waist=float(abs(fit.params[2])) if free else float(waist),
        chi2=float(fit.chi2),
        dof=int(y.size - fit.params.size),
        center_err=float(errs[1]),
        n_eff_err=float(errs[0]),
        waist_err=float(errs[2]) if free else 0.0,
        waist_free=free,
    )


# ------------------------------------------------------------------- power scan
@dataclass(frozen=True)
class PowerFit:
    slope: float  # 1/W
    intercept: float
    slope_err: float
    intercept_err: float
    chi2: float
    dof: int
    max_minus_log: float
    n_rejected: int


def fit_power_linearity(points):
    """Weighted straight-line fit of ``-ln(V'/V)`` against recoil laser power."""
    P, r, e = _as_arrays(points)
    bad = ~(r > 0)
    if bad.any():
        logger.warning("rejecting %d power-scan points with non-positive ratio", int(bad.sum()))
    P, r, e = P[~bad], r[~bad], e[~bad]
    if P.size < 3:
        raise ValidationError("a power-linearity fit needs at least 3 usable points")
    if np.any(P < 0):
        raise ValidationError("powers must be >= 0")
    if np.ptp(P) == 0:
        raise ValidationError("powers must not all be equal")

    y = -np.log(r)
    sy = e / r
    wts = 1.0 / sy
    p_scale = float(np.max(np.abs(P)))
    design = np.column_stack([np.ones_like(P), P / p_scale]) * wts[:, None]
    coef, *_ = np.linalg.lstsq(design, y * wts, rcond=None)
    intercept, slope = float(coef[0]), float(coef[1]) / p_scale
    cov = np.linalg.inv(design.T @ design)
    resid = (y - intercept - slope * P) * wts
    return PowerFit(
        slope=slope,
        intercept=intercept,
        slope_err=math.sqrt(cov[1, 1]) / p_scale,
        intercept_err=math.sqrt(cov[0, 0]),
        chi2=float(resid @ resid),
        dof=int(P.size - 2),
        max_minus_log=slope * float(P.max()),
        n_rejected=int(bad.sum()),
    )


# -------------------------------------------------------------------- constancy
@dataclass(frozen=True)
class ConstancyResult:
    weighted_mean: float
    mean_err: float
    chi2: float
    dof: int
    consistent: bool
    chi2_threshold: float


def constancy_check(points, confidence=0.95):
    """Inverse-variance weighted mean and a chi-square test of a constant ratio."""
    if len(points) < 2:
        raise ValidationError("a constancy check needs at least 2 points")
    _, r, e = _as_arrays(points)
    wts = 1.0 / e**2
    mean = float(np.sum(wts * r) / np.sum(wts))
    chi2 = float(np.sum(wts * (r - mean) ** 2))
    dof = r.size - 1
    threshold = float(stats.chi2.ppf(confidence, dof))
    return ConstancyResult(mean, float(1.0 / math.sqrt(np.sum(wts))), chi2, dof, chi2 <= threshold, threshold)
