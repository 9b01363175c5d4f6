"""Molecule-by-molecule simulation of recoil dephasing.

Every molecule gets a velocity from the beam model and a Poisson number of
absorbed photons; each photon shifts its fringe by ``s(v)``.  The contrast
ratio is the modulus of the ensemble-mean fringe phasor, which makes this
module an independent check of the quadrature in :mod:`recoil_sigma.physics`
as well as a generator of synthetic scans and reduction curves.

Random streams are Philox generators keyed on ``(seed, tag...)``.  Ensembles
are drawn in fixed-size chunks, each with its own key, so results do not
depend on how many worker threads are used.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernels, physics
from ._backend import worker_count
from .config import ExperimentConfig, GaussianVelocity, MonochromaticVelocity
from .errors import RecoilSigmaError, ValidationError
from .estimation import ReductionCurve
from .fringe import FringeScan, RatioPoint, extract_visibility, visibility_ratio

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 16
NOISE_MODES = ("counting", "gaussian", "none")

# stream tags
_ENSEMBLE, _SCAN, _GAUSS = 1, 2, 3


@dataclass(frozen=True)
class SimulationConfig:
    """Everything needed to reproduce a synthetic data set bit for bit.

    ``noise`` selects how reduction curves are produced: ``"counting"`` runs
    simulated fringe scans with Poisson counts through visibility extraction,
    ``"gaussian"`` adds N(0, ratio_err) to the exact model ratio, and
    ``"none"`` returns the exact model ratio.
    """

    experiment: ExperimentConfig
    true_sigma: float
    n_molecules: int = 100_000
    rng_seed: int = 0
    points_per_scan: int = 40
    dwell_time: float = 1.0
    repeats: int = 10
    periods_per_scan: float = 2.0
    ratio_err: float = 0.03
    noise: str = "counting"

    def __post_init__(self):
        if not self.true_sigma >= 0:
            raise ValidationError("true_sigma must be >= 0")
        if int(self.n_molecules) < 1:
            raise ValidationError("n_molecules must be >= 1")
        if int(self.points_per_scan) < 8:
            raise ValidationError("points_per_scan must be >= 8")
        if not self.dwell_time > 0:
            raise ValidationError("dwell_time must be > 0")
        if int(self.repeats) < 1:
            raise ValidationError("repeats must be >= 1")
        if not self.periods_per_scan >= 1:
            raise ValidationError("periods_per_scan must be >= 1")
        if not self.ratio_err > 0:
            raise ValidationError("ratio_err must be > 0")
        if self.noise not in NOISE_MODES:
            raise ValidationError(f"noise must be one of {NOISE_MODES}, got {self.noise!r}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValidationError("rng_seed must be a 64-bit unsigned integer")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def rng_stream(seed, *tags):
    """Independent generator for ``(seed, *tags)``; tags are non-negative ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, tags)])))


@dataclass(frozen=True)
class EnsembleSample:
    velocity: float
    absorbed_photons: int
    shift: float
    transverse_offset: float


@dataclass(frozen=True)
class Ensemble:
    """Column-oriented list of :class:`EnsembleSample`."""

    velocity: np.ndarray
    absorbed_photons: np.ndarray
    shift: np.ndarray
    transverse_offset: np.ndarray

    def __len__(self):
        return self.velocity.size

    def __getitem__(self, i):
        return EnsembleSample(float(self.velocity[i]), int(self.absorbed_photons[i]),
                              float(self.shift[i]), float(self.transverse_offset[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls(
            np.array([s.velocity for s in samples], dtype=float),
            np.array([s.absorbed_photons for s in samples], dtype=np.int64),
            np.array([s.shift for s in samples], dtype=float),
            np.array([s.transverse_offset for s in samples], dtype=float),
        )


def sample_poisson(u, lam):
    """Inversion sampling: the smallest n with CDF(n; lam) >= u."""
    lam = np.asarray(lam, dtype=float)
    u = np.asarray(u, dtype=float)
    small = lam <= _kernels.POISSON_SMALL_MAX
    if small.all():
        return _kernels.poisson_small(u, lam)
    n = np.empty(u.shape, dtype=np.int64)
    n[small] = _kernels.poisson_small(u[small], lam[small])
    n[~small] = stats.poisson.ppf(u[~small], lam[~small]).astype(np.int64)
    return n


def _sample_velocities(model, u):
    if isinstance(model, MonochromaticVelocity):
        return np.full(u.shape, model.v0)
    if isinstance(model, GaussianVelocity):
        return model.ppf(u)
    raise TypeError(f"unsupported velocity model {type(model).__name__}")


def _sample_chunk(experiment, sigma, seed, tags, index, size):
    gen = rng_stream(seed, *tags, index)
    u_v = gen.random(size)
    u_n = gen.random(size)
    laser = experiment.recoil_laser
    v = _sample_velocities(experiment.velocity, u_v)
    lam = physics.mean_photon_number(laser, sigma, v)
    n = sample_poisson(u_n, np.atleast_1d(lam))
    shift = n * physics.recoil_shift(experiment.molecule, laser.wavelength_k, laser.distance_D, v)
    return v, n, shift


def sample_ensemble(config: SimulationConfig, tags=(_ENSEMBLE,)):
    """Draw ``config.n_molecules`` molecules for the configured laser position.

    ``tags`` selects an independent random stream under the same seed.
    """
    n_total = int(config.n_molecules)
    sizes = [CHUNK_SIZE] * (n_total // CHUNK_SIZE)
    if n_total % CHUNK_SIZE:
        sizes.append(n_total % CHUNK_SIZE)
    exp = config.experiment
    jobs = [(exp, config.true_sigma, config.rng_seed, tuple(tags), i, s) for i, s in enumerate(sizes)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _sample_chunk(*job), jobs))
    else:
        parts = [_sample_chunk(*job) for job in jobs]
    v = np.concatenate([p[0] for p in parts])
    n = np.concatenate([p[1] for p in parts])
    shift = np.concatenate([p[2] for p in parts])
    offset = np.full(v.shape, exp.recoil_laser.offset_y)
    return Ensemble(v, n, shift, offset)


def _as_ensemble(samples):
    return samples if isinstance(samples, Ensemble) else Ensemble.from_samples(samples)


def _phases(samples, period_d):
    ens = _as_ensemble(samples)
    return 2.0 * math.pi * (np.mod(ens.shift, period_d) / period_d)


def estimate_reduction(samples, period_d):
    """Modulus of the mean fringe phasor and its jackknife standard error."""
    if len(samples) < 2:
        raise ValidationError("estimate_reduction needs at least 2 samples")
    if not period_d > 0:
        raise ValidationError("period_d must be > 0")
    return _kernels.phasor_jackknife(_phases(samples, period_d))


def mean_phasor(samples, period_d):
    """Ensemble mean of ``exp(2 pi i shift / d)``."""
    ph = _phases(samples, period_d)
    return complex(np.cos(ph).sum(), np.sin(ph).sum()) / ph.size


def default_offset_grid(config: SimulationConfig):
    d = config.experiment.interferometer.grating_period_d
    n = int(config.points_per_scan)
    return np.arange(n) * (config.periods_per_scan * d / n)


def simulate_fringe_scan(config: SimulationConfig, grating_offset_grid=None, perturbed=True,
                         tags=(0,), ensemble=None):
    """Simulated G3 scan, ``rate = mu (1 + V Re[<exp(2 pi i (x3 + shift) / d)>])``.

    With ``config.noise == "none"`` the expected counts are returned unrounded.
    A precomputed ``ensemble`` may be passed for perturbed scans.
    """
    exp = config.experiment
    d = exp.interferometer.grating_period_d
    x = default_offset_grid(config) if grating_offset_grid is None else np.asarray(grating_offset_grid, float)
    if perturbed:
        if ensemble is None:
            ensemble = sample_ensemble(config, tags=(_ENSEMBLE, *tags))
        phasor = mean_phasor(ensemble, d)
    else:
        phasor = 1.0 + 0.0j
    fringe = np.real(np.exp(2j * math.pi * np.mod(x, d) / d) * phasor)
    rate = exp.baseline_mean_rate * (1.0 + exp.baseline_visibility * fringe)
    expected = rate * config.dwell_time
    if config.noise == "none":
        counts = expected
    else:
        gen = rng_stream(config.rng_seed, _SCAN, *tags, int(bool(perturbed)))
        counts = gen.poisson(expected).astype(float)
    return FringeScan(x, counts, config.dwell_time,
                      metadata={"perturbed": bool(perturbed), "seed": int(config.rng_seed)})


def _summed_ratio(ref_counts, pert_counts, positions, dwell, period):
    """V'/V from scans summed over the given repeats."""
    n = ref_counts.shape[0]
    ref = extract_visibility(FringeScan(positions, ref_counts.sum(axis=0), n * dwell), period)
    pert = extract_visibility(FringeScan(positions, pert_counts.sum(axis=0), n * dwell), period)
    return visibility_ratio(pert, ref)


def _counting_point(config, i, d_grid_value, period):
    sim = config.replace(experiment=config.experiment.at_distance(d_grid_value))
    ref_counts, pert_counts = [], []
    for r in range(int(config.repeats)):
        tags = (i, r)
        ens = sample_ensemble(sim, tags=(_ENSEMBLE, *tags))
        ref = simulate_fringe_scan(sim, perturbed=False, tags=tags)
        ref_counts.append(ref.counts)
        pert_counts.append(simulate_fringe_scan(sim, perturbed=True, tags=tags, ensemble=ens).counts)
    ref_counts, pert_counts = np.array(ref_counts), np.array(pert_counts)
    x, dwell = ref.positions, sim.dwell_time
    full = _summed_ratio(ref_counts, pert_counts, x, dwell, period)
    n = ref_counts.shape[0]
    if n < 2:
        return RatioPoint(float(d_grid_value), full.ratio, full.ratio_err)
    # Leave-one-out jackknife over repeats: removes the O(1/n) bias of a ratio
    # of fitted amplitudes and gives the standard error over repeats.
    keep = ~np.eye(n, dtype=bool)
    loo = np.array([_summed_ratio(ref_counts[k], pert_counts[k], x, dwell, period).ratio
                    for k in keep])
    ratio = n * full.ratio - (n - 1) * loo.mean()
    err = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return RatioPoint(float(d_grid_value), float(ratio), float(err))


def simulate_reduction_curve(config: SimulationConfig, D_grid):
    """Synthetic contrast ratios versus laser distance.

    In counting mode each distance gets ``config.repeats`` pairs of reference
    and perturbed scans.  The point is the visibility ratio of the scans
    summed over repeats, jackknife bias-corrected, with the jackknife
    standard error over repeats.  Points whose analysis fails are listed in
    ``ReductionCurve.flagged`` with the reason instead of being dropped silently.
    """
    exp = config.experiment
    D = np.asarray(D_grid, dtype=float)
    L = exp.interferometer.grating_separation_L
    if np.any((D < 0) | (D >= L)):
        raise ValidationError(f"distance grid must lie within [0, L = {L!r} m)")
    period = exp.interferometer.grating_period_d
    points, flagged = [], []

    if config.noise == "counting":
        for i, d in enumerate(D):
            try:
                points.append(_counting_point(config, i, d, period))
            except RecoilSigmaError as exc:
                logger.warning("distance %.4g m flagged: %s", d, exc)
                flagged.append((float(d), f"{type(exc).__name__}: {exc}"))
    else:
        model = physics.reduction_curve(exp, config.true_sigma, D)
        if config.noise == "gaussian":
            model = model + config.ratio_err * rng_stream(config.rng_seed, _GAUSS).standard_normal(D.size)
        for d, r in zip(D, model):
            if r > 0:
                points.append(RatioPoint(float(d), float(r), float(config.ratio_err)))
            else:
                flagged.append((float(d), f"non-positive simulated ratio {r:.4g}"))
    if not points:
        raise ValidationError("every simulated point was flagged")
    return ReductionCurve(points, exp, flagged)
