import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from recoil_sigma import (
    FringeScan,
    MonochromaticVelocity,
    SimulationConfig,
    ValidationError,
    estimate_reduction,
    extract_visibility,
    fit_sigma,
    mean_photon_number,
    recoil_shift,
    reduction_curve,
    reduction_velocity_averaged,
    sample_ensemble,
    simulate_fringe_scan,
    simulate_reduction_curve,
)
from recoil_sigma.montecarlo import (
    CHUNK_SIZE,
    NOISE_MODES,
    Ensemble,
    EnsembleSample,
    default_offset_grid,
    mean_phasor,
    rng_stream,
    sample_poisson,
)

from conftest import SIGMA_REF

D_GRID = np.linspace(0.035, 0.055, 10)


@pytest.fixture(scope="module")
def sim(c70_config):
    return SimulationConfig(c70_config, SIGMA_REF, n_molecules=20_000, rng_seed=5)


def ensemble_equal(a, b):
    return all(np.array_equal(getattr(a, f.name), getattr(b, f.name)) for f in dataclasses.fields(Ensemble))


# ----------------------------------------------------------- SimulationConfig
@pytest.mark.parametrize("field,value", [
    ("true_sigma", -1e-22), ("n_molecules", 0), ("points_per_scan", 7), ("dwell_time", 0.0),
    ("repeats", 0), ("periods_per_scan", 0.5), ("ratio_err", 0.0), ("noise", "white"),
    ("rng_seed", -1), ("rng_seed", 2**64),
])
def test_simulation_config_validation(sim, field, value):
    with pytest.raises(ValidationError):
        sim.replace(**{field: value})


def test_noise_modes():
    assert NOISE_MODES == ("counting", "gaussian", "none")


def test_rng_streams_are_keyed():
    a = rng_stream(1, 2, 3).random(5)
    assert np.array_equal(a, rng_stream(1, 2, 3).random(5))
    assert not np.array_equal(a, rng_stream(1, 2, 4).random(5))
    assert not np.array_equal(a, rng_stream(2, 2, 3).random(5))


# -------------------------------------------------------------- sample_ensemble
def test_zero_sigma_absorbs_nothing(sim):
    ens = sample_ensemble(sim.replace(true_sigma=0.0))
    assert np.all(ens.absorbed_photons == 0) and np.all(ens.shift == 0.0)


def test_monochromatic_velocities_identical(c70_config, sim):
    mono = sim.replace(experiment=c70_config.monochromatic())
    ens = sample_ensemble(mono)
    assert np.all(ens.velocity == c70_config.velocity.v0)


def test_sample_fields(sim, c70_config):
    ens = sample_ensemble(sim)
    assert len(ens) == sim.n_molecules
    assert np.all(ens.velocity > 0) and np.all(ens.absorbed_photons >= 0)
    laser = c70_config.recoil_laser
    s = recoil_shift(c70_config.molecule, laser.wavelength_k, laser.distance_D, ens.velocity)
    np.testing.assert_array_equal(ens.shift, ens.absorbed_photons * s)
    assert np.all(ens.transverse_offset == laser.offset_y)


def test_velocity_moments(sim, c70_config):
    v = sample_ensemble(sim.replace(n_molecules=400_000)).velocity
    model = c70_config.velocity
    se = model.sigma_v / math.sqrt(v.size)
    assert abs(v.mean() - model.v0) < 4 * se
    assert abs(v.std() / model.sigma_v - 1) < 4 / math.sqrt(2 * v.size)


def test_poisson_moments_at_fixed_velocity(sim, c70_config):
    mono = sim.replace(experiment=c70_config.monochromatic(), n_molecules=1_000_000)
    n = sample_ensemble(mono).absorbed_photons.astype(float)
    lam = float(mean_photon_number(c70_config.recoil_laser, SIGMA_REF, c70_config.velocity.v0))
    N = n.size
    assert abs(n.mean() - lam) < 4 * math.sqrt(lam / N)
    # var(s^2) = (mu4 - sigma^4) / N with mu4 = lam (1 + 3 lam) for a Poisson law
    assert abs(n.var(ddof=1) - lam) < 4 * math.sqrt((lam + 2 * lam**2) / N)


def test_sample_poisson_large_mean_path():
    u = rng_stream(0, 9).random(50_000)
    lam = np.full(u.size, 55.0)
    n = sample_poisson(u, lam)
    np.testing.assert_array_equal(n, stats.poisson.ppf(u, lam).astype(np.int64))
    mixed = sample_poisson(u[:4], np.array([0.5, 55.0, 2.0, 80.0]))
    np.testing.assert_array_equal(mixed, stats.poisson.ppf(u[:4], [0.5, 55.0, 2.0, 80.0]))


def test_ensemble_deterministic(sim):
    assert ensemble_equal(sample_ensemble(sim), sample_ensemble(sim))
    assert not ensemble_equal(sample_ensemble(sim), sample_ensemble(sim.replace(rng_seed=6)))
    assert not ensemble_equal(sample_ensemble(sim), sample_ensemble(sim, tags=(1, 7)))


def test_ensemble_independent_of_thread_count(sim, monkeypatch):
    cfg = sim.replace(n_molecules=3 * CHUNK_SIZE + 17)
    monkeypatch.setenv("RECOIL_SIGMA_THREADS", "1")
    serial = sample_ensemble(cfg)
    monkeypatch.setenv("RECOIL_SIGMA_THREADS", "4")
    parallel = sample_ensemble(cfg)
    assert ensemble_equal(serial, parallel)


def test_ensemble_records_round_trip(sim):
    ens = sample_ensemble(sim.replace(n_molecules=50))
    records = list(ens)
    assert all(isinstance(r, EnsembleSample) for r in records)
    assert ensemble_equal(Ensemble.from_samples(records), ens)


# ------------------------------------------------------------ estimate_reduction
def test_estimate_zero_shifts():
    ens = Ensemble.from_samples([EnsembleSample(200.0, 0, 0.0, 0.0)] * 10)
    r, se = estimate_reduction(ens, 266e-9)
    assert r == pytest.approx(1.0, abs=1e-15) and se == pytest.approx(0.0, abs=1e-12)


def test_estimate_half_period_shifts():
    d = 266e-9
    r, _ = estimate_reduction([EnsembleSample(200.0, 1, d / 2, 0.0)] * 10, d)
    assert r == pytest.approx(1.0, abs=1e-15)
    assert mean_phasor([EnsembleSample(200.0, 1, d / 2, 0.0)] * 4, d) == pytest.approx(-1.0)


def test_estimate_needs_two_samples():
    with pytest.raises(ValidationError):
        estimate_reduction([EnsembleSample(200.0, 0, 0.0, 0.0)], 266e-9)
    with pytest.raises(ValidationError):
        estimate_reduction([EnsembleSample(200.0, 0, 0.0, 0.0)] * 2, 0.0)


def test_estimate_matches_quadrature_at_reference_point(c70_config):
    cfg = SimulationConfig(c70_config, SIGMA_REF, n_molecules=1_000_000, rng_seed=21)
    r, se = estimate_reduction(sample_ensemble(cfg), c70_config.interferometer.grating_period_d)
    assert abs(r - reduction_velocity_averaged(c70_config, SIGMA_REF)) < 3 * se


def test_standard_error_scales_with_ensemble_size(sim, c70_config):
    d = c70_config.interferometer.grating_period_d
    _, se1 = estimate_reduction(sample_ensemble(sim.replace(n_molecules=200_000)), d)
    _, se2 = estimate_reduction(sample_ensemble(sim.replace(n_molecules=400_000)), d)
    assert se1 / se2 == pytest.approx(math.sqrt(2), rel=0.02)


# ------------------------------------------------------------ simulate_fringe_scan
def test_offset_grid(sim, c70_config):
    x = default_offset_grid(sim)
    d = c70_config.interferometer.grating_period_d
    assert x.size == sim.points_per_scan and x[0] == 0.0
    assert x[-1] + (x[1] - x[0]) == pytest.approx(sim.periods_per_scan * d)


def test_unperturbed_scan_round_trip(sim, c70_config):
    scan = simulate_fringe_scan(sim.replace(dwell_time=1e6), perturbed=False)
    vis = extract_visibility(scan, c70_config.interferometer.grating_period_d)
    assert vis.visibility == pytest.approx(c70_config.baseline_visibility, rel=1e-3)
    exact = simulate_fringe_scan(sim.replace(noise="none"), perturbed=False)
    vis = extract_visibility(exact, c70_config.interferometer.grating_period_d)
    assert vis.visibility == pytest.approx(c70_config.baseline_visibility, rel=1e-12)


def test_vanishing_visibility_gives_flat_scan(sim, c70_config):
    # zero visibility is outside the config domain; 1e-12 is the limit case
    faint = dataclasses.replace(c70_config, baseline_visibility=1e-12)
    cfg = sim.replace(experiment=faint, points_per_scan=400, dwell_time=10.0)
    expected = faint.baseline_mean_rate * cfg.dwell_time
    exact = simulate_fringe_scan(cfg.replace(noise="none"), perturbed=False)
    np.testing.assert_allclose(exact.counts, expected, rtol=1e-11)
    counts = simulate_fringe_scan(cfg, perturbed=False).counts
    assert np.all(counts == np.round(counts))
    assert abs(counts.mean() - expected) < 4 * math.sqrt(expected / counts.size)
    # Poisson dispersion: sum of (c - mu)^2 / mu is chi-square with N dof
    disp = float(np.sum((counts - expected) ** 2) / expected)
    assert stats.chi2.ppf(1e-4, counts.size) < disp < stats.chi2.ppf(1 - 1e-4, counts.size)


def test_scan_deterministic(sim):
    a = simulate_fringe_scan(sim, tags=(3,))
    b = simulate_fringe_scan(sim, tags=(3,))
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.counts, simulate_fringe_scan(sim, tags=(4,)).counts)


def test_scan_uses_given_ensemble(sim, c70_config):
    cfg = sim.replace(noise="none")
    ens = sample_ensemble(cfg)
    scan = simulate_fringe_scan(cfg, ensemble=ens)
    vis = extract_visibility(scan, c70_config.interferometer.grating_period_d)
    r, _ = estimate_reduction(ens, c70_config.interferometer.grating_period_d)
    assert isinstance(scan, FringeScan)
    assert vis.visibility == pytest.approx(c70_config.baseline_visibility * r, rel=1e-10)


# ------------------------------------------------------- simulate_reduction_curve
def test_noiseless_zero_sigma_curve_is_unity(sim):
    curve = simulate_reduction_curve(sim.replace(true_sigma=0.0, noise="none"), D_GRID)
    assert np.all(curve.ratios == 1.0) and curve.flagged == ()


def test_noiseless_curve_equals_model(sim, c70_config):
    curve = simulate_reduction_curve(sim.replace(noise="none"), D_GRID)
    np.testing.assert_array_equal(curve.ratios, reduction_curve(c70_config, SIGMA_REF, D_GRID))
    assert np.all(curve.errors == sim.ratio_err)


def test_gaussian_mode_noise_level(sim, c70_config):
    grid = np.linspace(0.0, 0.1, 400)
    curve = simulate_reduction_curve(sim.replace(noise="gaussian", ratio_err=0.01), grid)
    resid = curve.ratios - reduction_curve(c70_config, SIGMA_REF, grid)
    assert abs(resid.mean()) < 4 * 0.01 / math.sqrt(grid.size)
    assert abs(resid.std(ddof=1) / 0.01 - 1) < 4 / math.sqrt(2 * grid.size)


def test_non_positive_points_are_flagged(sim):
    curve = simulate_reduction_curve(sim.replace(noise="gaussian", ratio_err=2.0, rng_seed=1), D_GRID)
    assert len(curve.points) + len(curve.flagged) == D_GRID.size
    assert curve.flagged and all("non-positive" in reason for _, reason in curve.flagged)
    flagged_d = {d for d, _ in curve.flagged}
    assert flagged_d.isdisjoint(curve.distances.tolist())


def test_all_flagged_raises(sim):
    # one point far below zero for roughly half of the seeds
    cfg = sim.replace(noise="gaussian", ratio_err=100.0)
    raised = 0
    for seed in range(20):
        try:
            simulate_reduction_curve(cfg.replace(rng_seed=seed), [0.04])
        except ValidationError as exc:
            assert "flagged" in str(exc)
            raised += 1
    assert 0 < raised < 20


def test_grid_outside_interferometer(sim, c70_config):
    with pytest.raises(ValidationError):
        simulate_reduction_curve(sim, [c70_config.interferometer.grating_separation_L])


def test_counting_curve_deterministic(sim):
    cfg = sim.replace(n_molecules=2000, repeats=3)
    a = simulate_reduction_curve(cfg, D_GRID[:3])
    b = simulate_reduction_curve(cfg, D_GRID[:3])
    assert np.array_equal(a.ratios, b.ratios) and np.array_equal(a.errors, b.errors)


def test_counting_point_consistent_with_model(sim, c70_config):
    curve = simulate_reduction_curve(sim.replace(rng_seed=77), [0.035, 0.045])
    model = reduction_curve(c70_config, SIGMA_REF, curve.distances)
    assert np.all(np.abs(curve.ratios - model) < 3 * curve.errors)


def test_doubling_molecules_shrinks_errors(c70_config):
    # bright beam: counting noise is negligible, so ensemble size sets the errors
    bright = dataclasses.replace(c70_config, baseline_mean_rate=1e10)
    cfg = SimulationConfig(bright, SIGMA_REF, n_molecules=500, repeats=40, rng_seed=3)
    e1 = simulate_reduction_curve(cfg, D_GRID).errors
    e2 = simulate_reduction_curve(cfg.replace(n_molecules=1000), D_GRID).errors
    ratio = math.sqrt(np.mean(e1**2) / np.mean(e2**2))
    assert ratio == pytest.approx(math.sqrt(2), rel=0.12)


def test_mono_beam_is_accepted(c70_config):
    mono = dataclasses.replace(c70_config, velocity=MonochromaticVelocity(c70_config.velocity.v0))
    cfg = SimulationConfig(mono, SIGMA_REF, n_molecules=1000, noise="none")
    curve = simulate_reduction_curve(cfg, D_GRID)
    np.testing.assert_allclose(curve.ratios, reduction_curve(mono, SIGMA_REF, D_GRID), rtol=1e-12)


@pytest.mark.slow
def test_full_pipeline_pulls(c70_config):
    pulls = []
    for seed in range(100):
        cfg = SimulationConfig(c70_config, SIGMA_REF, n_molecules=20_000, rng_seed=seed)
        fit = fit_sigma(simulate_reduction_curve(cfg, D_GRID))
        err = fit.stat_err_hi if fit.sigma_abs < SIGMA_REF else fit.stat_err_lo
        pulls.append((fit.sigma_abs - SIGMA_REF) / err)
    pulls = np.array(pulls)
    assert abs(pulls.mean()) < 0.3
    assert 0.7 <= pulls.std(ddof=1) <= 1.4
