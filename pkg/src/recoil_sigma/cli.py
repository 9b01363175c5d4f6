"""``recoil-sigma`` command-line front end.

Exit codes: 0 success, 1 usage or parse error, 2 data or validation error,
3 numerical failure.  Failures print one JSON object on stderr::

    {"error": {"type": "ConfigError", "message": "...", "exit_code": 1}}

Dimensional flags accept either a bare SI number or a value with a unit,
e.g. ``--distance 3.5cm`` or ``--distance "3.5 cm"``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, estimation, fringe, io, montecarlo, physics
from .cfgfile import load_config, parse_quantity, resolve_config_path
from .constants import C, H
from .errors import (
    ConfigError,
    DomainError,
    NumericalError,
    RecoilSigmaError,
    ValidationError,
    VisibilityRangeError,
)

logger = logging.getLogger("recoil_sigma")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _quantity(kind):
    def convert(text):
        try:
            return parse_quantity(text, kind)
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    convert.__name__ = f"{kind} quantity"
    return convert


_length = _quantity("length")
_power = _quantity("power")
_velocity = _quantity("velocity")
_area = _quantity("area")


def _probability(text):
    x = float(text)
    if not 0 < x < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return x


# ------------------------------------------------------------------- output
def _emit_json(args, kind, result, config=None, inputs=(), seed=None):
    manifest = io.make_manifest(config, command=args.command_line, inputs=inputs, seed=seed)
    text = io.dumps(io.result_document(kind, result, manifest))
    if args.out:
        io.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _emit_text(args, text):
    if args.out:
        io.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _config_inputs(args):
    return [str(resolve_config_path(args.config))]


# ------------------------------------------------------------------ commands
def cmd_dmin(args):
    cfg = load_config(args.config)
    laser, v0 = cfg.recoil_laser, cfg.velocity.v0
    dmin = physics.first_minimum_distance(cfg.interferometer, cfg.molecule, laser.wavelength_k, v0)
    _emit_json(args, "dmin", {
        "first_minimum_distance_m": dmin,
        "revival_period_m": physics.revival_period(cfg.interferometer, cfg.molecule, laser.wavelength_k, v0),
        "v0_m_per_s": v0,
        "grating_period_m": cfg.interferometer.grating_period_d,
        "wavelength_m": laser.wavelength_k,
        "mass_kg": cfg.molecule.mass,
    }, cfg, _config_inputs(args))


def cmd_predict(args):
    cfg = load_config(args.config)
    if args.points < 1:
        raise ValidationError("--points must be >= 1")
    if not 0 <= args.dmin <= args.dmax:
        raise ValidationError("need 0 <= --dmin <= --dmax")
    grid = np.linspace(args.dmin, args.dmax, args.points)
    table = estimation.predict_curve(cfg, args.sigma, grid, monochromatic=args.monochromatic,
                                     band=args.band, rtol=args.rtol)
    header = ["D_m", "ratio"]
    cols = [table.distance, table.ratio]
    if table.ratio_mono is not None:
        header.append("ratio_mono")
        cols.append(table.ratio_mono)
    if table.band_lo is not None:
        header += ["band_lo", "band_hi"]
        cols += [table.band_lo, table.band_hi]
    _emit_text(args, io.render_csv(header, zip(*cols)))


def _fit_result_dict(res: estimation.SigmaFitResult):
    return {
        "sigma_abs_m2": res.sigma_abs,
        "stat_err_lo_m2": res.stat_err_lo,
        "stat_err_hi_m2": res.stat_err_hi,
        "systematic_err_m2": res.systematic_err,
        "chi2_min": res.chi2_min,
        "dof": res.dof,
        "n0_at_max_power": res.n0_at_max_power,
        "lower_bound_open": res.lower_bound_open,
        "upper_bound_open": res.upper_bound_open,
        "fit_trace": [{"sigma_abs_m2": s, "chi2": c} for s, c in res.fit_trace],
    }


def cmd_fit_sigma(args):
    cfg = load_config(args.config)
    points = io.read_ratio_points(args.data, kind="curve")
    curve = estimation.ReductionCurve(points, cfg)
    res = estimation.fit_sigma(curve, sigma_max=args.sigma_max, rtol=args.rtol)
    result = _fit_result_dict(res)
    result["n_points"] = len(points)
    _emit_json(args, "fit-sigma", result, cfg, _config_inputs(args) + [args.data])


def cmd_quick_sigma(args):
    cfg = load_config(args.config)
    if args.distance is not None:
        cfg = cfg.at_distance(args.distance)
    laser = cfg.recoil_laser
    point = fringe.RatioPoint(laser.distance_D, args.ratio, 1.0 if args.ratio_err is None else args.ratio_err)
    sigma = estimation.quick_sigma(point, cfg, velocity_v=args.velocity)
    v = cfg.velocity.v0 if args.velocity is None else args.velocity
    dmin = physics.first_minimum_distance(cfg.interferometer, cfg.molecule, laser.wavelength_k, v)
    result = {
        "sigma_abs_m2": sigma,
        "bias_warning": estimation.QUICK_SIGMA_BIAS_NOTE,
        "ratio": args.ratio,
        "distance_m": laser.distance_D,
        "velocity_m_per_s": v,
        "first_minimum_distance_m": dmin,
        "systematic_err_m2": estimation.propagate_systematics(
            sigma, laser.power_err / laser.power_k, laser.waist_y_err / laser.waist_y),
    }
    if args.ratio_err is not None:
        # |d sigma / d ratio| = prefactor / ratio
        prefactor = math.sqrt(math.pi / 8.0) * H * C * laser.waist_y * v / (
            laser.power_k * laser.wavelength_k)
        result["stat_err_m2"] = prefactor * args.ratio_err / args.ratio
    logger.warning("quick-sigma: %s", estimation.QUICK_SIGMA_BIAS_NOTE)
    _emit_json(args, "quick-sigma", result, cfg, _config_inputs(args))


def _visibility_dict(res: fringe.VisibilityResult):
    return {
        "mean_mu_per_s": res.mean_mu,
        "amplitude_A_per_s": res.amplitude_A,
        "phase_rad": res.phase,
        "visibility": res.visibility,
        "visibility_err": res.visibility_err,
        "chi2": res.chi2,
        "dof": res.dof,
        "period_m": res.period_d,
        "period_free": res.period_free,
    }


def cmd_extract_visibility(args):
    cfg = load_config(args.config)
    scan = io.read_scan(args.scan)
    res = fringe.extract_visibility(scan, cfg.interferometer.grating_period_d,
                                    period_mode="free" if args.free_period else "fixed")
    _emit_json(args, "visibility", _visibility_dict(res), cfg, _config_inputs(args) + [args.scan])


def cmd_offset_scan(args):
    cfg = load_config(args.config)
    points = io.read_ratio_points(args.data, kind="offsets")
    res = fringe.fit_offset_profile(points, cfg.recoil_laser.waist_y,
                                    waist_mode="free" if args.free_waist else "fixed")
    _emit_json(args, "offset-scan", {
        "center_y_m": res.center_y,
        "center_err_m": res.center_err,
        "n_eff": res.n_eff,
        "n_eff_err": res.n_eff_err,
        "waist_m": res.waist,
        "waist_err_m": res.waist_err,
        "waist_free": res.waist_free,
        "chi2": res.chi2,
        "dof": res.dof,
    }, cfg, _config_inputs(args) + [args.data])


def cmd_power_scan(args):
    cfg = load_config(args.config)
    points = io.read_ratio_points(args.data, kind="powers")
    res = fringe.fit_power_linearity(points)
    _emit_json(args, "power-scan", {
        "slope_per_w": res.slope,
        "slope_err_per_w": res.slope_err,
        "intercept": res.intercept,
        "intercept_err": res.intercept_err,
        "chi2": res.chi2,
        "dof": res.dof,
        "max_minus_log_ratio": res.max_minus_log,
        "n_rejected": res.n_rejected,
    }, cfg, _config_inputs(args) + [args.data])


def cmd_constancy(args):
    points = io.read_ratio_points(args.data)
    res = fringe.constancy_check(points, confidence=args.confidence)
    _emit_json(args, "constancy", {
        "weighted_mean": res.weighted_mean,
        "mean_err": res.mean_err,
        "chi2": res.chi2,
        "dof": res.dof,
        "chi2_threshold": res.chi2_threshold,
        "confidence": args.confidence,
        "consistent": res.consistent,
    }, None, [args.data])


def _simulation_config(args, cfg):
    return montecarlo.SimulationConfig(
        experiment=cfg, true_sigma=args.sigma, n_molecules=args.n_molecules, rng_seed=args.seed,
        points_per_scan=args.scan_points, dwell_time=args.dwell, repeats=args.repeats,
        periods_per_scan=args.periods, ratio_err=args.ratio_err, noise=args.noise,
    )


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.distance is not None:
        cfg = cfg.at_distance(args.distance)
    sim = _simulation_config(args, cfg)
    out = Path(args.out)
    if args.what == "scan":
        scan = montecarlo.simulate_fringe_scan(sim, perturbed=not args.reference)
        io.write_scan(out, scan)
        summary = {"kind": "scan", "perturbed": not args.reference, "n_points": int(scan.counts.size)}
    else:
        if args.points < 1 or not 0 <= args.dmin <= args.dmax:
            raise ValidationError("need --points >= 1 and 0 <= --dmin <= --dmax")
        curve = montecarlo.simulate_reduction_curve(sim, np.linspace(args.dmin, args.dmax, args.points))
        io.write_ratio_points(out, curve.points, kind="curve")
        summary = {"kind": "curve", "n_points": len(curve.points),
                   "flagged": [{"distance_m": d, "reason": why} for d, why in curve.flagged]}
    summary.update({
        "output": str(out),
        "true_sigma_m2": sim.true_sigma,
        "noise": sim.noise,
        "n_molecules": sim.n_molecules,
        "repeats": sim.repeats,
        "points_per_scan": sim.points_per_scan,
        "dwell_s": sim.dwell_time,
        "ratio_err": sim.ratio_err,
    })
    manifest = io.make_manifest(cfg, command=args.command_line, inputs=_config_inputs(args), seed=args.seed)
    sidecar = out.with_name(out.name + ".manifest.json")
    io.atomic_write_text(sidecar, io.dumps(io.result_document("simulate", summary, manifest)))
    logger.info("wrote %s and %s", out, sidecar)


# -------------------------------------------------------------------- parser
def build_parser():
    p = _Parser(prog="recoil-sigma", description=__doc__.split("\n")[0],
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_, config=True, out=True):
        sp = sub.add_parser(name, help=help_, description=help_,
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        if config:
            sp.add_argument("--config", required=True,
                            help="experiment file, or the name of a bundled fixture")
        if out:
            sp.add_argument("--out", help="write here (atomically) instead of stdout")
        sp.set_defaults(func=func)
        return sp

    sp = command("dmin", cmd_dmin, "first contrast-minimum distance and revival period")

    sp = command("predict", cmd_predict, "tabulate the predicted contrast ratio versus distance")
    sp.add_argument("--sigma", type=_area, required=True, help="cross section (m^2 or with unit)")
    sp.add_argument("--dmin", type=_length, required=True, help="first distance")
    sp.add_argument("--dmax", type=_length, required=True, help="last distance")
    sp.add_argument("--points", type=int, default=101)
    sp.add_argument("--monochromatic", action="store_true", help="add the single-velocity curve")
    sp.add_argument("--band", type=_area, nargs=2, metavar=("LO", "HI"), help="add a cross-section band")
    sp.add_argument("--rtol", type=float, default=estimation.DEFAULT_RTOL)

    sp = command("fit-sigma", cmd_fit_sigma, "fit the cross section to a distance scan")
    sp.add_argument("--data", required=True, help="curve.csv (distance_m,ratio,ratio_err)")
    sp.add_argument("--sigma-max", type=_area, default=estimation.DEFAULT_SIGMA_MAX)
    sp.add_argument("--rtol", type=float, default=estimation.DEFAULT_RTOL)

    sp = command("quick-sigma", cmd_quick_sigma, "single-point cross section (monochromatic beam)")
    sp.add_argument("--ratio", type=float, required=True, help="measured contrast ratio V'/V")
    sp.add_argument("--ratio-err", type=float, help="standard error of the ratio")
    sp.add_argument("--distance", type=_length, help="laser distance (default: from the config)")
    sp.add_argument("--velocity", type=_velocity, help="beam velocity (default: v0 of the config)")

    sp = command("extract-visibility", cmd_extract_visibility, "fit a sinusoid to a fringe scan")
    sp.add_argument("--scan", required=True, help="scan.csv (position_m,counts,dwell_s)")
    sp.add_argument("--free-period", action="store_true", help="fit the fringe period too")

    sp = command("offset-scan", cmd_offset_scan, "fit the vertical laser-offset profile")
    sp.add_argument("--data", required=True, help="offsets.csv (offset_m,ratio,ratio_err)")
    sp.add_argument("--free-waist", action="store_true", help="fit the waist instead of fixing it")

    sp = command("power-scan", cmd_power_scan, "straight-line fit of -ln(ratio) versus laser power")
    sp.add_argument("--data", required=True, help="powers.csv (power_w,ratio,ratio_err)")

    sp = command("constancy", cmd_constancy, "chi-square test that a set of ratios is constant",
                 config=False)
    sp.add_argument("--data", required=True, help="any ratio table with columns <x>,ratio,ratio_err")
    sp.add_argument("--confidence", type=_probability, default=0.95)

    sp = command("simulate", cmd_simulate, "write synthetic scans or reduction curves", out=False)
    sp.add_argument("what", choices=("scan", "curve"))
    sp.add_argument("--sigma", type=_area, required=True, help="true cross section")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, help="CSV output; a .manifest.json sidecar is written next to it")
    sp.add_argument("--distance", type=_length, help="laser distance for a scan (default: config)")
    sp.add_argument("--reference", action="store_true", help="scan without the recoil laser")
    sp.add_argument("--dmin", type=_length, default=0.035)
    sp.add_argument("--dmax", type=_length, default=0.055)
    sp.add_argument("--points", type=int, default=10, help="distances in a curve")
    sp.add_argument("--noise", choices=montecarlo.NOISE_MODES, default="counting")
    sp.add_argument("--n-molecules", type=int, default=100_000)
    sp.add_argument("--scan-points", type=int, default=40)
    sp.add_argument("--dwell", type=float, default=1.0, help="dwell time per scan point (s)")
    sp.add_argument("--repeats", type=int, default=10)
    sp.add_argument("--periods", type=float, default=2.0, help="fringe periods per scan")
    sp.add_argument("--ratio-err", type=float, default=0.03, help="ratio error in gaussian noise mode")
    return p


def _exit_code(exc):
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, ConfigError):
        return EXIT_DATA if exc.kind == "range" else EXIT_USAGE
    if isinstance(exc, (ValidationError, DomainError, VisibilityRangeError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (NumericalError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_DATA


def _report(exc, code):
    payload = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    sys.stderr.write(json.dumps(payload) + "\n")


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _report(exc, EXIT_USAGE)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args.command_line = shlex.join(["recoil-sigma", *argv])
    try:
        args.func(args)
    except (RecoilSigmaError, OSError, FloatingPointError) as exc:
        code = _exit_code(exc)
        _report(exc, code)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
