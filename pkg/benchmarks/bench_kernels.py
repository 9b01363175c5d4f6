"""Compare the numba and numpy flavours of the hot kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R] [--end-to-end]

Each kernel is called once untimed (to trigger JIT compilation), then timed
with :mod:`timeit`; the best of ``--repeat`` runs is reported.  Outputs of
the two flavours are compared before timing.  ``--end-to-end`` additionally
times a velocity-averaged reduction and a Monte Carlo ensemble in fresh
interpreters with ``RECOIL_SIGMA_BACKEND`` set to each backend.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from recoil_sigma import _kernels

END_TO_END = """
import json, time
from recoil_sigma import load_config, reduction_velocity_averaged, SimulationConfig, sample_ensemble
cfg = load_config("c70_paper.cfg")
reduction_velocity_averaged(cfg, 1.97e-21)
sample_ensemble(SimulationConfig(cfg, 1.97e-21, n_molecules=1000))
t0 = time.perf_counter()
for D in (0.035, 0.045, 0.055, 0.08):
    reduction_velocity_averaged(cfg.at_distance(D), 1.97e-21, rtol=1e-12)
t1 = time.perf_counter()
sample_ensemble(SimulationConfig(cfg, 1.97e-21, n_molecules=1_000_000))
t2 = time.perf_counter()
print(json.dumps({"quadrature_s": t1 - t0, "ensemble_1e6_s": t2 - t1}))
"""


def kernel_cases(size, rng):
    v0, sv, N, K = 210.3, 38.4, 59.6, 6.6e3
    amp = 1.0 / (sv * np.sqrt(2 * np.pi))
    edges = np.linspace(-2e-3, 2e-3, size // 21 + 1)
    u = rng.random(size)
    lam = rng.uniform(0.0, 3.0, size)
    phase = rng.uniform(0.0, 2 * np.pi, size)
    return {
        "panel_sums": (edges[:-1], edges[1:], 0, v0, sv, amp, N, K),
        "poisson_small": (u, lam),
        "phasor_jackknife": (phase,),
    }


def agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float))
                            / np.maximum(1e-300, np.abs(np.asarray(y, float)))))
               for x, y in zip(a, b))


def best_time(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def end_to_end():
    rows = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, RECOIL_SIGMA_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True,
                             capture_output=True, text=True).stdout
        rows[backend] = json.loads(out)
    print(f"\n{'end to end':<24}{'numba (s)':>12}{'numpy (s)':>12}{'speed-up':>10}")
    for key in rows["numba"]:
        a, b = rows["numba"][key], rows["numpy"][key]
        print(f"{key:<24}{a:12.4f}{b:12.4f}{b / a:10.1f}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--size", type=int, default=200_000, help="elements per kernel call")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--end-to-end", action="store_true")
    args = p.parse_args(argv)

    if _kernels.NUMBA_KERNELS is None:
        sys.exit("numba is not importable; nothing to compare")
    cases = kernel_cases(args.size, np.random.default_rng(0))
    print(f"{'kernel':<24}{'numba (ms)':>12}{'numpy (ms)':>12}{'speed-up':>10}{'max rel diff':>14}")
    for name, call_args in cases.items():
        fast, ref = _kernels.NUMBA_KERNELS[name], _kernels.NUMPY_KERNELS[name]
        diff = agree(fast(*call_args), ref(*call_args))
        t_nb = best_time(fast, call_args, args.repeat)
        t_np = best_time(ref, call_args, args.repeat)
        print(f"{name:<24}{1e3 * t_nb:12.3f}{1e3 * t_np:12.3f}{t_np / t_nb:10.1f}{diff:14.2e}")
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
