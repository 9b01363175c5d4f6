"""Runtime switches read from the environment.

``RECOIL_SIGMA_BACKEND``
    ``numba`` (default when numba imports), or ``numpy`` for the pure-numpy
    kernels.  Read once at import time of :mod:`recoil_sigma._kernels`.
``RECOIL_SIGMA_THREADS``
    Cap on worker threads for Monte Carlo ensembles and curve tabulation.
    ``0`` or unset means one worker per CPU.
"""
import logging
import os

logger = logging.getLogger(__name__)

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False


def requested_backend():
    value = os.environ.get("RECOIL_SIGMA_BACKEND", "auto").strip().lower()
    if value in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if value not in ("numba", "numpy"):
        raise ValueError(f"RECOIL_SIGMA_BACKEND must be 'numba', 'numpy' or 'auto', got {value!r}")
    if value == "numba" and not HAVE_NUMBA:
        logger.warning("numba requested but not importable; using numpy kernels")
        return "numpy"
    return value


def worker_count():
    raw = os.environ.get("RECOIL_SIGMA_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"RECOIL_SIGMA_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValueError("RECOIL_SIGMA_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)
