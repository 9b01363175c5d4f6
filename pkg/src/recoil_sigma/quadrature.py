"""Globally adaptive 21-point Gauss-Kronrod integration of the velocity integrand.

Panels are refined in batches: every sweep bisects the panels whose error
estimate exceeds their equal share of the allowed total, then re-evaluates
only the new halves through the active kernel.  Real and imaginary parts
must each meet the tolerance on their own.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import QuadratureError

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-15
MAX_PANELS = 400_000


@dataclass(frozen=True)
class QuadResult:
    value: complex
    error_re: float
    error_im: float
    panels: int


def integrate(breakpoints, mode, params, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, max_panels=MAX_PANELS):
    """Integrate the kernel integrand over the mesh given by ``breakpoints``.

    Parameters
    ----------
    breakpoints : array_like
        Sorted initial mesh; consecutive pairs form the starting panels.
    mode : int
        Integrand selector passed to :func:`recoil_sigma._kernels.panel_sums`.
    params : tuple
        ``(v0, sv, amp, N, K)`` forwarded to the kernel.
    rtol, atol : float
        Convergence requires ``err <= max(atol, rtol * |I|)`` separately for the
        real and the imaginary part.

    Raises
    ------
    QuadratureError
        If the panel budget is exhausted first.
    """
    edges = np.asarray(breakpoints, dtype=float)
    a = edges[:-1].copy()
    b = edges[1:].copy()
    keep = b > a
    a, b = a[keep], b[keep]
    if a.size == 0:
        return QuadResult(0j, 0.0, 0.0, 0)

    kre, kim, gre, gim = _kernels.panel_sums(a, b, mode, *params)
    ere, eim = np.abs(kre - gre), np.abs(kim - gim)
    while True:
        tot = complex(kre.sum(), kim.sum())
        err_re, err_im = float(ere.sum()), float(eim.sum())
        tol = max(atol, rtol * abs(tot))
        if err_re <= tol and err_im <= tol:
            return QuadResult(tot, err_re, err_im, a.size)
        if 2 * a.size > max_panels:
            raise QuadratureError(
                f"velocity quadrature exceeded {max_panels} panels", max(err_re, err_im)
            )
        share = tol / a.size
        split = (ere > share) | (eim > share)
        if not split.any():
            split[np.argmax(np.maximum(ere, eim))] = True
        sa, sb = a[split], b[split]
        mid = 0.5 * (sa + sb)
        if not np.all((mid > sa) & (mid < sb)):
            raise QuadratureError("panel width reached floating-point resolution", max(err_re, err_im))
        na = np.concatenate([sa, mid])
        nb = np.concatenate([mid, sb])
        nkre, nkim, ngre, ngim = _kernels.panel_sums(na, nb, mode, *params)
        keep = ~split
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        kre = np.concatenate([kre[keep], nkre])
        kim = np.concatenate([kim[keep], nkim])
        ere = np.concatenate([ere[keep], np.abs(nkre - ngre)])
        eim = np.concatenate([eim[keep], np.abs(nkim - ngim)])
