"""Least-squares fits with analytic Jacobians on top of MINPACK's Levenberg-Marquardt."""
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConvergenceError

MAX_ITER = 200
XTOL = 1e-10


@dataclass
class LMResult:
    params: np.ndarray
    chi2: float
    jac: np.ndarray
    n_iter: int

    def covariance(self):
        jtj = self.jac.T @ self.jac
        return np.linalg.pinv(jtj, rcond=1e-13, hermitian=True)


def levenberg_marquardt(fun, p0, scale, max_iter=MAX_ITER, xtol=XTOL):
    """Minimize ``sum(r**2)`` where ``fun(p)`` returns weighted residuals and Jacobian.

    Converged once the scaled step falls below ``xtol`` relative to the
    scaled parameters (MINPACK's test) or the residual sum stops changing.
    ``scale`` gives the typical size of each parameter.
    """
    cache = {}

    def evaluate(p):
        key = p.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = fun(p)
        return cache[key]

    res = optimize.least_squares(
        lambda p: evaluate(p)[0], np.asarray(p0, dtype=float),
        jac=lambda p: evaluate(p)[1], method="lm",
        x_scale=np.asarray(scale, dtype=float), xtol=xtol, ftol=1e-15, gtol=1e-15,
        max_nfev=max_iter,
    )
    if res.status <= 0:
        raise ConvergenceError(f"least-squares fit did not converge in {max_iter} iterations: {res.message}")
    r, J = fun(res.x)
    return LMResult(res.x, float(r @ r), J, int(res.nfev))
