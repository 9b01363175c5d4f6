"""Hot inner loops, each in a numba and a pure-numpy flavour.

The module-level names (``panel_sums``, ``poisson_small``, ``phasor_jackknife``)
point at whichever flavour ``RECOIL_SIGMA_BACKEND`` selects.  Both flavours
are always importable as ``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so tests and
benchmarks can compare them directly.

Integrand conventions for ``panel_sums``
----------------------------------------
mode 0, variable u = 1/v - 1/v0, with t = 1/v0 + u = 1/v::

    f(u) = amp * exp(-(v - v0)^2 / (2 sv^2)) / t^2 * exp(-N t (1 - exp(i K t)))

Measuring from 1/v0 lets ``v - v0 = -u v v0`` be formed without cancellation,
so arbitrarily narrow velocity distributions stay resolved.

mode 1, variable v, fringe phase averaged over a full cycle::

    f(v) = amp * exp(-(v - v0)^2 / (2 sv^2)) * exp(-N / v)

``N`` is the mean photon number times velocity and ``K`` the fringe phase
per absorbed photon times velocity, so n0(v) = N/v and phase(v) = K/v.
"""
import math

import numpy as np

from ._backend import HAVE_NUMBA, requested_backend

# QUADPACK qk21: Kronrod abscissae (descending, last is the centre), Kronrod
# weights, and the 10-point Gauss weights belonging to the odd-index abscissae.
XGK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0,
])
WGK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600525452051, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
WG = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

# Full 21-point node/weight vectors on [-1, 1]; Gauss weights zero on Kronrod-only nodes.
NODES = np.concatenate([-XGK[:-1], [0.0], XGK[:-1][::-1]])
KRONROD_W = np.concatenate([WGK[:-1], [WGK[-1]], WGK[:-1][::-1]])
_wg_half = np.zeros(10)
_wg_half[1::2] = WG
GAUSS_W = np.concatenate([_wg_half, [0.0], _wg_half[::-1]])

# Mean photon number above which Poisson inversion is left to scipy.
POISSON_SMALL_MAX = 30.0


# ---------------------------------------------------------------- numpy flavour
def _np_integrand(x, mode, v0, sv, amp, N, K):
    if mode == 0:
        t = 1.0 / v0 + x
        v = 1.0 / t
        z = -x * v * v0 / sv
        w = amp * np.exp(-0.5 * z * z) * v * v
        expo = -N * t * (1.0 - np.cos(K * t))
        mag = w * np.exp(expo)
        ph = N * t * np.sin(K * t)
        return mag * np.cos(ph), mag * np.sin(ph)
    z = (x - v0) / sv
    with np.errstate(divide="ignore"):
        damp = np.exp(-N / x)
    val = amp * np.exp(-0.5 * z * z) * damp
    return val, np.zeros_like(val)


def np_panel_sums(a, b, mode, v0, sv, amp, N, K):
    a = np.asarray(a, dtype=float)[:, None]
    b = np.asarray(b, dtype=float)[:, None]
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * NODES[None, :]
    re, im = _np_integrand(x, mode, v0, sv, amp, N, K)
    h = half[:, 0]
    return (h * (re @ KRONROD_W), h * (im @ KRONROD_W),
            h * (re @ GAUSS_W), h * (im @ GAUSS_W))


def np_poisson_small(u, lam):
    """Inversion sampling of Poisson(lam) from uniforms ``u``; lam <= POISSON_SMALL_MAX."""
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    n = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    k = 0
    while active.any():
        k += 1
        p = np.where(active, p * lam / k, p)
        cdf = np.where(active, cdf + p, cdf)
        n = np.where(active, k, n)
        still = u > cdf
        # guard against cdf stalling below u through rounding
        active = still & (p > 0.0)
    return n


def np_phasor_jackknife(phase):
    """Modulus of the mean phasor exp(i*phase) and its jackknife standard error."""
    phase = np.asarray(phase, dtype=float)
    n = phase.size
    c = np.cos(phase)
    s = np.sin(phase)
    sc = c.sum()
    ss = s.sum()
    r = math.hypot(sc, ss) / n
    if n < 2:
        return r, math.nan
    loo = np.hypot(sc - c, ss - s) / (n - 1)
    dev = loo - loo.mean()
    var = (n - 1) / n * float(np.dot(dev, dev))
    return r, math.sqrt(var)


NUMPY_KERNELS = {
    "panel_sums": np_panel_sums,
    "poisson_small": np_poisson_small,
    "phasor_jackknife": np_phasor_jackknife,
}


# ---------------------------------------------------------------- numba flavour
if HAVE_NUMBA:
    from numba import njit

    _opts = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")

    @njit(**_opts)
    def nb_panel_sums(a, b, mode, v0, sv, amp, N, K):
        m = a.shape[0]
        kre = np.empty(m)
        kim = np.empty(m)
        gre = np.empty(m)
        gim = np.empty(m)
        nn = NODES.shape[0]
        for i in range(m):
            half = 0.5 * (b[i] - a[i])
            mid = 0.5 * (a[i] + b[i])
            sk_re = 0.0
            sk_im = 0.0
            sg_re = 0.0
            sg_im = 0.0
            for j in range(nn):
                x = mid + half * NODES[j]
                if mode == 0:
                    t = 1.0 / v0 + x
                    v = 1.0 / t
                    z = -x * v * v0 / sv
                    w = amp * math.exp(-0.5 * z * z) * v * v
                    kt = K * t
                    mag = w * math.exp(-N * t * (1.0 - math.cos(kt)))
                    ph = N * t * math.sin(kt)
                    fre = mag * math.cos(ph)
                    fim = mag * math.sin(ph)
                else:
                    z = (x - v0) / sv
                    damp = math.exp(-N / x) if x > 0.0 else 0.0
                    fre = amp * math.exp(-0.5 * z * z) * damp
                    fim = 0.0
                sk_re += KRONROD_W[j] * fre
                sk_im += KRONROD_W[j] * fim
                sg_re += GAUSS_W[j] * fre
                sg_im += GAUSS_W[j] * fim
            kre[i] = half * sk_re
            kim[i] = half * sk_im
            gre[i] = half * sg_re
            gim[i] = half * sg_im
        return kre, kim, gre, gim

    @njit(**_opts)
    def nb_poisson_small(u, lam):
        n = np.zeros(u.shape[0], dtype=np.int64)
        for i in range(u.shape[0]):
            p = math.exp(-lam[i])
            cdf = p
            k = 0
            while u[i] > cdf and p > 0.0:
                k += 1
                p = p * lam[i] / k
                cdf = cdf + p
            n[i] = k
        return n

    @njit(**_opts)
    def nb_phasor_jackknife(phase):
        n = phase.shape[0]
        c = np.empty(n)
        s = np.empty(n)
        # Neumaier-compensated sums keep the result independent of summation order
        sc = 0.0
        cc = 0.0
        ss = 0.0
        cs = 0.0
        for i in range(n):
            ci = math.cos(phase[i])
            si = math.sin(phase[i])
            c[i] = ci
            s[i] = si
            t = sc + ci
            if abs(sc) >= abs(ci):
                cc += (sc - t) + ci
            else:
                cc += (ci - t) + sc
            sc = t
            t = ss + si
            if abs(ss) >= abs(si):
                cs += (ss - t) + si
            else:
                cs += (si - t) + ss
            ss = t
        sc += cc
        ss += cs
        r = math.hypot(sc, ss) / n
        if n < 2:
            return r, math.nan
        mean_loo = 0.0
        for i in range(n):
            mean_loo += math.hypot(sc - c[i], ss - s[i]) / (n - 1)
        mean_loo /= n
        acc = 0.0
        for i in range(n):
            d = math.hypot(sc - c[i], ss - s[i]) / (n - 1) - mean_loo
            acc += d * d
        return r, math.sqrt((n - 1) / n * acc)

    NUMBA_KERNELS = {
        "panel_sums": nb_panel_sums,
        "poisson_small": nb_poisson_small,
        "phasor_jackknife": nb_phasor_jackknife,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = None


BACKEND = requested_backend()
_active = NUMBA_KERNELS if BACKEND == "numba" else NUMPY_KERNELS


def panel_sums(a, b, mode, v0, sv, amp, N, K):
    """Kronrod and Gauss sums of the velocity integrand on each panel [a_i, b_i].

    Returns four arrays: Kronrod real, Kronrod imaginary, Gauss real, Gauss imaginary.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    return _active["panel_sums"](a, b, int(mode), float(v0), float(sv), float(amp), float(N), float(K))


def poisson_small(u, lam):
    return _active["poisson_small"](np.ascontiguousarray(u, dtype=float),
                                    np.ascontiguousarray(lam, dtype=float))


def phasor_jackknife(phase):
    r, se = _active["phasor_jackknife"](np.ascontiguousarray(phase, dtype=float))
    return float(r), float(se)
