import math

import numpy as np
import pytest
from scipy import special

from recoil_sigma import QuadratureError
from recoil_sigma.quadrature import integrate

V0, SV = 210.3, 38.4
AMP = 1.0 / (math.sqrt(2 * math.pi) * SV)


def _u(v):
    return 1.0 / v - 1.0 / V0


def test_mode1_gaussian_mass():
    edges = np.linspace(V0 - 5 * SV, V0 + 5 * SV, 3)
    res = integrate(edges, 1, (V0, SV, AMP, 0.0, 0.0), rtol=1e-13)
    assert res.value.real == pytest.approx(special.ndtr(5) - special.ndtr(-5), abs=1e-13)
    assert res.value.imag == 0.0
    assert res.panels >= 2


def test_mode1_damped_integral_matches_closed_form():
    # with sv -> large the Gaussian is flat; int exp(-N/v) dv over [a, b] has an E1 closed form
    N, a, b = 3.0, 0.5, 4.0
    res = integrate(np.array([a, b]), 1, (0.0, 1e12, 1.0, N, 0.0), rtol=1e-12)
    F = lambda v: v * math.exp(-N / v) - N * special.exp1(N / v)
    assert res.value.real == pytest.approx(F(b) - F(a), rel=1e-11)


def test_mode0_without_phase_is_velocity_mass():
    # N = 0: the integral over u of the transformed density equals the mass between the end velocities
    edges = np.sort(_u(np.array([V0 + 6 * SV, V0, V0 - 4 * SV])))
    res = integrate(edges, 0, (V0, SV, AMP, 0.0, 0.0), rtol=1e-12)
    assert res.value.real == pytest.approx(special.ndtr(6) - special.ndtr(-4), rel=1e-11)
    assert res.value.imag == 0.0


def test_mode0_pure_phase_closed_form():
    # N -> 0 with the phase kept: first-order term N t sin(K t) integrates in closed form
    # for a flat density; check the oscillatory adaptive path against the exact value
    N, K = 1e-9, 500.0
    t_lo, t_hi = 1e-3, 0.2
    edges = np.array([t_lo, t_hi]) - 1.0 / V0
    res = integrate(edges, 0, (V0, 1e12, 1.0, N, K), rtol=1e-12)
    # integrand ~ v^2 (1 - N t (1 - cos Kt) + i N t sin Kt) with v = 1/t
    re = (1 / t_lo - 1 / t_hi) - N * (math.log(t_hi / t_lo) - (special.sici(K * t_hi)[1] - special.sici(K * t_lo)[1]))
    im = N * (special.sici(K * t_hi)[0] - special.sici(K * t_lo)[0])
    assert res.value.real == pytest.approx(re, rel=1e-10)
    assert res.value.imag == pytest.approx(im, rel=1e-7)


def test_empty_mesh_gives_zero():
    res = integrate(np.array([1.0, 1.0]), 1, (V0, SV, AMP, 0.0, 0.0))
    assert res.value == 0 and res.panels == 0


def test_error_estimate_within_tolerance():
    edges = np.sort(_u(np.array([V0 + 8 * SV, 20.0])))
    res = integrate(edges, 0, (V0, SV, AMP, 59.6, 738.0), rtol=1e-10)
    tol = 1e-10 * abs(res.value)
    assert res.error_re <= tol and res.error_im <= tol


def test_panel_budget_raises():
    edges = np.sort(_u(np.array([V0 + 8 * SV, 5.0])))
    with pytest.raises(QuadratureError) as info:
        integrate(edges, 0, (V0, SV, AMP, 59.6, 738.0), rtol=1e-12, max_panels=8)
    assert info.value.error_estimate > 0
