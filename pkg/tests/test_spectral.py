from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import beta

from armlab.spectral import (TWO_PI, ConvergenceError, Grid1D, analytic_eigenfunction,
                             backbone_grid, cardy_formula, cardy_parallelogram, cardy_profile_error,
                             evolve_parabolic_1d, lambda_closed_form, parallelogram_cross_ratio,
                             residual_1d, richardson, sine_power_integral, solve_backbone_2d,
                             solve_backbone_symmetric, solve_eigen_1d)

# C(1/4) = int_0^{1/4} t^(-2/3) (1-t)^(-2/3) dt / B(1/3, 1/3) by adaptive quadrature, frozen
CARDY_QUARTER = 0.3735487913342171


def test_lambda_closed_form_exact():
    assert lambda_closed_form(6) == Fraction(5, 48)
    assert lambda_closed_form(4) == 0
    assert lambda_closed_form(Fraction(8)) == Fraction(3, 16)
    assert lambda_closed_form(6.0) == pytest.approx(5 / 48, abs=1e-15)
    with pytest.raises(ValueError):
        lambda_closed_form(0)
    with pytest.raises(TypeError):
        lambda_closed_form(True)


def test_analytic_eigenfunction():
    th = np.linspace(0, TWO_PI, 9)
    assert np.allclose(analytic_eigenfunction(6, th), np.sin(th / 4) ** (1 / 3))
    with pytest.raises(ValueError):
        analytic_eigenfunction(4, th)
    with pytest.raises(ValueError):
        analytic_eigenfunction(6, [7.0])


def test_sine_power_integral_against_quadrature():
    for lo, hi, e in [(0.0, 1.0, -2 / 3), (0.5, 3.0, 0.5), (4.0, TWO_PI, 2 / 3), (0.0, TWO_PI, -0.4)]:
        ref = quad(lambda t: np.sin(t / 2) ** e, lo, hi, limit=200)[0]
        assert float(sine_power_integral(lo, hi, e)) == pytest.approx(ref, rel=1e-9)


def test_residual_second_order():
    res = [residual_1d(6.0, 2**k - 1) for k in range(6, 10)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.1)


def test_eigen_1d_methods_agree():
    a = solve_eigen_1d(6.0, 511)
    b = solve_eigen_1d(6.0, 511, method="timeDecay")
    assert a.lam == pytest.approx(5 / 48, abs=1e-6)
    assert b.lam == pytest.approx(a.lam, abs=1e-9)
    assert a.nodes[-1] == pytest.approx(TWO_PI)
    assert len(a.nodes) == Grid1D(511).n + 1


def test_eigen_1d_mesh_trace_converges():
    r = solve_eigen_1d(9.0, 1023)
    lams = [t[1] for t in r.meshTrace]
    assert abs(lams[-1] - lams[-2]) < abs(lams[-2] - lams[-3])
    assert r.meta["observedOrder"] == pytest.approx(2.0, abs=0.2)
    with pytest.raises(ValueError):
        solve_eigen_1d(6.0, 8)


def test_richardson_refuses_wrong_order():
    assert richardson([1.0 + 4e-2, 1.0 + 1e-2, 1.0 + 2.5e-3], 2.0)[0] == pytest.approx(1.0)
    with pytest.raises(ConvergenceError):
        richardson([1.1, 1.05, 1.025], 2.0)
    with pytest.raises(ConvergenceError):
        richardson([1.1, 1.05, 1.07], 1.0)


def test_parabolic_decay_rate():
    n = 127
    r = evolve_parabolic_1d(6.0, np.ones(n + 1), 30.0, n, 0.01)
    assert r.decayRate == pytest.approx(5 / 48, abs=2e-3)
    lo, hi = r.sandwich
    assert 0 < lo <= hi < 2
    assert np.all(np.diff(r.norms) <= 0)
    with pytest.raises(ValueError):
        evolve_parabolic_1d(6.0, -np.ones(n + 1), 1.0, n, 0.01)


def test_cardy_values():
    assert cardy_formula(0.5) == pytest.approx(0.5, abs=1e-12)
    assert cardy_formula(0.0) == 0.0 and cardy_formula(1.0) == pytest.approx(1.0, abs=1e-12)
    assert cardy_formula(0.25) == pytest.approx(CARDY_QUARTER, abs=1e-12)
    ref = quad(lambda t: t ** (-2 / 3) * (1 - t) ** (-2 / 3), 0, 0.7, limit=200)[0] / beta(1 / 3, 1 / 3)
    assert cardy_formula(0.7) == pytest.approx(ref, abs=1e-10)
    with pytest.raises(ValueError):
        cardy_formula(1.5)


@settings(max_examples=50, deadline=None)
@given(m=st.floats(1e-4, 1.0 - 1e-4))
def test_cardy_symmetry(m):
    assert cardy_formula(m) + cardy_formula(1 - m) == pytest.approx(1.0, abs=1e-12)


def test_parallelogram_crossing():
    assert parallelogram_cross_ratio(1.0) == pytest.approx(0.5, abs=1e-10)
    for a in (0.3, 0.5, 0.8, 1.7):
        assert cardy_parallelogram(a) + cardy_parallelogram(1 / a) == pytest.approx(1.0, abs=1e-9)
    vals = [cardy_parallelogram(a) for a in (0.5, 1.0, 1.5, 2.0)]
    # a longer crossing direction is harder to cross
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(ValueError):
        parallelogram_cross_ratio(10.0)


def test_backbone_grid():
    P = backbone_grid(64)
    assert P[0] == 0.0 and P[-1] == pytest.approx(TWO_PI)
    assert P[1] == pytest.approx(1e-3)
    assert np.allclose(P + P[::-1], TWO_PI)
    assert np.all(np.diff(P) > 0)
    with pytest.raises(ValueError):
        backbone_grid(63)
    with pytest.raises(ValueError):
        backbone_grid(64, eps=0.5)


def test_backbone_methods_agree():
    a = solve_backbone_2d([32, 64, 128], method="directEigen")
    b = solve_backbone_2d([32, 64, 128], method="timeDecay")
    for (_, x), (_, y) in zip(a.meshTrace, b.meshTrace):
        assert x == pytest.approx(y, abs=1e-9)
    assert a.lam == pytest.approx(b.lam, abs=1e-8)


def test_backbone_eigenfunction_boundary_values():
    r = solve_backbone_2d([32, 64, 128])
    G, P = r.eigenfunction, r.nodes
    M = len(P) - 1
    assert np.all(G[0, 1:] == 1.0) and np.all(G[:, 0] == 0.0)
    assert np.all(np.isnan(G[M, 1:]))
    inside = np.isfinite(G)
    assert np.all(G[inside] >= 0) and np.all(G[inside] <= 1.0 + 1e-9)
    # away from the corner G vanishes at gamma = 0 like gamma^(1/3)
    for a in (0.5, 1.5, 3.0):
        i = int(np.searchsorted(P, a))
        g = G[i, 1:4]
        slopes = np.diff(np.log(g)) / np.diff(np.log(P[1:4]))
        assert np.allclose(slopes, 1 / 3, atol=0.02)
        assert g[0] < 0.2


def test_backbone_symmetric_form():
    r = solve_backbone_symmetric([64, 128])
    G = r.eigenfunction
    M = G.shape[0] - 1
    k = np.arange(M + 1)
    assert np.all(G[M - k, k] == 0.0)
    assert np.all(G[0, :M] == 1.0)
    assert 0.34 < r.lam < 0.37


def test_backbone_cardy_profile():
    r = solve_backbone_2d([64, 128, 256])
    assert cardy_profile_error(r) <= 0.06


def test_backbone_mesh_validation():
    with pytest.raises(ValueError):
        solve_backbone_2d([64])
    with pytest.raises(ValueError):
        solve_backbone_2d([64, 100])
