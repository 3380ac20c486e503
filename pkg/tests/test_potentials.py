import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from mvtorus.errors import NonPositiveDensity
from mvtorus.field import TorusDensity, gibbs, grid, uniform
from mvtorus.potentials import (ZERO, FourierPotential, GridPotential, TrigSeries, convolve,
                                derivative, design_confinement, evaluate, mean_field)
from mvtorus.selfconsistency import stationary_residual

coeff_lists = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=6)


@pytest.mark.parametrize("coeffs, x, expected", [
    ([-1], 0.0, -1.0),
    ([-1], np.pi, 1.0),
    ([-3, -1], np.pi / 2, 1.0),
])
def test_evaluate_examples(coeffs, x, expected):
    assert evaluate(FourierPotential(coeffs), x) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("coeffs, x, expected", [
    ([-1], np.pi / 2, 1.0),
    ([0, -1], np.pi / 4, 2.0),
    ([0.3, -2, 5], 0.0, 0.0),
])
def test_derivative_examples(coeffs, x, expected):
    assert derivative(FourierPotential(coeffs), x) == pytest.approx(expected, abs=1e-14)


def test_zero_potential():
    assert ZERO.n_modes == 0
    assert evaluate(ZERO, 1.3) == 0.0
    assert np.all(ZERO.on_grid(16) == 0.0)


@given(coeff_lists)
@settings(max_examples=50, deadline=None)
def test_parity_exact(coeffs):
    p = FourierPotential(coeffs)
    x = np.random.default_rng(len(coeffs)).uniform(-20, 20, 1000)
    assert np.max(np.abs(evaluate(p, x) - evaluate(p, -x))) <= 1e-14


@given(coeff_lists, st.floats(-10, 10))
@settings(max_examples=50, deadline=None)
def test_periodic(coeffs, x):
    p = FourierPotential(coeffs)
    assert evaluate(p, x + 2 * np.pi) == pytest.approx(evaluate(p, x), abs=1e-12)


@given(coeff_lists)
@settings(max_examples=50, deadline=None)
def test_derivative_matches_finite_differences(coeffs):
    p = FourierPotential(coeffs)
    x = np.linspace(-3, 9, 101)
    h = 1e-5
    fd = (evaluate(p, x + h) - evaluate(p, x - h)) / (2 * h)
    # roundoff of the difference quotient grows with the coefficient size
    scale = max(1.0, float(np.sum(np.abs(p.c))))
    assert np.max(np.abs(fd - derivative(p, x))) < 1e-8 * scale


def test_h_stable_flag():
    assert FourierPotential((1.0, 0.5)).is_h_stable
    assert FourierPotential((0.0,)).is_h_stable
    assert not FourierPotential((1.0, -0.1)).is_h_stable
    assert ZERO.is_h_stable


def test_parse_and_json_roundtrip():
    p = FourierPotential.parse("-1,-0.5")
    assert p.coeffs == (-1.0, -0.5)
    assert FourierPotential.from_json(p.to_json()) == p
    assert FourierPotential.parse("[0, -2]").coeffs == (0.0, -2.0)
    assert FourierPotential.parse("0") == ZERO
    assert FourierPotential.mode(3, -1).coeffs == (0.0, 0.0, -1.0)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        FourierPotential((np.nan,))


def test_convolve_uniform_vanishes(kuramoto):
    c = convolve(kuramoto, uniform(64))
    assert np.max(np.abs(c.on_grid(64))) < 1e-15


def test_convolve_kuramoto_gibbs():
    beta, r = 3.0, 0.7
    rho = gibbs(ZERO, FourierPotential((-1.0,)), [-r], beta)  # exp(beta r cos x)/Z
    r1 = rho.cos_moments(1)[0]
    U = convolve(FourierPotential((-1.0,)), rho)
    x = grid(256)
    assert np.allclose(U.on_grid(256), -r1 * np.cos(x), atol=1e-14)


def test_convolve_bichromatic_stationary():
    W = FourierPotential((-1.0, -0.5))
    rho = gibbs(ZERO, W, [-0.6, 0.3], 2.5)
    r1, r2 = rho.cos_moments(2)
    x = grid(256)
    U = convolve(W, rho).on_grid(256)
    assert np.allclose(U, -r1 * np.cos(x) - 0.5 * r2 * np.cos(2 * x), atol=1e-14)


@given(st.lists(st.floats(-0.08, 0.08), min_size=2, max_size=10), coeff_lists)
@settings(max_examples=30, deadline=None)
def test_convolve_matches_trapezoid_quadrature(amps, coeffs):
    """Direct O(G^2) quadrature of int W(x - y) rho(y) dy on a band-limited density."""
    G = 64
    x = grid(G)
    k = np.arange(1, len(amps) + 1)
    half = len(amps) // 2
    C = np.array(amps[:half] + [0.0] * (len(amps) - half))
    S = np.array([0.0] * half + amps[half:])
    vals = 1 / (2 * np.pi) + (np.cos(np.outer(x, k)) @ C + np.sin(np.outer(x, k)) @ S) / np.pi
    rho = TorusDensity.from_values(vals)
    W = FourierPotential(coeffs)
    direct = np.array([np.mean(evaluate(W, xi - x) * rho.values) * 2 * np.pi for xi in x])
    assert np.max(np.abs(convolve(W, rho).on_grid(G) - direct)) < 1e-10


def test_convolve_against_continuous_quadrature():
    W = FourierPotential((-1.0, -0.5, 0.25))
    rho = gibbs(ZERO, W, [-0.4, 0.2, 0.1], 2.0, G=256)
    f = lambda y: np.exp(-2.0 * (0.4 * np.cos(y) - 0.1 * np.cos(2 * y) + 0.025 * np.cos(3 * y)))
    Z = quad(f, 0, 2 * np.pi, epsabs=1e-14)[0]
    for xi in (0.0, 0.7, 2.5):
        exact = quad(lambda y: evaluate(W, xi - y) * f(y) / Z, 0, 2 * np.pi, epsabs=1e-14)[0]
        assert convolve(W, rho)(xi) == pytest.approx(exact, abs=1e-12)


def test_mean_field_pads():
    U = mean_field(FourierPotential((-1.0,)), [0.5, 0.2])
    assert U.coeffs == (-0.5, 0.0)


def test_trigseries_derivatives():
    s = TrigSeries((1.0, 0.5), (0.0, -2.0))
    x = np.linspace(0, 6, 7)
    assert np.allclose(s(x), np.cos(x) + 0.5 * np.cos(2 * x) - 2 * np.sin(2 * x))
    assert np.allclose(s.derivative(x), -np.sin(x) - np.sin(2 * x) - 4 * np.cos(2 * x))
    assert np.allclose(s.derivative(x, 2), -np.cos(x) - 2 * np.cos(2 * x) + 8 * np.sin(2 * x))
    assert np.allclose(s.derivative(x, 3), np.sin(x) + 4 * np.sin(2 * x) + 16 * np.cos(2 * x))


@pytest.mark.parametrize("W", [ZERO, FourierPotential((-1.0,))])
def test_design_confinement_uniform_gives_zero(W):
    V = design_confinement(uniform(128), W, 1.0)
    assert np.max(np.abs(V.values)) < 1e-14


def test_design_confinement_rejects_zero():
    v = np.full(64, 1 / (2 * np.pi))
    v[3] = 0.0
    with pytest.raises(NonPositiveDensity):
        design_confinement(TorusDensity.from_values(v), ZERO, 1.0)


def test_design_confinement_gibbs_target(kuramoto):
    x = grid(256)
    target = TorusDensity.from_values(np.exp(np.cos(x)))
    V = design_confinement(target, kuramoto, 2.0)
    assert stationary_residual(target, V, kuramoto, 2.0) < 1e-10
    assert abs(V.values.mean()) < 1e-14


def test_grid_potential_projection():
    x = grid(128)
    g = GridPotential(0.3 * np.cos(x) - 0.1 * np.sin(3 * x) + np.exp(np.cos(x)))
    series, err = g.project(4)
    _, err_many = g.project(40)
    assert err_many < 1e-13 < err
    assert series.cos_coeffs[0] == pytest.approx(0.3 + 2 * 0.5651591039924851, rel=1e-12)  # 2 I1(1)
    assert g.derivative_on_grid(1) == pytest.approx(
        -0.3 * np.sin(x) - 0.3 * np.cos(3 * x) - np.sin(x) * np.exp(np.cos(x)), abs=1e-12)
    assert g.resampled(256)[::2] == pytest.approx(g.values, abs=1e-13)
