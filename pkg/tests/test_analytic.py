import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from invade_tree.analytic import (TreeParams, dual, jump_rate, table, theta, theta_inverse, zeta,
                                  zeta_prime)
from invade_tree.errors import DomainError


def _extinction_by_iteration(p, sigma, iters=200_000):
    x = 0.0
    for _ in range(iters):
        x = 1 - p + p * x ** sigma
    return x


def test_params_constants():
    for s in (2, 3, 7):
        p = TreeParams(s)
        assert p.p_c == 1 / s
        assert p.rho == (s - 1) / (2 * s)
        assert 0.25 <= p.rho < 0.5
    with pytest.raises(ValueError):
        TreeParams(1)


@pytest.mark.parametrize("p, expected", [(0.5, 0.0), (0.75, 8 / 9), (1.0, 1.0)])
def test_theta_binary_values(binary, p, expected):
    assert theta(binary, p) == pytest.approx(expected, abs=1e-12)


def test_theta_matches_branching_survival(binary, rng):
    # Binomial(2, 3/4) offspring; a lineage with 500 members is treated as surviving
    reps, alive = 20_000, np.ones(20_000, dtype=np.int64)
    for _ in range(30):
        alive = np.minimum(rng.binomial(2 * alive, 0.75), 500)
    freq = np.mean(alive > 0)
    assert abs(freq - 8 / 9) < 4 * np.sqrt(freq * (1 - freq) / reps)


@pytest.mark.parametrize("sigma, p, expected", [(2, 0.5, 1.0), (2, 0.75, 1 / 3), (3, 1.0, 0.0)])
def test_zeta_values(sigma, p, expected):
    assert zeta(TreeParams(sigma), p) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("sigma, p", [(2, 0.75), (2, 0.9), (3, 0.5), (3, 0.8), (4, 0.6)])
def test_zeta_matches_fixed_point_iteration(sigma, p):
    assert zeta(TreeParams(sigma), p) == pytest.approx(_extinction_by_iteration(p, sigma, 5000), abs=1e-10)


def test_domain_errors(binary):
    for f in (theta, zeta):
        with pytest.raises(DomainError):
            f(binary, 1.2)
        with pytest.raises(DomainError):
            f(binary, -0.1)
    with pytest.raises(DomainError):
        zeta_prime(binary, 0.4)
    with pytest.raises(DomainError):
        zeta_prime(binary, 1.0)
    with pytest.raises(DomainError):
        dual(binary, 0.3)


@pytest.mark.parametrize("sigma, expected", [(2, -4.0), (3, -3.0)])
def test_zeta_prime_at_criticality(sigma, expected):
    params = TreeParams(sigma)
    assert zeta_prime(params, params.p_c) == expected
    # the guard band maps to the same limit
    assert zeta_prime(params, params.p_c + 5e-10) == expected


def test_zeta_prime_against_finite_difference(binary, ternary):
    assert zeta_prime(binary, 0.75) == pytest.approx(-16 / 9, rel=1e-12)
    h = 1e-6
    for params, p in ((binary, 0.75), (ternary, 0.45), (ternary, 0.9)):
        fd = (zeta(params, p + h) - zeta(params, p - h)) / (2 * h)
        assert zeta_prime(params, p) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("u, expected", [(0.5, 0.25), (0.75, 0.5625), (0.9, 0.81)])
def test_jump_rate_binary_is_square(binary, u, expected):
    assert jump_rate(binary, u) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("sigma, p, expected", [(2, 0.75, 0.25), (2, 0.5, 0.5), (3, 1.0, 0.0)])
def test_dual_values(sigma, p, expected):
    assert dual(TreeParams(sigma), p) == pytest.approx(expected, abs=1e-12)


def test_theta_inverse_values(binary, ternary):
    assert theta_inverse(binary, 8 / 9) == pytest.approx(0.75, abs=1e-12)
    assert theta_inverse(binary, 1.0) == pytest.approx(1.0, abs=1e-12)
    ref = brentq(lambda p: theta(ternary, p) - 0.5, ternary.p_c, 1.0, xtol=1e-14)
    assert theta_inverse(ternary, 0.5) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("sigma", [2, 3, 5])
def test_consistency_on_grid(sigma):
    params = TreeParams(sigma)
    g = np.linspace(0, 1, 1001)
    t, z = theta(params, g), zeta(params, g)
    assert np.max(np.abs(t - (1 - z ** sigma))) <= 1e-10
    assert np.max(np.abs(z - (1 - g * t))) <= 1e-10


def test_binary_closed_forms(binary):
    g = np.linspace(0.5, 1, 1000)
    assert np.allclose(theta(binary, g), (2 * g - 1) / g ** 2, atol=1e-12)
    assert np.allclose(zeta(binary, g), (1 - g) / g, atol=1e-12)
    assert np.allclose(dual(binary, g), 1 - g, atol=1e-12)


@pytest.mark.parametrize("sigma", [2, 3])
def test_zeta_convex_above_criticality(sigma):
    params = TreeParams(sigma)
    z = zeta(params, np.linspace(params.p_c, 1, 2001))
    assert np.min(np.diff(z, 2)) >= -1e-8


@pytest.mark.parametrize("sigma", [2, 3, 4])
@pytest.mark.parametrize("delta", [1e-2, 1e-3, 1e-4])
def test_near_critical_slopes(sigma, delta):
    params = TreeParams(sigma)
    p = params.p_c * (1 + delta)
    ratio = theta(params, p) / (sigma * (p - params.p_c) / params.rho)
    assert abs(ratio - 1) <= 10 * delta
    assert abs((params.p_c - dual(params, p)) / (p - params.p_c) - 1) <= 10 * (p - params.p_c)


@pytest.mark.parametrize("sigma", [2, 3])
def test_dual_strictly_decreasing(sigma):
    params = TreeParams(sigma)
    d = dual(params, np.linspace(params.p_c, 1, 500)[1:-1])
    assert np.all(np.diff(d) < 0)
    assert np.all(d < params.p_c)


@pytest.mark.parametrize("sigma", [2, 3, 4])
def test_theta_inverse_is_right_inverse(sigma):
    params = TreeParams(sigma)
    u = np.arange(1, 100) / 100
    assert np.max(np.abs(theta(params, theta_inverse(params, u)) - u)) <= 1e-10


@given(st.integers(2, 8), st.floats(0.0, 1.0))
def test_theta_zeta_relations_property(sigma, p):
    params = TreeParams(sigma)
    t, z = theta(params, p), zeta(params, p)
    assert 0.0 <= t <= 1.0 and 0.0 <= z <= 1.0
    assert abs(t - (1 - z ** sigma)) <= 1e-10
    if p <= params.p_c:
        assert t == pytest.approx(0.0, abs=1e-12)


@given(st.integers(2, 6), st.floats(0.0, 1.0, exclude_min=True))
def test_theta_inverse_property(sigma, u):
    params = TreeParams(sigma)
    p = theta_inverse(params, u)
    assert params.p_c <= p <= 1.0
    assert theta(params, p) == pytest.approx(u, abs=1e-10)


def test_table_columns(binary):
    cols = table(binary, np.linspace(0, 1, 11))
    assert list(cols) == ["p", "theta", "zeta", "zeta_prime", "R", "p_hat"]
    assert np.isnan(cols["p_hat"][0]) and cols["p_hat"][5] == pytest.approx(0.5)
    assert cols["R"][5] == pytest.approx(0.25)
