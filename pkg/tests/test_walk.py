import numpy as np
import pytest
from hypothesis import given, strategies as st

from invade_tree.analytic import TreeParams
from invade_tree.cluster.structural import sample_iic, sample_ipc
from invade_tree.errors import BoundaryContactError, DegenerateInputError, StepBudgetError
from invade_tree.walk import (backbone_tree, endpoint_probability, environment_height, exit_time,
                              exit_times, fit_exponent, heat_kernel_symmetry, walk, walk_exponents)


def _transition(tree):
    n = tree.size
    P = np.zeros((n, n))
    for y in range(n):
        nb = list(range(tree.first_child[y], tree.first_child[y] + tree.n_child[y]))
        if tree.parent[y] >= 0:
            nb.append(tree.parent[y])
        P[y, nb] = 1.0 / len(nb)
    return P


@pytest.fixture(scope="module")
def small_iic():
    # height cap well above what a 6-step walk can reach
    return sample_iic(TreeParams(2), 12, seed=3)


def test_zero_steps_visits_only_start(binary):
    tree = backbone_tree(binary, 5)
    s = walk(tree, 2, 0, seed=1)
    assert s.range_size == 1 and s.returns == 0


def test_range_checkpoints_monotone(small_iic):
    s = walk(small_iic, 0, 8, seed=2, checkpoints=[0, 2, 4, 6])
    assert s.ranges[0] == 1
    assert np.all(np.diff(s.ranges) >= 0)
    assert np.all(np.diff(s.ranges) <= np.diff(s.checkpoints))


def test_backbone_exit_time_is_quadratic(binary):
    # on a path reflected at the root, E T_n = n^2
    n = 12
    tree = backbone_tree(binary, n)
    t = np.array([exit_time(tree, n, seed=s) for s in range(3000)], float)
    se = t.std(ddof=1) / np.sqrt(t.size)
    assert abs(t.mean() - n * n) < 3 * se


def test_exit_times_ordered():
    t = exit_times(backbone_tree(TreeParams(2), 20), [5, 10, 20], seed=4)
    assert t[0] >= 5
    assert np.all(np.diff(t) > 0)


def test_first_step_uniform_over_children(small_iic):
    mu = small_iic.n_child[0]
    c = small_iic.first_child[0]
    q, se = endpoint_probability(small_iic, 0, c, 1, 20000, seed=5)
    assert abs(q - 1 / mu) < 3 * se


def test_endpoint_against_matrix_power(small_iic):
    P = np.linalg.matrix_power(_transition(small_iic), 4)
    y = int(np.flatnonzero(P[0] > 0)[-1])
    q, se = endpoint_probability(small_iic, 0, y, 4, 40000, seed=6)
    assert abs(q - P[0, y]) < 3 * se + 1e-3


def test_heat_kernel_symmetric(small_iic):
    y = int(np.flatnonzero(small_iic.height == 2)[0])
    a, b, se = heat_kernel_symmetry(small_iic, 0, y, 4, 40000, seed=7)
    assert abs(a - b) < 3 * se
    # and the exact kernel is symmetric too
    P = np.linalg.matrix_power(_transition(small_iic), 4)
    mu = small_iic.degree()
    assert P[0, y] / mu[y] == pytest.approx(P[y, 0] / mu[0])


def test_boundary_contact_raised(binary):
    tree = backbone_tree(binary, 3)
    with pytest.raises(BoundaryContactError):
        walk(tree, 0, 200, seed=8)


def test_step_budget(binary):
    with pytest.raises(StepBudgetError):
        exit_times(backbone_tree(binary, 50), [50], seed=9, budget=10)


def test_bad_arguments(binary):
    tree = backbone_tree(binary, 4)
    with pytest.raises(ValueError):
        walk(tree, 99, 3, seed=0)
    with pytest.raises(ValueError):
        walk(tree, 0, -1, seed=0)
    with pytest.raises(ValueError):
        exit_times(tree, [10], seed=0)


def test_environment_height_exceeds_reach():
    for k in (10, 1000, 10 ** 5):
        assert environment_height(k) > k ** (1 / 3)


def test_fit_exponent_exact_and_noisy():
    x = np.geomspace(1, 1e4, 12)
    assert fit_exponent(x, x ** 3).slope == pytest.approx(3.0)
    noise = np.exp(np.random.default_rng(0).normal(0, 0.01, x.size))
    assert abs(fit_exponent(x, 5 * x ** (2 / 3) * noise).slope - 2 / 3) < 0.05
    assert fit_exponent(x, np.full(x.size, 7.0)).slope == pytest.approx(0.0, abs=1e-12)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_fit_exponent_recovers_power(a, c):
    x = np.array([1.0, 2.0, 5.0, 11.0])
    f = fit_exponent(x, c * x ** a)
    assert f.slope == pytest.approx(a, abs=1e-9)
    assert np.exp(f.intercept) == pytest.approx(c, rel=1e-9)


def test_fit_exponent_degenerate():
    with pytest.raises(DegenerateInputError):
        fit_exponent([1, 2], [1, 2])
    with pytest.raises(DegenerateInputError):
        fit_exponent([1, 2, 3], [1, 0, 2])
    with pytest.raises(DegenerateInputError):
        fit_exponent([2, 2, 2], [1, 2, 3])


def test_walk_reproducible():
    tree = sample_ipc(TreeParams(2), 40, seed=10)
    a = walk(tree, 0, 500, seed=11, checkpoints=[100, 200])
    b = walk(tree, 0, 500, seed=11, checkpoints=[100, 200])
    assert np.array_equal(a.ranges, b.ranges) and a.returns == b.returns


def test_walk_experiment_small(binary):
    e = walk_exponents(binary, "iic", 3, 2, seed=12, log2_k=(3, 6))
    assert e.range_slopes.shape == (3,)
    assert np.all(np.diff(e.mean_range) > 0)
    assert e.attempts >= 3 and 0 <= e.contact_rate < 1
