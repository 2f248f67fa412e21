import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from invade_tree.analytic import TreeParams
from invade_tree.cluster.structural import enumerate_depth_one
from invade_tree.errors import LengthMismatchError
from invade_tree.rpoint import (RootBranchingWarning, SpanningGeometry, UnsupportedGeometryError,
                                backbone_density, density_slope, exit_law, exit_ratio, finite_rpoint,
                                iic_exit_cdf, iic_rpoint, kolmogorov_distance_limit, limit_joint, limit_rpoint,
                                segment_terms, three_point_u)
from invade_tree.weight_chain import sample_chains


@st.composite
def geometries(draw, max_nodes=12, root_branching=False, integer=False):
    k = draw(st.integers(1, max_nodes - 1))
    length = st.integers(1, 30) if integer else st.floats(0.05, 5.0)
    edges = [("a", "o", draw(length))]
    names = ["a"]
    for i in range(k - 1):
        pool = names + (["o"] if root_branching else [])
        par = draw(st.sampled_from(pool))
        edges.append((f"n{i}", par, draw(length)))
        names.append(f"n{i}")
    return SpanningGeometry.from_edges(edges)


@pytest.fixture(scope="module")
def chains(binary):
    return sample_chains(binary, 400, 3000, seed=31)


def _rand_geom(rng, extra):
    edges, names = [("a", "o", rng.uniform(0.2, 1))], ["a"]
    for i in range(extra):
        par = names[rng.integers(len(names))]
        edges.append((f"n{i}", par, rng.uniform(0.2, 1)))
        names.append(f"n{i}")
    return SpanningGeometry.from_edges(edges).scaled()


@given(geometries(root_branching=True))
def test_geometry_invariants(g):
    s = g.scaled()
    assert s.total == pytest.approx(1.0)
    assert s.check_invariants()
    for v in s.segments:
        assert 0 < s.pi(v) <= 1 + 1e-12
        assert all(0 < f <= 1 + 1e-12 for f in s.pi_factors(v))
        # telescoping: m_w^v - n_w^v = t_w + m_{w-}^v along the path to v
        for w in s.ancestors(v)[1:]:
            lhs = s.m(w, v) - s.n_side(w, v)
            assert lhs == pytest.approx(s.t(w) + s.m(s.parent[w], v), abs=1e-12)


def test_parse_roundtrip(tmp_path):
    text = "# three points\n* o 2\nx1 * 3  # left\nx2 * 1\n"
    g = SpanningGeometry.parse(text)
    assert g.names == ("o", "*", "x1", "x2") and g.total == 6 and g.is_integer
    (tmp_path / "g.txt").write_text(g.dumps())
    assert SpanningGeometry.load(tmp_path / "g.txt") == g
    for bad in ("x1 o", "x1 zz 3", "x1 o -1", "x1 o abc", "o o 1"):
        with pytest.raises(ValueError):
            SpanningGeometry.parse(bad)


def test_integer_apportionment():
    g = SpanningGeometry.three_point(1 / 3, 1 / 3, 1 / 3).integer(400)
    assert g.length[1:] == (133, 134, 133) or sum(g.length[1:]) == 400
    assert sum(g.length) == 400 and g.is_integer
    with pytest.raises(ValueError):
        SpanningGeometry.three_point(0.001, 0.5, 0.499).integer(100)


def test_two_point_limits():
    g = SpanningGeometry.path(1.0)
    assert limit_rpoint(g) == pytest.approx(0.5)
    for s in (0.0, 0.25, 0.5, 1.0):
        assert limit_joint(g, "x1", s) == pytest.approx(s)
        assert backbone_density(g, "x1", s) == pytest.approx(2 * s)


def test_three_point_limits():
    sym = SpanningGeometry.three_point(1 / 3, 1 / 3, 1 / 3)
    assert limit_joint(sym, "x1", 0.0) == pytest.approx(1 / 3)
    assert limit_rpoint(sym) == pytest.approx(1 / 3)
    assert three_point_u(1 / 3, 1 / 3, 1 / 3) == pytest.approx(1.0)
    for ts in ((0.5, 0.3, 0.2), (0.1, 0.6, 0.3), (0.7, 0.1, 0.2)):
        g = SpanningGeometry.three_point(*ts)
        assert limit_rpoint(g) == pytest.approx(ts[0] * three_point_u(*ts), rel=1e-12)


@given(geometries(max_nodes=8))
def test_density_normalised_continuous_and_flattening(g):
    s = g.scaled()
    # density is linear on each segment: the trapezoid rule is exact
    total = sum(0.5 * s.t(v) * (backbone_density(s, v, 0.0) + backbone_density(s, v, s.t(v))) for v in s.segments)
    assert total == pytest.approx(1.0, rel=1e-10)
    for v in s.segments:
        assert backbone_density(s, v, 0.0) >= -1e-12
        assert density_slope(s, v) > 0
        for c in s.children(v):
            assert limit_joint(s, c, 0.0) == pytest.approx(limit_joint(s, v, s.t(v)), rel=1e-12)
            assert density_slope(s, c) <= density_slope(s, v) + 1e-12


def test_root_branching_returns_zero():
    g = SpanningGeometry.from_edges([("x1", "o", 0.5), ("x2", "o", 0.5)])
    assert g.branches_at_root
    with pytest.warns(RootBranchingWarning):
        assert limit_rpoint(g) == 0.0
    with pytest.warns(RootBranchingWarning):
        assert limit_joint(g, "x1", 0.2) == 0.0
    with pytest.raises(UnsupportedGeometryError):
        limit_rpoint(g, strict=True)


def test_offset_checked():
    with pytest.raises(ValueError):
        limit_joint(SpanningGeometry.path(1.0), "x1", 1.5)


@given(geometries(max_nodes=6, root_branching=True, integer=True), st.integers(2, 4))
def test_critical_chain_counts_boundary(g, sigma):
    """With W_hat = p_c every weight is 1 and the sum counts the N(sigma-1)+sigma boundary vertices."""
    N = g.total
    w = np.full((3, N + 1), 1 / sigma)
    e = finite_rpoint(g, w, params=TreeParams(sigma))
    total, prob = iic_rpoint(N, sigma)
    assert e.mean * (sigma - 1) * N == pytest.approx(float(total), rel=1e-12)
    assert prob == Fraction(1, N * (sigma - 1) + sigma)


def test_iic_values():
    assert iic_rpoint(10, 2) == (12, Fraction(1, 12))
    assert iic_rpoint(1, 3)[0] == 5 == enumerate_depth_one(3)
    with pytest.raises(ValueError):
        iic_rpoint(0)
    cdf = iic_exit_cdf(10)
    assert cdf[-1] == pytest.approx(1.0) and cdf[0] == pytest.approx(1 / 12)


def test_length_mismatch(binary):
    b = sample_chains(binary, 50, 4, seed=1)
    with pytest.raises(LengthMismatchError):
        finite_rpoint(SpanningGeometry.path(80), b)
    with pytest.raises(ValueError):
        finite_rpoint(SpanningGeometry.path(0.5), b)


def test_terms_increase_in_k(chains, binary):
    g = SpanningGeometry.three_point(1 / 3, 1 / 3, 1 / 3).integer(300)
    lg = np.log(2 * chains.dual()[:200, :301])
    for v in g.segments:
        t = segment_terms(g, v, lg, 2)
        assert np.all(np.diff(t, axis=1) >= -1e-15)


def test_summed_convergence(chains):
    rng = np.random.default_rng(4)
    for extra in (0, 1, 2, 3):
        g = _rand_geom(rng, extra)
        lim = limit_rpoint(g)
        gaps = [abs(finite_rpoint(g.integer(N), chains).mean - lim) for N in (50, 100, 200, 400)]
        assert np.all(np.diff(gaps) < 0), gaps
        # the gap shrinks roughly like N^(-0.7) here, slowed by logarithmic corrections
        assert gaps[-1] < 0.4 * gaps[0]


def test_joint_mode_and_exit_ratio(chains):
    g = SpanningGeometry.path(400)
    e = finite_rpoint(g, chains, "joint", ("x1", 200))
    assert e.mean > 0
    r = exit_ratio(g, chains, ("x1", 200))
    assert r.within(1.0, 3, 0.05)
    with pytest.raises(ValueError):
        finite_rpoint(g, chains, "joint", ("x1", 401))
    with pytest.raises(ValueError):
        finite_rpoint(g, chains, "bogus")


def test_exit_law_kolmogorov_distance(chains):
    assert kolmogorov_distance_limit() == 0.25
    s = np.linspace(0, 1, 100_001)
    assert np.max(np.abs(s ** 2 - s)) == pytest.approx(0.25)
    gaps = []
    for N in (100, 200, 400):
        h, p = exit_law(SpanningGeometry.path(N), chains)
        assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
        gaps.append(abs(np.max(np.abs(np.cumsum(p) - iic_exit_cdf(N))) - 0.25))
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] <= 0.0125 + 0.01
