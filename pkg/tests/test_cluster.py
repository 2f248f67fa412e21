import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from invade_tree.analytic import TreeParams
from invade_tree.cluster import (contains, full_children_ratio, invade_direct, missing_vertices, render_svg,
                                 sample_coupled, sample_iic, sample_ipc, sample_profiles, sample_trees,
                                 slice_counts)
from invade_tree.cluster.render import hue_color
from invade_tree.cluster.structural import enumerate_depth_one
from invade_tree.errors import MemoryBudgetError
from invade_tree.stats import McEstimate, binomial_se, ks_test
from invade_tree.transform import conditional_slice_mean, conditional_volume_mean


def _check_tree(t):
    H, sigma = t.height_cap, t.params.sigma
    assert t.parent[0] == -1 and t.height[0] == 0
    assert np.all(np.diff(t.height) >= 0)  # breadth-first arena
    kids = t.parent[1:]
    assert np.all(t.height[1:] == t.height[kids] + 1)
    assert np.all(t.height <= H)
    # children blocks are contiguous and consistent with parent pointers
    for v in np.nonzero(t.n_child)[0][:200]:
        block = np.arange(t.first_child[v], t.first_child[v] + t.n_child[v])
        assert np.all(t.parent[block] == v)
        assert len(set(t.slot[block])) == block.size
    assert np.all(t.n_child <= sigma)
    bb = np.nonzero(t.backbone)[0]
    assert np.array_equal(np.sort(t.height[bb]), np.arange(H + 1))
    assert np.all(t.parent[bb[1:]] == bb[:-1])
    assert t.counts[0] == 1 and t.counts.sum() == t.size
    assert np.all(t.cumulative() >= np.arange(H + 1) + 1)
    assert np.all(t.origin <= t.height)
    assert np.all(t.origin[bb] == t.height[bb])


@given(st.integers(2, 4), st.integers(1, 40), st.integers(0, 2 ** 31), st.sampled_from(["ipc", "iic"]))
def test_tree_invariants(sigma, H, seed, kind):
    params = TreeParams(sigma)
    t = (sample_ipc if kind == "ipc" else sample_iic)(params, H, seed)
    assert t.kind == kind
    _check_tree(t)
    if kind == "ipc":
        assert np.all(t.w_hat < params.p_c)


def test_validation(binary):
    with pytest.raises(ValueError):
        sample_ipc(binary, 0, 1)
    with pytest.raises(MemoryBudgetError):
        sample_iic(binary, 400, 1, cap=100)


def test_height_one(ternary):
    sides, expect = [], []
    for s in range(3000):
        t = sample_ipc(ternary, 1, s)
        assert t.size == 2 + (t.counts[1] - 1)
        sides.append(t.counts[1] - 1)
        expect.append(2 * t.w_hat[0])
    sides = np.array(sides)
    assert sides.min() >= 0 and sides.max() <= 2
    assert McEstimate.from_samples(sides - np.array(expect)).within(0.0)


@pytest.mark.parametrize("kind", ["ipc", "iic"])
def test_structural_matches_conditional_means(binary, kind):
    """Per tree, E(C[n] | W) and E(C[0,n] | W) are exact; the residuals must average to zero."""
    n = 40
    res_s, res_v = [], []
    for t in sample_trees(binary, n, 3000, seed=5, kind=kind):
        res_s.append(t.counts[n] / (binary.rho * n) - conditional_slice_mean(binary, t.w_hat, n)[0])
        res_v.append(t.cumulative()[n] / (binary.rho * n * n) - conditional_volume_mean(binary, t.w_hat, n)[0])
    assert McEstimate.from_samples(res_s).within(0.0)
    assert McEstimate.from_samples(res_v).within(0.0)


def test_profiles_agree_with_trees(binary):
    n = 30
    c_prof, _ = sample_profiles(binary, n, 4000, seed=1)
    trees = np.array([t.cumulative()[n] for t in sample_trees(binary, n, 4000, seed=2)])
    a = McEstimate.from_samples(c_prof.sum(axis=1))
    b = McEstimate.from_samples(trees)
    assert abs(a.mean - b.mean) <= 3 * np.hypot(a.se, b.se)
    # the same replica seed drives the same chain, so the sums share their mean exactly
    assert np.all(c_prof[:, 0] == 1)


def test_iic_slice_mean(binary):
    n = 200
    counts, _ = sample_profiles(binary, n, 10_000, seed=7, kind="iic")
    g = McEstimate.from_samples(counts[:, n] / (binary.rho * n))
    # exact finite-n mean is 2 + 1/(rho n)
    assert g.within(2.0 + 1 / (binary.rho * n))
    assert g.within(2.0, 3, 0.1)


@given(st.integers(1, 60), st.integers(0, 2 ** 31))
def test_coupled_containment(H, seed):
    ipc, iic = sample_coupled(TreeParams(2), H, seed)
    assert contains(iic, ipc)
    assert missing_vertices(ipc, iic) == 0
    assert np.all(ipc.w_hat < ipc.params.p_c)
    assert np.array_equal(ipc.height[ipc.backbone], iic.height[iic.backbone])
    _check_tree(ipc)
    _check_tree(iic)


def test_coupled_containment_sigma3(ternary):
    for s in range(200):
        ipc, iic = sample_coupled(ternary, 30, s)
        assert contains(iic, ipc)


def test_containment_detects_violation(binary):
    a = sample_iic(binary, 20, 1)
    assert contains(a, a)
    big = max((sample_iic(binary, 20, s) for s in range(2, 12)), key=lambda t: t.size)
    assert big.size > a.size
    assert not contains(a, big)
    assert missing_vertices(big, a) > 0
    assert not contains(sample_iic(binary, 10, 3), sample_iic(binary, 20, 3))


def test_coupled_slice_ratio(binary):
    n, reps = 200, 3000
    a = np.array([[i.counts[n], j.counts[n]] for i, j in (sample_coupled(binary, n, s) for s in range(reps))], float)
    ratio = a[:, 0].mean() / a[:, 1].mean()
    m = a.mean(axis=0)
    g = np.array([1 / m[1], -m[0] / m[1] ** 2])
    se = np.sqrt(g @ np.cov(a.T) @ g / reps)
    assert abs(ratio - 0.5) <= 3 * se + 0.025


def test_slice_counts(binary):
    t = sample_ipc(binary, 60, 4)
    assert np.array_equal(slice_counts(t, 0), t.counts)
    for n in (1, 10, 60):
        assert slice_counts(t, n)[n] == 1
    # floors are nested
    assert np.all(slice_counts(t, 5) >= slice_counts(t, 20))
    with pytest.raises(ValueError):
        slice_counts(t, 61)


def test_slice_floor_matches_conditional_and_limit(binary):
    n, k, reps = 300, 10, 3000
    counts, floor = sample_profiles(binary, n, reps, seed=9, k_floor=k)
    assert np.all(floor <= counts)
    rho = binary.rho
    g_k = McEstimate.from_samples(floor[:, n] / (rho * n))
    g_0 = McEstimate.from_samples(counts[:, n] / (rho * n))
    # removing branches below height k = o(n) changes Gamma_n by O(k/n)
    assert abs(g_k.mean - g_0.mean) <= 3 * g_0.se + 0.05
    assert g_k.within(1.0, 3, 0.1)


@pytest.mark.slow
def test_local_limit_of_full_neighbourhood(binary):
    """Size-biased chance that a height-m vertex has all children approaches p_c^sigma = 1/4."""
    gaps, ses = [], []
    for m in (50, 100, 200):
        a = np.array([full_children_ratio(t, m) for t in sample_trees(binary, m + 1, 2000, seed=m)], float)
        mf, mc = a.mean(axis=0)
        g = np.array([1 / mc, -mf / mc ** 2])
        ses.append(np.sqrt(g @ np.cov(a.T) @ g / len(a)))
        gaps.append(abs(mf / mc - 0.25))
    for i in range(2):
        assert gaps[i + 1] <= gaps[i] + 3 * np.hypot(ses[i], ses[i + 1])
    assert gaps[-1] <= 3 * ses[-1] + 0.005


def test_depth_one_enumeration():
    assert enumerate_depth_one(3) == 5
    assert enumerate_depth_one(2) == 3


# ---- direct invasion ---------------------------------------------------------


@given(st.integers(2, 4), st.integers(1, 500), st.integers(0, 2 ** 31))
def test_invasion_trace_structure(sigma, steps, seed):
    tr = invade_direct(TreeParams(sigma), steps, seed)
    assert tr.steps == steps
    assert np.all(tr.parent[1:] < np.arange(1, steps + 1))
    assert np.all(tr.height[1:] == tr.height[tr.parent[1:]] + 1)
    pairs = set(zip(tr.parent[1:].tolist(), tr.slot[1:].tolist()))
    assert len(pairs) == steps
    assert np.all((tr.slot[1:] >= 0) & (tr.slot[1:] < sigma))
    # an edge waits in the boundary from its parent's step to its own: every weight accepted
    # in between is no larger (minimum-priority rule)
    for i in range(1, steps + 1):
        j = tr.parent[i]
        if i - j > 1:
            assert tr.weight[j + 1:i].max() <= tr.weight[i]
    assert tr.boundary_weight.size == (sigma - 1) * steps + sigma


def test_first_step_is_min_of_uniforms(binary, ternary):
    for params in (binary, ternary):
        w = [invade_direct(params, 1, s).weight[1] for s in range(3000)]
        res = ks_test(w, lambda x: 1 - (1 - np.clip(x, 0, 1)) ** params.sigma)
        assert res.passes(0.01)


def test_max_weight_law_small_scale(binary):
    from invade_tree.analytic import theta
    w = [invade_direct(binary, 10_000, s).max_weight() for s in range(2000)]
    assert ks_test(w, lambda u: theta(binary, np.clip(u, 0, 1))).passes(0.01)


def test_heavy_edges_stop(binary):
    level = binary.p_c + 0.1
    late = 0
    counts = []
    for s in range(300):
        tr = invade_direct(binary, 8000, s)
        a, b = tr.count_above(level, 2000), tr.count_above(level, 8000)
        assert b >= a
        late += b > a
        counts.append(b)
    assert late / 300 <= 0.05
    assert np.mean(counts) < 20


def test_stabilization_flags(binary):
    tr = invade_direct(binary, 10_000, 3, height_window=8)
    assert tr.window == 8
    if tr.stabilized:
        assert tr.frontier() >= 32
        assert tr.last_change_step <= 5000
    short = invade_direct(binary, 20, 3, height_window=8)
    assert not short.stabilized  # cannot reach height 32 in 20 steps
    with pytest.raises(ValueError):
        invade_direct(binary, 0, 1)


def test_direct_runs_have_one_long_lineage(binary):
    tr = invade_direct(binary, 20_000, 8)
    assert tr.lineages(5, tr.frontier() - 5) == 1


# ---- rendering ---------------------------------------------------------------


def test_render_single_edge(tmp_path, binary):
    tr = invade_direct(binary, 1, 0)
    doc = render_svg(tr, tmp_path / "one.svg")
    root = ET.fromstring(doc.split("?>", 1)[1])
    lines = root.findall(".//{http://www.w3.org/2000/svg}line")
    assert len(lines) == 1
    assert lines[0].get("stroke") == hue_color(1.0) == hue_color(0.0)


def test_render_hues_and_wellformed(tmp_path, binary):
    tr = invade_direct(binary, 10_000, 1)
    path = tmp_path / "run.svg"
    render_svg(tr, path)
    root = ET.parse(path).getroot()
    assert root.tag == "{http://www.w3.org/2000/svg}svg" and root.get("version") == "1.1"
    lines = root.findall(".//{http://www.w3.org/2000/svg}line")
    assert len(lines) == 10_000
    assert lines[0].get("stroke") == hue_color(1 / 10_000)
    assert lines[-1].get("stroke") == hue_color(1.0)
    # the last edge is nearly as red as the first
    r, g, b = (int(lines[-1].get("stroke")[i:i + 2], 16) for i in (1, 3, 5))
    assert r > 200 and g < 20 and b < 20
    # deterministic
    assert render_svg(tr, tmp_path / "again.svg") == path.read_text()
