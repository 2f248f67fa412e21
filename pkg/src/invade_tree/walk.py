"""Simple random walk on sampled cluster trees.

From y the walk moves to a uniformly chosen neighbour among the parent (absent
at the root) and the children present in the tree, so the step probability
is 1/mu_y.  Trees are the breadth-first arenas of ``cluster.structural``;
the children of y are ``first_child[y] : first_child[y] + n_child[y]``.
Vertices at the height cap have their children cut off, so touching the
cap means the environment was too small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .analytic import TreeParams
from .cluster.structural import ClusterTree, sample_iic, sample_ipc
from .errors import BoundaryContactError, DegenerateInputError, StepBudgetError
from .stats import LineFit
from .streams import derive_seed, stream

@njit(cache=True)
def _step(rng, y, parent, first, nch):
    up = 1 if parent[y] >= 0 else 0
    j = int(rng.random() * (nch[y] + up))
    if j < nch[y]:
        return first[y] + j
    return parent[y]


@njit(cache=True)
def _walk(rng, parent, first, nch, height, cap, start, steps, checks, seen, stamp):
    """Walk ``steps`` steps.  Returns (status, returns per even step, range at checkpoints).

    ``seen``/``stamp`` implement a reusable visited set: seen[v] == stamp
    marks v as visited in this walk.  status is the number of steps taken,
    or -1 on contact with the cap.
    """
    ranges = np.zeros(checks.shape[0], np.int64)
    rets = np.zeros(steps // 2 + 1, np.int64)
    y = start
    seen[y] = stamp
    size = 1
    c = 0
    while c < checks.shape[0] and checks[c] == 0:
        ranges[c] = 1
        c += 1
    rets[0] = 1
    for k in range(1, steps + 1):
        y = _step(rng, y, parent, first, nch)
        if height[y] >= cap:
            return -1, rets, ranges
        if seen[y] != stamp:
            seen[y] = stamp
            size += 1
        if (k & 1) == 0 and y == start:
            rets[k >> 1] += 1
        while c < checks.shape[0] and checks[c] == k:
            ranges[c] = size
            c += 1
    return steps, rets, ranges


@njit(cache=True)
def _exit(rng, parent, first, nch, height, start, levels, budget, out):
    """First hitting times of each height in ``levels`` (increasing).  Returns steps or -1."""
    y = start
    j = 0
    while j < levels.shape[0] and height[y] >= levels[j]:
        out[j] = 0
        j += 1
    k = 0
    while j < levels.shape[0]:
        if k >= budget:
            return -1
        y = _step(rng, y, parent, first, nch)
        k += 1
        while j < levels.shape[0] and height[y] >= levels[j]:
            out[j] = k
            j += 1
    return k


@njit(cache=True)
def _endpoint_counts(rng, parent, first, nch, height, cap, start, k, walks, target):
    hit = 0
    for _ in range(walks):
        y = start
        for _s in range(k):
            y = _step(rng, y, parent, first, nch)
            if height[y] >= cap:
                return -1
        if y == target:
            hit += 1
    return hit


@dataclass(frozen=True)
class WalkSummary:
    steps: int
    range_size: int
    returns: int  # visits to the start at even steps 2, 4, ..., steps
    exit_time: int | None
    start: int
    tree_kind: str
    tree_seed: int | None
    checkpoints: np.ndarray | None = None  # step counts
    ranges: np.ndarray | None = None  # |R_k| at the checkpoints
    return_steps: np.ndarray | None = None  # returns[j] = 1 iff X_{2j} = start


def _arrays(tree: ClusterTree):
    return tree.parent, tree.first_child, tree.n_child, tree.height


def walk(tree: ClusterTree, start: int, steps: int, seed: int, checkpoints=None,
         _seen=None) -> WalkSummary:
    """Run one walk of ``steps`` steps from ``start``.

    Raises BoundaryContactError if the walk reaches the height cap.
    """
    if not 0 <= start < tree.size:
        raise ValueError(f"start vertex {start} not in the tree")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    checks = np.unique(np.append(np.asarray([] if checkpoints is None else checkpoints, np.int64), steps))
    if checks[0] < 0 or checks[-1] > steps:
        raise ValueError("checkpoints must lie in [0, steps]")
    seen = np.zeros(tree.size, np.int64) if _seen is None else _seen
    stamp = int(seen.max()) + 1
    p, f, n, h = _arrays(tree)
    status, rets, ranges = _walk(stream(seed, "walk"), p, f, n, h, tree.height_cap, start, steps,
                                 checks, seen, stamp)
    if status < 0:
        raise BoundaryContactError(f"walk reached the height cap {tree.height_cap}")
    return WalkSummary(steps, int(ranges[-1]), int(rets[1:].sum()), None, start, tree.kind,
                       tree.seed, checks, ranges, rets)


def exit_times(tree: ClusterTree, levels, seed: int, budget: int | None = None, start: int = 0) -> np.ndarray:
    """T_n = min{k : |X_k| = n} for each n in ``levels`` from a single walk."""
    levels = np.sort(np.asarray(levels, np.int64))
    if levels[-1] > tree.height_cap:
        raise ValueError("levels above the height cap are unreachable")
    if budget is None:
        budget = 100 * int(levels[-1]) ** 3
    out = np.empty(levels.shape[0], np.int64)
    p, f, n, h = _arrays(tree)
    k = _exit(stream(seed, "exit"), p, f, n, h, start, levels, budget, out)
    if k < 0:
        raise StepBudgetError(f"no exit above height {levels[-1]} within {budget} steps")
    return out


def exit_time(tree: ClusterTree, n: int, seed: int, budget: int | None = None) -> int:
    """T_n from the root; the tree's height cap should be n."""
    return int(exit_times(tree, [n], seed, budget)[0])


def endpoint_probability(tree: ClusterTree, x: int, y: int, k: int, walks: int, seed: int):
    """Estimate P(X_k = y | X_0 = x) and its binomial SE from ``walks`` walks."""
    p, f, n, h = _arrays(tree)
    hit = _endpoint_counts(stream(seed, "endpoint", x, y), p, f, n, h, tree.height_cap, x, k, walks, y)
    if hit < 0:
        raise BoundaryContactError(f"walk reached the height cap {tree.height_cap}")
    q = hit / walks
    return q, math.sqrt(max(q * (1 - q), 1.0 / walks) / walks)


def heat_kernel_symmetry(tree: ClusterTree, x: int, y: int, k: int, walks: int, seed: int):
    """(p_k(x, y), p_k(y, x), combined SE) with p_k(x, y) = P_x(X_k = y) / mu_y."""
    mu = tree.degree()
    a, sa = endpoint_probability(tree, x, y, k, walks, derive_seed(seed, "xy"))
    b, sb = endpoint_probability(tree, y, x, k, walks, derive_seed(seed, "yx"))
    return a / mu[y], b / mu[x], math.hypot(sa / mu[y], sb / mu[x])


def backbone_tree(params: TreeParams, H: int) -> ClusterTree:
    """A bare path of height H (every branch empty)."""
    idx = np.arange(H + 1, dtype=np.int64)
    parent = idx - 1
    first = np.where(idx < H, idx + 1, 0)
    nch = np.where(idx < H, 1, 0).astype(np.int64)
    return ClusterTree(params, H, "backbone", parent, idx.copy(), idx.copy(), np.where(idx > 0, 0, -1),
                       first, nch, np.ones(H + 1, bool))


def environment_height(k_max: int) -> int:
    """Truncation height for walks of up to k_max steps."""
    return int(math.ceil(8.0 * k_max ** (1.0 / 3.0))) + 50


def fit_exponent(x, y) -> LineFit:
    """OLS of log y on log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise DegenerateInputError("need at least three (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateInputError("log-log fit needs positive coordinates")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise DegenerateInputError("all x coincide")
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = lx.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    se = math.sqrt(s2 / float(((lx - lx.mean()) ** 2).sum()))
    return LineFit(float(coef[0]), float(coef[1]), se, float(np.sqrt(np.mean(resid ** 2))))


# experiments over environments ---------------------------------------------

def _sampler(kind):
    if kind == "ipc":
        return sample_ipc
    if kind == "iic":
        return sample_iic
    raise ValueError(f"unknown cluster kind {kind!r}")


@dataclass(frozen=True)
class WalkExperiment:
    kind: str
    ks: np.ndarray  # checkpoints (range) and window starts (returns)
    range_slopes: np.ndarray  # one fitted slope per environment
    mean_range: np.ndarray  # |R_k| averaged over all walks
    return_prob: np.ndarray  # p_2k(o, o) averaged over environments and windows
    return_slope: LineFit
    contacts: int
    attempts: int
    env_ranges: np.ndarray | None = None  # (environments, len(ks)) mean |R_k| per environment
    env_returns: np.ndarray | None = None  # (environments, len(ks) - 1) windowed p_2k per environment

    @property
    def contact_rate(self) -> float:
        return self.contacts / self.attempts

    @property
    def median_range_slope(self) -> float:
        return float(np.median(self.range_slopes))


def walk_exponents(params: TreeParams, kind: str, environments: int, walks_per_env: int, seed: int,
                   log2_k=(10, 16), max_resample: int = 20) -> WalkExperiment:
    """Range and return-probability exponents, each environment walked from its root.

    p_2k(o, o) is estimated on dyadic windows: returns at even steps 2j with
    j in [k, 2k) divided by the number of such steps, then by mu_o.
    """
    lo, hi = log2_k
    ks = 2 ** np.arange(lo, hi + 1)
    k_max = int(ks[-1])
    steps = 2 * k_max
    H = environment_height(steps)
    sampler = _sampler(kind)
    slopes, ranges, probs = [], [], []
    contacts = attempts = 0
    for e in range(environments):
        for a in range(max_resample):
            attempts += 1
            tree = sampler(params, H, derive_seed(seed, "walk-env", kind, e, a))
            seen = np.zeros(tree.size, np.int64)
            rs, ret = [], np.zeros(steps // 2 + 1)
            try:
                for w in range(walks_per_env):
                    s = walk(tree, 0, steps, derive_seed(seed, "walk", kind, e, a, w), ks, seen)
                    rs.append(s.ranges[:ks.size])
                    ret += s.return_steps
            except BoundaryContactError:
                contacts += 1
                continue
            break
        else:
            raise BoundaryContactError(f"environment {e}: {max_resample} contacts in a row")
        r = np.mean(rs, axis=0)
        ranges.append(r)
        slopes.append(fit_exponent(ks, r).slope)
        mu_o = tree.n_child[0]
        probs.append([ret[k:2 * k].sum() / (k * walks_per_env * mu_o) for k in ks[:-1]])
    env_probs = np.asarray(probs)
    probs = env_probs.mean(axis=0)
    ok = probs > 0
    rfit = fit_exponent(ks[:-1][ok], probs[ok]) if ok.sum() >= 3 else LineFit(np.nan, np.nan, np.nan, np.nan)
    return WalkExperiment(kind, ks, np.array(slopes), np.mean(ranges, axis=0), probs, rfit, contacts, attempts,
                          np.asarray(ranges), env_probs)


@dataclass(frozen=True)
class ExitExperiment:
    kind: str
    levels: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    fit: LineFit
    times: np.ndarray | None = None  # (environments * walks_per_env, len(levels))


def exit_exponent(params: TreeParams, kind: str, environments: int, seed: int, levels=(16, 32, 64, 128),
                  walks_per_env: int = 1) -> ExitExperiment:
    """Fit log E(T_n) against log n; every environment is cut at the top level."""
    levels = np.asarray(levels, np.int64)
    sampler = _sampler(kind)
    H = int(levels[-1])
    t = []
    for e in range(environments):
        tree = sampler(params, H, derive_seed(seed, "exit-env", kind, e))
        for w in range(walks_per_env):
            t.append(exit_times(tree, levels, derive_seed(seed, "exit", kind, e, w)))
    t = np.asarray(t, dtype=float)
    mean = t.mean(axis=0)
    se = t.std(axis=0, ddof=1) / np.sqrt(t.shape[0])
    return ExitExperiment(kind, levels, mean, se, fit_exponent(levels, mean), t)
