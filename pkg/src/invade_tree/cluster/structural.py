"""Structural samplers: a backbone path decorated with independent branches.

An IPC tree of height H is built from a weight chain W_0..W_H: every
backbone vertex at height k carries sigma-1 off-backbone child edges, and
the whole branch grown through them is bond percolation with the dual
parameter Ŵ_k.  The IIC uses p_c for every branch.

Trees are stored as a flat arena in breadth-first order, so heights are
non-decreasing along the arrays and the children of a vertex occupy a
contiguous block ``first_child[i] : first_child[i] + n_child[i]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..analytic import TreeParams
from ..errors import MemoryBudgetError
from ..streams import derive_seed, stream
from ..weight_chain import dualize, sample_chain

NODE_CAP = 50_000_000

BACKBONE = 1
MARK = 2


@njit(cache=True)
def _grow(rng, sigma, H, p_open, p_mark, bb_slot, size):
    """Breadth-first growth through edges with u < p_open[origin].

    A vertex is marked when its parent is marked and u < p_mark[origin];
    the backbone is always open and marked.  Fills preallocated arrays of
    length ``size`` and returns the node count, or -1 if they overflow.
    """
    parent = np.empty(size, np.int64)
    height = np.empty(size, np.int64)
    origin = np.empty(size, np.int64)
    slot = np.empty(size, np.int64)
    first = np.empty(size, np.int64)
    nchild = np.empty(size, np.int64)
    flags = np.empty(size, np.int64)
    parent[0] = -1
    height[0] = 0
    origin[0] = 0
    slot[0] = -1
    flags[0] = BACKBONE | MARK
    count = 1
    i = 0
    while i < count:
        h = height[i]
        first[i] = count
        nchild[i] = 0
        if h < H:
            bb = (flags[i] & BACKBONE) != 0
            marked = (flags[i] & MARK) != 0
            for s in range(sigma):
                if bb and s == bb_slot[h]:
                    f = BACKBONE | MARK
                    org = h + 1
                else:
                    org = h if bb else origin[i]
                    u = rng.random()
                    if u >= p_open[org]:
                        continue
                    f = MARK if (marked and u < p_mark[org]) else 0
                if count == size:
                    return parent, height, origin, slot, first, nchild, flags, -1
                parent[count] = i
                height[count] = h + 1
                origin[count] = org
                slot[count] = s
                flags[count] = f
                nchild[i] += 1
                count += 1
        i += 1
    return parent, height, origin, slot, first, nchild, flags, count


@njit(cache=True)
def _extract_marked(parent, height, origin, slot, flags):
    """Sub-arena of marked vertices (parent-closed), preserving order."""
    n = parent.shape[0]
    new = -np.ones(n, np.int64)
    m = 0
    for i in range(n):
        if flags[i] & MARK:
            new[i] = m
            m += 1
    par = np.empty(m, np.int64)
    hei = np.empty(m, np.int64)
    org = np.empty(m, np.int64)
    slo = np.empty(m, np.int64)
    fl = np.empty(m, np.int64)
    first = np.full(m, -1, np.int64)
    nch = np.zeros(m, np.int64)
    for i in range(n):
        j = new[i]
        if j < 0:
            continue
        par[j] = new[parent[i]] if parent[i] >= 0 else -1
        hei[j] = height[i]
        org[j] = origin[i]
        slo[j] = slot[i]
        fl[j] = flags[i]
        if par[j] >= 0:
            if nch[par[j]] == 0:
                first[par[j]] = j
            nch[par[j]] += 1
    for j in range(m):
        if nch[j] == 0:
            first[j] = m
    return par, hei, org, slo, first, nch, fl


@njit(cache=True)
def _contained(sigma, sub_parent, sub_slot, sup_parent, sup_slot, sup_first, sup_nchild):
    """Map every vertex of ``sub`` onto the vertex of ``sup`` with the same
    position in the ambient tree (same parent position and slot).
    Returns the number of sub vertices with no counterpart.
    """
    m = sub_parent.shape[0]
    image = np.empty(m, np.int64)
    image[0] = 0
    missing = 0
    for j in range(1, m):
        pj = sub_parent[j]
        if pj < 0 or image[pj] < 0:
            image[j] = -1
            missing += 1
            continue
        pi = image[pj]
        found = -1
        for c in range(sup_first[pi], sup_first[pi] + sup_nchild[pi]):
            if sup_slot[c] == sub_slot[j]:
                found = c
                break
        image[j] = found
        if found < 0:
            missing += 1
    return missing


@dataclass(frozen=True)
class ClusterTree:
    """A sampled finite truncation of the IPC or IIC."""

    params: TreeParams
    height_cap: int
    kind: str
    parent: np.ndarray
    height: np.ndarray
    origin: np.ndarray  # height of the most recent backbone ancestor (own height on the backbone)
    slot: np.ndarray  # child position under the parent, -1 for the root
    first_child: np.ndarray
    n_child: np.ndarray
    backbone: np.ndarray  # bool
    w_hat: np.ndarray | None = None  # branch parameters by origin height
    seed: int | None = None
    counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "counts", np.bincount(self.height, minlength=self.height_cap + 1))

    @property
    def size(self) -> int:
        return int(self.parent.shape[0])

    def cumulative(self) -> np.ndarray:
        """C[0, n] for n = 0..H."""
        return np.cumsum(self.counts)

    def degree(self) -> np.ndarray:
        return self.n_child + (self.parent >= 0)


def _tree(params, H, kind, arrs, w_hat=None, seed=None):
    parent, height, origin, slot, first, nch, flags = arrs
    return ClusterTree(params, H, kind, parent, height, origin, slot, first, nch,
                       (flags & BACKBONE) != 0, w_hat, seed)


def _run(rng, params, H, p_open, p_mark, cap):
    """Grow one tree; on buffer overflow, rewind the generator and retry with a larger buffer."""
    bb = rng.integers(0, params.sigma, size=max(H, 1))
    p_open = np.ascontiguousarray(p_open, dtype=float)
    p_mark = np.ascontiguousarray(p_mark, dtype=float)
    size = int(min(cap, 1024 + 2 * (H + 1) ** 2 * params.p_c))
    state = rng.bit_generator.state
    while True:
        out = _grow(rng, params.sigma, H, p_open, p_mark, bb, size)
        count = out[-1]
        if count >= 0:
            return tuple(a[:count] for a in out[:-1])
        if size >= cap:
            raise MemoryBudgetError(f"tree exceeds the node cap of {cap}")
        size = int(min(cap, 4 * size))
        rng.bit_generator.state = state


def _branch_params(params, H, seed):
    chain = sample_chain(params, H, derive_seed(seed, "ipc-chain"))
    return dualize(chain).w_hat


def sample_ipc(params: TreeParams, H: int, seed: int, cap: int = NODE_CAP) -> ClusterTree:
    """IPC truncated at height H (branches at origin k use Ŵ_k)."""
    if H < 1:
        raise ValueError("H must be >= 1")
    w_hat = _branch_params(params, H, seed)
    arrs = _run(stream(seed, "ipc-tree"), params, H, w_hat, w_hat, cap)
    return _tree(params, H, "ipc", arrs, w_hat, seed)


def sample_iic(params: TreeParams, H: int, seed: int, cap: int = NODE_CAP) -> ClusterTree:
    if H < 1:
        raise ValueError("H must be >= 1")
    pc = np.full(H + 1, params.p_c)
    arrs = _run(stream(seed, "iic-tree"), params, H, pc, pc, cap)
    return _tree(params, H, "iic", arrs, pc, seed)


def sample_coupled(params: TreeParams, H: int, seed: int, cap: int = NODE_CAP):
    """(ipc, iic) on a shared backbone with one uniform per potential branch edge."""
    if H < 1:
        raise ValueError("H must be >= 1")
    w_hat = _branch_params(params, H, seed)
    if np.any(w_hat >= params.p_c):
        raise ValueError("dual parameters must stay below p_c")
    pc = np.full(H + 1, params.p_c)
    big = _run(stream(seed, "coupled-tree"), params, H, pc, w_hat, cap)
    iic = _tree(params, H, "iic", big, pc, seed)
    small = _extract_marked(big[0], big[1], big[2], big[3], big[6])
    ipc = _tree(params, H, "ipc", small, w_hat, seed)
    return ipc, iic


def missing_vertices(sub: ClusterTree, sup: ClusterTree) -> int:
    """How many vertices of ``sub`` have no counterpart in ``sup`` (0 means sub ⊆ sup)."""
    return int(_contained(sub.params.sigma, sub.parent, sub.slot, sup.parent, sup.slot,
                          sup.first_child, sup.n_child))


def contains(sup: ClusterTree, sub: ClusterTree) -> bool:
    return sub.height_cap <= sup.height_cap and missing_vertices(sub, sup) == 0


def slice_counts(tree: ClusterTree, k_floor: int) -> np.ndarray:
    """C^k[n]: vertices at height n whose most recent backbone ancestor is at height >= k."""
    if not 0 <= k_floor <= tree.height_cap:
        raise ValueError("k_floor must lie in [0, H]")
    keep = tree.origin >= k_floor
    return np.bincount(tree.height[keep], minlength=tree.height_cap + 1)


def full_children_ratio(tree: ClusterTree, m: int):
    """(# height-m vertices with all sigma children present, C[m])."""
    if m >= tree.height_cap:
        raise ValueError("need m < H to see the children of height-m vertices")
    at = tree.height == m
    return int(np.sum(tree.n_child[at] == tree.params.sigma)), int(at.sum())


@njit(cache=True)
def _profile(rng, sigma, H, w_hat, k_floor, counts, floor_counts):
    """Per-height counts by generation sizes: Z' ~ Binomial(sigma Z, p)."""
    for h in range(H + 1):
        counts[h] = 1
        floor_counts[h] = 1 if h >= k_floor else 0
    for k in range(H):
        p = w_hat[k]
        z = rng.binomial(sigma - 1, p)
        h = k + 1
        while z > 0 and h <= H:
            counts[h] += z
            if k >= k_floor:
                floor_counts[h] += z
            if h == H:
                break
            z = rng.binomial(sigma * z, p)
            h += 1


def sample_profiles(params: TreeParams, H: int, replicas: int, seed: int, kind: str = "ipc",
                    k_floor: int = 0):
    """Per-height counts of many trees without building them.

    Uses the IPC chain of ``sample_ipc`` with the same replica seed, but draws
    branch generation sizes as binomials instead of per-edge uniforms.  Returns
    (counts, floor_counts), each of shape (replicas, H+1).
    """
    counts = np.empty((replicas, H + 1), np.int64)
    floor = np.empty((replicas, H + 1), np.int64)
    pc = np.full(H + 1, params.p_c)
    for r in range(replicas):
        s = replica_seed(seed, kind, r)
        w_hat = pc if kind == "iic" else _branch_params(params, H, s)
        _profile(stream(s, "profile"), params.sigma, H, w_hat, k_floor, counts[r], floor[r])
    return counts, floor


def replica_seed(seed: int, kind: str, r: int) -> int:
    return derive_seed(seed, kind, r)


def sample_trees(params: TreeParams, H: int, replicas: int, seed: int, kind: str = "ipc"):
    """Generator of independent trees; replica r uses ``replica_seed(seed, kind, r)``."""
    fn = {"ipc": sample_ipc, "iic": sample_iic}[kind]
    for r in range(replicas):
        yield fn(params, H, replica_seed(seed, kind, r))


def enumerate_depth_one(sigma: int) -> int:
    """sum over configurations of the IIC at depth 1 of sigma^{N+1} P(x in C) with N = 1.

    The backbone child is one of the sigma children (probability 1/sigma
    each); each of the other sigma-1 children is present with probability
    1/sigma.  For a fixed child x, P(x in C_inf) is the chance it is the
    backbone child plus the chance it is an open side child; this brute-forces
    the sum over every choice of backbone slot and open set.
    """
    from fractions import Fraction
    from itertools import product

    pc = Fraction(1, sigma)
    total = Fraction(0)
    x = 0
    for bb in range(sigma):
        others = [s for s in range(sigma) if s != bb]
        for opened in product((0, 1), repeat=len(others)):
            w = pc  # backbone slot choice
            present = {bb}
            for s, o in zip(others, opened):
                w *= pc if o else 1 - pc
                if o:
                    present.add(s)
            if x in present:
                total += w
    return int(total * sigma ** 2)
