"""Invasion percolation run directly from its definition.

Edges receive i.i.d. uniform weights, drawn lazily when they first touch
the invaded set.  At each step the boundary edge of smallest weight is
invaded.  The boundary is an array-backed binary min-heap keyed on weight;
an edge is identified by ``parent * sigma + slot``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..analytic import TreeParams
from ..errors import MemoryBudgetError
from ..streams import stream

STEP_CAP = 50_000_000


@njit(cache=True)
def _sift_up(w, e, i):
    while i > 0:
        p = (i - 1) >> 1
        if w[p] <= w[i]:
            break
        w[p], w[i] = w[i], w[p]
        e[p], e[i] = e[i], e[p]
        i = p


@njit(cache=True)
def _sift_down(w, e, n):
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        c = l
        if l + 1 < n and w[l + 1] < w[l]:
            c = l + 1
        if w[i] <= w[c]:
            break
        w[c], w[i] = w[i], w[c]
        e[c], e[i] = e[i], e[c]
        i = c


@njit(cache=True)
def _invade(rng, sigma, steps, parent, slot, height, weight, heap_w, heap_e):
    """Run ``steps`` invasions from the root (vertex 0).  Returns the heap size."""
    parent[0] = -1
    slot[0] = -1
    height[0] = 0
    weight[0] = np.nan
    n = 0
    for s in range(sigma):
        heap_w[n] = rng.random()
        heap_e[n] = s
        _sift_up(heap_w, heap_e, n)
        n += 1
    for step in range(1, steps + 1):
        w = heap_w[0]
        e = heap_e[0]
        n -= 1
        heap_w[0] = heap_w[n]
        heap_e[0] = heap_e[n]
        _sift_down(heap_w, heap_e, n)
        par = e // sigma
        parent[step] = par
        slot[step] = e - par * sigma
        height[step] = height[par] + 1
        weight[step] = w
        for s in range(sigma):
            heap_w[n] = rng.random()
            heap_e[n] = step * sigma + s
            _sift_up(heap_w, heap_e, n)
            n += 1
    return n


@dataclass(frozen=True)
class InvasionTrace:
    """Vertex i (i >= 1) was invaded at step i through the edge from parent[i]."""

    params: TreeParams
    parent: np.ndarray
    slot: np.ndarray
    height: np.ndarray
    weight: np.ndarray  # weight of the invading edge; NaN for the root
    boundary_weight: np.ndarray
    boundary_height: np.ndarray  # height of the unexplored endpoint
    window: int
    stabilized: bool
    last_change_step: int  # last step that added a vertex at height <= window
    low_boundary_min: float
    seed: int | None = None

    @property
    def steps(self) -> int:
        return self.parent.shape[0] - 1

    @property
    def step(self) -> np.ndarray:
        return np.arange(self.parent.shape[0])

    @property
    def child(self) -> np.ndarray:
        return self.step

    def max_weight(self, upto: int | None = None) -> float:
        w = self.weight[1:] if upto is None else self.weight[1:upto + 1]
        return float(np.max(w))

    def volume(self, n: int | None = None, upto: int | None = None) -> int:
        """Invaded vertices at height <= n (default: the tracked window), root included."""
        n = self.window if n is None else n
        h = self.height if upto is None else self.height[:upto + 1]
        return int(np.sum(h <= n))

    def count_above(self, level: float, upto: int | None = None) -> int:
        w = self.weight[1:] if upto is None else self.weight[1:upto + 1]
        return int(np.sum(w > level))

    def frontier(self) -> int:
        return int(self.height.max())

    def lineages(self, h: int, min_height: int) -> int:
        """Distinct height-h ancestors among invaded vertices at height >= min_height."""
        anc = np.nonzero(self.height >= min_height)[0]
        if anc.size == 0:
            return 0
        hh = self.height[anc].copy()
        while np.any(hh > h):
            up = hh > h
            anc[up] = self.parent[anc[up]]
            hh[up] -= 1
        return int(np.unique(anc).size)


def _stability(weight, height, b_w, b_h, steps, window):
    S = max(steps // 2, 1)
    low = b_h <= window
    low_min = float(b_w[low].min()) if low.any() else np.inf
    recent = weight[steps - S + 1:]
    frontier = int(height.max())
    stable = bool(np.all(recent < low_min) and frontier >= 4 * window)
    changed = np.nonzero(height[1:] <= window)[0]
    last = int(changed[-1] + 1) if changed.size else 0
    return stable, last, low_min


def invade_direct(params: TreeParams, max_steps: int, seed: int, height_window: int = 8,
                  cap: int = STEP_CAP) -> InvasionTrace:
    """Invade ``max_steps`` edges and report stabilisation of heights <= height_window.

    Stabilised means the last max_steps/2 accepted weights are all below the
    smallest boundary weight at height <= window, and the invasion has reached
    height 4 * window.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if max_steps > cap:
        raise MemoryBudgetError(f"{max_steps} steps exceed the cap of {cap}")
    sigma = params.sigma
    parent = np.empty(max_steps + 1, np.int64)
    slot = np.empty(max_steps + 1, np.int64)
    height = np.empty(max_steps + 1, np.int64)
    weight = np.empty(max_steps + 1)
    size = sigma * (max_steps + 1)
    heap_w = np.empty(size)
    heap_e = np.empty(size, np.int64)
    n = _invade(stream(seed, "invasion"), sigma, max_steps, parent, slot, height, weight, heap_w,
                heap_e)
    b_w = heap_w[:n].copy()
    b_h = height[heap_e[:n] // sigma] + 1
    stable, last, low_min = _stability(weight, height, b_w, b_h, max_steps, height_window)
    return InvasionTrace(params, parent, slot, height, weight, b_w, b_h, height_window, stable, last,
                         low_min, seed)
