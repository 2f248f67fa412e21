"""r-point functions of the invasion cluster.

A spanning geometry is the minimal subtree joining the root ``o`` to the
marked vertices, reduced to its nodes (root, marked vertices, branch
points) and the lengths of the segments between them.  Segment ``v`` is
the one ending at node ``v``.  Lengths are either integers (edge counts
n_v) or positive reals; the scaled quantities t_v, m_w^v always refer to
lengths divided by their total.

Cut masses, for a node w on the path from o to v (w < v):

* ``M(w, v)``: what is left of the tree after deleting everything above w
  in the direction of v.
* ``N(w, v)``: the part hanging off w once the path edges o..v are removed
  (for w = v, everything above v).

The finite-N formula weights each boundary vertex y of the spanning tree
by the chain-conditional probability that the backbone leaves through y.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .analytic import TreeParams
from .errors import LengthMismatchError
from .stats import McEstimate

ROOT = "o"


class UnsupportedGeometryError(ValueError):
    """The spanning tree branches at the root."""


class RootBranchingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpanningGeometry:
    """Nodes 1..n; node 0 is the root.  ``parent[i]`` < i is not required."""

    names: tuple
    parent: tuple  # parent[0] == -1
    length: tuple  # length[0] == 0

    def __post_init__(self):
        n = len(self.names)
        if n < 2:
            raise ValueError("a geometry needs at least one segment")
        if len(self.parent) != n or len(self.length) != n:
            raise ValueError("names, parent and length must align")
        if len(set(self.names)) != n:
            raise ValueError("node names must be unique")
        for i in range(1, n):
            if not self.length[i] > 0:
                raise ValueError(f"segment {self.names[i]!r} has non-positive length")
            seen, j = set(), i
            while j != 0:  # reject cycles and dangling parents
                if j in seen or not 0 <= self.parent[j] < n:
                    raise ValueError(f"node {self.names[i]!r} does not hang from the root")
                seen.add(j)
                j = self.parent[j]

    # construction -----------------------------------------------------
    @classmethod
    def from_edges(cls, edges) -> "SpanningGeometry":
        """``edges`` is an iterable of (id, parent id, length); the root is ``"o"``."""
        edges = [(str(a), str(b), ln) for a, b, ln in edges]
        names = [ROOT] + [a for a, _, _ in edges]
        if ROOT in names[1:]:
            raise ValueError("the root is implicit and cannot be redefined")
        idx = {nm: i for i, nm in enumerate(names)}
        parent, length = [-1], [0]
        for a, b, ln in edges:
            if b not in idx:
                raise ValueError(f"unknown parent {b!r} for node {a!r}")
            parent.append(idx[b])
            length.append(ln)
        return cls(tuple(names), tuple(parent), tuple(length))

    @classmethod
    def parse(cls, text: str) -> "SpanningGeometry":
        """One ``id parent length`` line per node; ``#`` starts a comment."""
        edges = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'id parent length', got {raw!r}")
            a, b, ln = parts
            try:
                val = int(ln)
            except ValueError:
                try:
                    val = float(ln)
                except ValueError:
                    raise ValueError(f"line {lineno}: bad length {ln!r}") from None
            edges.append((a, b, val))
        return cls.from_edges(edges)

    @classmethod
    def load(cls, path) -> "SpanningGeometry":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        return "".join(f"{self.names[i]} {self.names[self.parent[i]]} {self.length[i]}\n"
                       for i in range(1, self.size))

    @classmethod
    def path(cls, length=1.0) -> "SpanningGeometry":
        """The two-point geometry: a single segment o -> x1."""
        return cls.from_edges([("x1", ROOT, length)])

    @classmethod
    def three_point(cls, t_star, t1, t2) -> "SpanningGeometry":
        return cls.from_edges([("*", ROOT, t_star), ("x1", "*", t1), ("x2", "*", t2)])

    # basic structure ----------------------------------------------------
    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def segments(self) -> range:
        return range(1, self.size)

    def index(self, v) -> int:
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return int(v)
        return self.names.index(str(v))

    def children(self, w) -> list:
        w = self.index(w)
        return [i for i in self.segments if self.parent[i] == w]

    @property
    def total(self):
        return sum(self.length[1:])

    @property
    def branches_at_root(self) -> bool:
        return len(self.children(0)) > 1

    @property
    def is_integer(self) -> bool:
        return all(isinstance(x, (int, np.integer)) for x in self.length[1:])

    def ancestors(self, v) -> list:
        """Nodes strictly below v, from the root upward."""
        v = self.index(v)
        out = []
        while v != 0:
            v = self.parent[v]
            out.append(v)
        return out[::-1]

    def height(self, w):
        w = self.index(w)
        h = 0
        while w != 0:
            h += self.length[w]
            w = self.parent[w]
        return h

    def subtree_mass(self, c):
        """Length of segment c plus everything above it."""
        c = self.index(c)
        return self.length[c] + sum(self.subtree_mass(d) for d in self.children(c))

    def _toward(self, w, v):
        # child of w on the path to v
        chain = self.ancestors(v)[1:] + [v]
        for a in chain:
            if self.parent[a] == w:
                return a
        raise ValueError(f"{self.names[w]!r} is not below {self.names[v]!r}")

    # cut masses ---------------------------------------------------------
    def M(self, w, v):
        """Length left after deleting everything above w in the direction of v (w < v)."""
        w, v = self.index(w), self.index(v)
        return self.total - self.subtree_mass(self._toward(w, v))

    def N(self, w, v):
        """Length of the component of w once the path edges o..v are removed (w <= v)."""
        w, v = self.index(w), self.index(v)
        kids = self.children(w)
        if w != v:
            kids = [c for c in kids if c != self._toward(w, v)]
        return sum(self.subtree_mass(c) for c in kids)

    def m(self, w, v) -> float:
        return self.M(w, v) / self.total

    def n_side(self, w, v) -> float:
        return self.N(w, v) / self.total

    def t(self, v) -> float:
        return self.length[self.index(v)] / self.total

    def h(self, w) -> float:
        return self.height(w) / self.total

    def pi(self, v) -> float:
        """Product over nodes o < w < v of (t_w + m_{w-}^v) / m_w^v."""
        v = self.index(v)
        out = 1.0
        for w in self.ancestors(v)[1:]:
            out *= (self.t(w) + self.m(self.parent[w], v)) / self.m(w, v)
        return out

    def pi_factors(self, v) -> list:
        v = self.index(v)
        return [(self.t(w) + self.m(self.parent[w], v)) / self.m(w, v) for w in self.ancestors(v)[1:]]

    # conversions --------------------------------------------------------
    def scaled(self) -> "SpanningGeometry":
        T = float(self.total)
        return SpanningGeometry(self.names, self.parent, (0,) + tuple(x / T for x in self.length[1:]))

    def integer(self, N: int) -> "SpanningGeometry":
        """Integer lengths summing to N, by largest-remainder apportionment of N t_v."""
        t = np.array([self.t(v) for v in self.segments])
        raw = N * t
        base = np.floor(raw).astype(int)
        short = N - int(base.sum())
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
        if np.any(base < 1):
            raise ValueError(f"N = {N} is too small to give every segment an edge")
        return SpanningGeometry(self.names, self.parent, (0,) + tuple(int(x) for x in base))

    def check_invariants(self, tol=1e-12) -> bool:
        """Scaled lengths sum to 1; telescoping m_w^v - n_w^v = t_w + m_{w-}^v; pi factors in (0, 1], equal to 1 at nodes with no side mass."""
        ok = abs(sum(self.t(v) for v in self.segments) - 1.0) < tol
        for v in self.segments:
            for w in self.ancestors(v)[1:]:
                lhs = self.m(w, v) - self.n_side(w, v)
                rhs = self.t(w) + self.m(self.parent[w], v)
                ok &= abs(lhs - rhs) < tol
                ok &= 0.0 < rhs / self.m(w, v) <= 1.0 + tol
            # m_w^v = h_w + sum_{o<=u<=w} n_u^v along the path (n_o^v vanishes unless o branches)
            acc = self.n_side(0, v)
            for w in self.ancestors(v)[1:]:
                acc += self.n_side(w, v)
                ok &= abs(self.m(w, v) - (self.h(w) + acc)) < tol
        return bool(ok)


def _root_guard(geom, strict):
    if geom.branches_at_root:
        if strict:
            raise UnsupportedGeometryError("the spanning tree branches at the root; the limit is 0")
        warnings.warn("the spanning tree branches at the root; returning the limit 0",
                      RootBranchingWarning, stacklevel=3)
        return True
    return False


def limit_joint(geom: SpanningGeometry, v, s: float, strict: bool = False) -> float:
    """(s + m_{v-}^v) pi_v, the scaled weight of the backbone leaving segment v at offset s."""
    if _root_guard(geom, strict):
        return 0.0
    v = geom.index(v)
    if not 0.0 <= s <= geom.t(v) + 1e-15:
        raise ValueError(f"offset {s} outside [0, t_v = {geom.t(v)}]")
    return (s + geom.m(geom.parent[v], v)) * geom.pi(v)


def limit_rpoint(geom: SpanningGeometry, strict: bool = False) -> float:
    """Sum over segments of (t_v^2/2 + t_v m_{v-}^v) pi_v."""
    if _root_guard(geom, strict):
        return 0.0
    tot = 0.0
    for v in geom.segments:
        t = geom.t(v)
        tot += (0.5 * t * t + t * geom.m(geom.parent[v], v)) * geom.pi(v)
    return tot


def backbone_density(geom: SpanningGeometry, v, s: float, strict: bool = False) -> float:
    """Density of the backbone exit point on the scaled tree."""
    z = limit_rpoint(geom, strict)
    if z == 0.0:
        return 0.0
    return limit_joint(geom, v, s, strict) / z


def density_slope(geom: SpanningGeometry, v) -> float:
    """d/ds of the exit density on segment v, pi_v over the normalisation."""
    return geom.pi(v) / limit_rpoint(geom)


def three_point_u(t_star, t1, t2) -> float:
    return 0.5 * (1.0 + t1 / (t_star + t2) + t2 / (t_star + t1))


# finite N -------------------------------------------------------------

@dataclass(frozen=True)
class _Segment:
    index: int
    base_h: int  # height of v_-
    n: int
    top: int  # N_v^v
    mult_end: int  # boundary children at the node v itself
    side: tuple  # (height, N_w^v) over nodes w < v with N_w^v > 0


def _layout(geom: SpanningGeometry, sigma: int):
    if not geom.is_integer:
        raise ValueError("finite_rpoint needs integer segment lengths (see SpanningGeometry.integer)")
    segs = []
    for v in geom.segments:
        side = tuple((geom.height(w), geom.N(w, v)) for w in geom.ancestors(v) if geom.N(w, v) > 0)
        c_v = len(geom.children(v))
        segs.append(_Segment(v, geom.height(geom.parent[v]), geom.length[v], geom.N(v, v), sigma - c_v, side))
    return segs


def _log_sw(params: TreeParams, w_hat, N: int):
    w_hat = np.atleast_2d(np.asarray(w_hat, dtype=float))
    if w_hat.shape[1] < N + 1:
        raise LengthMismatchError(f"chains have {w_hat.shape[1] - 1} steps, the geometry needs N = {N}")
    return np.log(params.sigma * w_hat[:, :N + 1])


def _w_hat_of(chains):
    if hasattr(chains, "dual") and not isinstance(chains, np.ndarray):
        d = chains.dual()
        return d.w_hat if hasattr(d, "w_hat") else d
    return np.asarray(chains, dtype=float)


def segment_terms(geom: SpanningGeometry, v, lg: np.ndarray, sigma: int) -> np.ndarray:
    """Per-chain weights sigma^{N+1} P(x in C, B_y | W) for exits k = 1..n_v on segment v.

    ``lg`` is log(sigma W_hat) with shape (chains, N+1).  Returns (chains, n_v).
    The multiplicities of boundary vertices are not included.
    """
    seg = next(s for s in _layout(geom, sigma) if s.index == geom.index(v))
    return np.exp(_segment_log(seg, lg))


def _segment_log(seg: _Segment, lg):
    base = np.zeros(lg.shape[0])
    for h, nw in seg.side:
        base += nw * lg[:, h]
    k = np.arange(1, seg.n + 1)
    e = seg.top + seg.n - k
    return base[:, None] + e[None, :] * lg[:, seg.base_h + 1:seg.base_h + seg.n + 1]


def _per_chain(geom, lg, sigma):
    """Summed weights per chain, the root exit included."""
    segs = _layout(geom, sigma)
    N = geom.total
    c_o = len(geom.children(0))
    tot = (sigma - c_o) * np.exp(N * lg[:, 0])
    for seg in segs:
        terms = np.exp(_segment_log(seg, lg))
        tot = tot + (sigma - 1) * terms[:, :-1].sum(axis=1) + seg.mult_end * terms[:, -1]
    return tot


def finite_rpoint(geom: SpanningGeometry, chains, mode: str = "summed", exit=None,
                  params: TreeParams | None = None) -> McEstimate:
    """Chain average of the exact conditional r-point weight.

    ``chains`` is a ChainBatch, or an array of dual weights W_hat with shape
    (chains, >= N+1).  ``mode="summed"`` sums over every boundary vertex and
    divides by (sigma-1) N; ``mode="joint"`` returns sigma^{N+1} P(x in C, B_y)
    for one boundary vertex above the exit position ``exit = (v, k)``
    (k = 0 with v the root means a vertex adjacent to the root).
    """
    params = params or getattr(chains, "params", None) or TreeParams()
    sigma = params.sigma
    N = int(geom.total)
    lg = _log_sw(params, _w_hat_of(chains), N)
    if mode == "summed":
        x = _per_chain(geom, lg, sigma) / ((sigma - 1) * N)
    elif mode == "joint":
        if exit is None:
            raise ValueError("joint mode needs exit = (segment, k)")
        v, k = exit
        v = geom.index(v)
        if v == 0:
            x = np.exp(N * lg[:, 0])
        else:
            if not 1 <= k <= geom.length[v]:
                raise ValueError(f"k = {k} outside 1..n_v = {geom.length[v]}")
            x = segment_terms(geom, v, lg, sigma)[:, k - 1]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return McEstimate.from_samples(x, getattr(chains, "seed", None))


def exit_ratio(geom: SpanningGeometry, chains, exit, params: TreeParams | None = None) -> McEstimate:
    """(sigma-1) N P(B_y | x in C) as a ratio of chain means, delta-method SE."""
    params = params or getattr(chains, "params", None) or TreeParams()
    sigma = params.sigma
    N = int(geom.total)
    lg = _log_sw(params, _w_hat_of(chains), N)
    v, k = exit
    v = geom.index(v)
    num = np.exp(N * lg[:, 0]) if v == 0 else segment_terms(geom, v, lg, sigma)[:, k - 1]
    den = _per_chain(geom, lg, sigma) / ((sigma - 1) * N)
    a, b = num.mean(), den.mean()
    r = a / b
    n = num.shape[0]
    resid = (num - r * den) / b
    return McEstimate(float(r), float(resid.std(ddof=1) / math.sqrt(n)), n, getattr(chains, "seed", None))


def exit_law(geom: SpanningGeometry, chains, params: TreeParams | None = None):
    """Estimated law of the backbone exit, per boundary vertex class.

    Returns (heights, probabilities) on a path geometry (r = 2): entry h is
    the height of the parent of y, entries sum to 1, and multiplicities are
    included.  Uses the ratio of chain means.
    """
    params = params or getattr(chains, "params", None) or TreeParams()
    if geom.size != 2:
        raise ValueError("exit_law is implemented for the two-point geometry")
    sigma = params.sigma
    N = int(geom.total)
    lg = _log_sw(params, _w_hat_of(chains), N)
    terms = segment_terms(geom, 1, lg, sigma).mean(axis=0)
    mult = np.full(N, sigma - 1.0)
    mult[-1] = sigma
    w = np.concatenate([[(sigma - 1) * np.exp(N * lg[:, 0]).mean()], mult * terms])
    return np.arange(N + 1), w / w.sum()


def iic_rpoint(N: int, sigma: int = 2):
    """sigma^{N+1} P_inf(x in C_inf) = N(sigma-1) + sigma, and the uniform exit probability."""
    if N < 1:
        raise ValueError("N must be >= 1")
    total = Fraction(N * (sigma - 1) + sigma)
    return total, 1 / total


def iic_exit_cdf(N: int, sigma: int = 2):
    """Cumulative IIC exit law over parent heights 0..N (r = 2)."""
    mult = np.full(N + 1, sigma - 1.0)
    mult[-1] = sigma
    return np.cumsum(mult) / mult.sum()


def kolmogorov_distance_limit() -> float:
    """sup_s |s^2 - s| between the IPC and IIC exit laws for r = 2."""
    return 0.25
