"""The lower envelope L(t) of a unit-rate Poisson process on (0, inf)^2.

L(t) is the smallest height among points with abscissa <= t.  Viewed as a
process in t it is a Markov jump process: from height z it waits an
Exponential(z) time and drops to z U with U uniform.  L(eps) is
Exponential with rate eps.

Paths are stored as padded arrays so that a batch of paths can be fed to
the functionals at once.  Row i of a batch holds jump times
``times[i, 0] = eps < times[i, 1] < ...`` and the level held from each
time onwards; padding repeats ``t_end`` with the last level, which gives
zero-length pieces.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import roots_legendre

from .errors import ConvergenceError, DomainError
from .streams import stream

BATCH_BLOCK = 4096


@dataclass(frozen=True)
class EnvelopePath:
    """Padded array representation of one or many envelope paths."""

    eps: float
    t_end: float
    times: np.ndarray  # (replicas, J) or (J,)
    levels: np.ndarray

    @classmethod
    def zero(cls, t_end: float = 1.0) -> "EnvelopePath":
        """The identically-zero path (the IIC limit)."""
        return cls(0.0, t_end, np.array([0.0]), np.array([0.0]))

    @property
    def is_batch(self) -> bool:
        return self.times.ndim == 2

    def __len__(self):
        return self.times.shape[0] if self.is_batch else 1

    def row(self, i: int) -> "EnvelopePath":
        if not self.is_batch:
            return self
        t, l = self.times[i], self.levels[i]
        keep = np.concatenate([[True], t[1:] < self.t_end])
        return EnvelopePath(self.eps, self.t_end, t[keep], l[keep])

    def jumps(self, i: int = 0):
        """(time, new level) pairs after the initial level at eps."""
        p = self.row(i)
        return list(zip(p.times[1:].tolist(), p.levels[1:].tolist()))

    def level_at(self, t):
        """Right-continuous value L(t) for t in [eps, t_end]; one column per t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.eps) or np.any(t > self.t_end):
            raise DomainError(f"t outside the window [{self.eps}, {self.t_end}]")
        T = np.atleast_2d(self.times)
        Lv = np.atleast_2d(self.levels)
        idx = np.empty((T.shape[0], t.size), dtype=np.int64)
        for i in range(T.shape[0]):
            idx[i] = np.searchsorted(T[i], t, side="right") - 1
        out = np.take_along_axis(Lv, idx, axis=1)
        return out if self.is_batch else out[0]

    def shifted(self, c: float) -> "EnvelopePath":
        """The path L + c (used for monotonicity checks)."""
        return EnvelopePath(self.eps, self.t_end, self.times, self.levels + c)


def _sample_block(rng, eps, t_end, m):
    lev = rng.exponential(1.0 / eps, size=m)
    times = [np.full(m, eps)]
    levels = [lev.copy()]
    t = np.full(m, eps)
    alive = np.ones(m, dtype=bool)
    while alive.any():
        wait = rng.exponential(1.0, size=m) / np.where(lev > 0, lev, 1.0)
        u = rng.random(m)
        t_new = t + wait
        alive &= t_new <= t_end
        t = np.where(alive, t_new, t_end)
        lev = np.where(alive, lev * u, lev)
        times.append(t.copy())
        levels.append(lev.copy())
    return np.column_stack(times), np.column_stack(levels)


def sample_envelope(eps: float, t_end: float = 1.0, seed: int = 0) -> EnvelopePath:
    if not 0 < eps < t_end:
        raise DomainError("need 0 < eps < t_end")
    t, l = _sample_block(stream(seed, "envelope"), eps, t_end, 1)
    return EnvelopePath(eps, t_end, t[0], l[0]).row(0)


def sample_envelopes(eps: float, t_end: float, replicas: int, seed: int) -> EnvelopePath:
    """A batch of paths; block b of BATCH_BLOCK paths uses stream (seed, "envelopes", b)."""
    if not 0 < eps < t_end:
        raise DomainError("need 0 < eps < t_end")
    ts, ls = [], []
    for b, start in enumerate(range(0, replicas, BATCH_BLOCK)):
        m = min(BATCH_BLOCK, replicas - start)
        t, l = _sample_block(stream(seed, "envelopes", b), eps, t_end, m)
        ts.append(t)
        ls.append(l)
    width = max(t.shape[1] for t in ts)
    times = np.full((replicas, width), t_end)
    levels = np.empty((replicas, width))
    row = 0
    for t, l in zip(ts, ls):
        m, j = t.shape
        times[row:row + m, :j] = t
        levels[row:row + m, :j] = l
        levels[row:row + m, j:] = l[:, -1:]
        row += m
    return EnvelopePath(eps, t_end, times, levels)


def scatter_envelope(t_end: float, y_max: float, seed: int):
    """Oracle path from a raw Poisson scatter on (0, t_end] x (0, y_max].

    Returns (times, levels) of the running minimum; L(t) = inf (no point yet)
    is reported as ``np.inf``.
    """
    rng = stream(seed, "scatter")
    n = rng.poisson(t_end * y_max)
    x = rng.uniform(0, t_end, n)
    y = rng.uniform(0, y_max, n)
    o = np.argsort(x)
    x, y = x[o], y[o]
    run = np.minimum.accumulate(y) if n else y
    rec = np.concatenate([[True], run[1:] < run[:-1]]) if n else np.zeros(0, bool)
    return x[rec], run[rec]


def envelope_laplace(ts, taus) -> float:
    """E exp(-sum tau_i L(t_i)) = prod (1 - tau_i/(t_i + s_i)), s_i = tau_1 + ... + tau_i."""
    ts = np.asarray(ts, dtype=float)
    taus = np.asarray(taus, dtype=float)
    if ts.shape != taus.shape or ts.ndim != 1 or ts.size == 0:
        raise DomainError("ts and taus must be equal-length non-empty sequences")
    if np.any(ts <= 0) or np.any(np.diff(ts) <= 0):
        raise DomainError("times must be positive and strictly increasing")
    if np.any(taus < 0):
        raise DomainError("weights must be non-negative")
    s = np.cumsum(taus)
    return float(np.prod(1.0 - taus / (ts + s)))


class Functional(NamedTuple):
    value: float | np.ndarray
    bound: float  # upper bound on the neglected [0, eps] contribution


def default_eps(tau: float, tol: float = 1e-6) -> float:
    return min(1e-4, tol / (4.0 * tau)) if tau > 0 else 1e-4


def _pieces(path: EnvelopePath):
    """Clip to [eps, 1]: piece starts a, ends b, levels L, all 2-d."""
    if path.t_end < 1.0:
        raise DomainError("the path window must reach t = 1")
    T = np.atleast_2d(path.times)
    Lv = np.atleast_2d(path.levels)
    a = np.minimum(T, 1.0)
    b = np.minimum(np.concatenate([T[:, 1:], np.full((T.shape[0], 1), path.t_end)], axis=1), 1.0)
    return a, b, Lv


def _ret(path, val, bound):
    return Functional(val if path.is_batch else float(val[0]), bound)


def _h(t, L):
    """(1 - e^{-(1-t)L}) / L, continuous at L = 0."""
    with np.errstate(invalid="ignore", divide="ignore"):
        out = -np.expm1(-(1.0 - t) * L) / L
    return np.where(L > 0, out, 1.0 - t)


def s_functional(tau: float, path: EnvelopePath) -> Functional:
    """S(tau, L) = 2 tau int_0^1 L e^{-(1-t)L} / (L + tau (1 - e^{-(1-t)L})) dt.

    On a piece [a, b] with constant level L the integrand is
    -2 d/dt log(1 + tau h(t)), so the piece contributes
    2 [log1p(tau h(a)) - log1p(tau h(b))].
    """
    if tau < 0:
        raise DomainError("tau must be non-negative")
    a, b, L = _pieces(path)
    val = 2.0 * (np.log1p(tau * _h(a, L)) - np.log1p(tau * _h(b, L)))
    return _ret(path, val.sum(axis=1), 2.0 * tau * path.eps)


def s_hat_integrand(tau, t, L):
    """4 tau / (L + kappa coth(x)), x = (1-t) kappa / 2, written with tanh to stay finite at t = 1."""
    kappa = np.sqrt(4.0 * tau + L * L)
    th = np.tanh(0.5 * (1.0 - t) * kappa)
    return 4.0 * tau * th / (L * th + kappa)


_GL = {m: roots_legendre(m) for m in (8, 16)}


def _gl(f, a, b, m):
    x, w = _GL[m]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return half * (f(pts) @ w)


def _adaptive(f, a, b, L, rtol=1e-8, atol=1e-15, max_depth=40):
    """Vectorised adaptive Gauss–Legendre on many intervals (one level each).

    An interval is accepted when the 8- and 16-point rules agree to
    ``rtol``; otherwise it is bisected.  Raises ConvergenceError if an
    interval is still unresolved after ``max_depth`` bisections.
    """
    total = np.zeros(a.shape[0])
    owner = np.arange(a.shape[0])
    for _ in range(max_depth):
        g = lambda x: f(x, L[:, None])
        lo = _gl(g, a, b, 8)
        hi = _gl(g, a, b, 16)
        ok = np.abs(hi - lo) <= rtol * np.abs(hi) + atol
        np.add.at(total, owner[ok], hi[ok])
        if ok.all():
            return total
        nb = ~ok
        m = 0.5 * (a[nb] + b[nb])
        a = np.concatenate([a[nb], m])
        b = np.concatenate([m, b[nb]])
        L = np.concatenate([L[nb], L[nb]])
        owner = np.concatenate([owner[nb], owner[nb]])
    raise ConvergenceError("adaptive quadrature hit its refinement limit")


def s_hat_functional(tau: float, path: EnvelopePath, rtol: float = 1e-8) -> Functional:
    """Ŝ(tau, L) = 4 tau int_0^1 dt / (L + kappa coth((1-t) kappa / 2)), kappa = sqrt(4 tau + L^2)."""
    if tau < 0:
        raise DomainError("tau must be non-negative")
    a, b, L = _pieces(path)
    rows, cols = np.nonzero(b > a)
    val = np.zeros(a.shape[0])
    if tau > 0 and rows.size:
        f = lambda t, lv: s_hat_integrand(tau, t, lv)
        piece = _adaptive(f, a[rows, cols], b[rows, cols], L[rows, cols], rtol=rtol)
        np.add.at(val, rows, piece)
    return _ret(path, val, 4.0 * tau * path.eps)


def s_hat_closed_form(tau: float, path: EnvelopePath) -> Functional:
    """Antiderivative form of Ŝ, an independent check on the quadrature.

    With kappa = sqrt(4 tau + L^2), phi = atanh(L/kappa) and
    x(t) = (1-t) kappa / 2 + phi, a piece [a, b] contributes
    2 log(cosh x(a) / cosh x(b)) - L (b - a).  It is evaluated as
    (kappa - L)(b - a) + 2 [log1p(e^{-2x(a)}) - log1p(e^{-2x(b)})],
    with kappa - L = 4 tau / (kappa + L).
    """
    a, b, L = _pieces(path)
    if tau == 0:
        return _ret(path, np.zeros(a.shape[0]), 0.0)
    kappa = np.sqrt(4.0 * tau + L * L)
    # atanh(L/kappa) = log((kappa + L) / (2 sqrt(tau))), no cancellation for large L
    phi = np.log((kappa + L) / (2.0 * np.sqrt(tau)))
    xa = 0.5 * (1.0 - a) * kappa + phi
    xb = 0.5 * (1.0 - b) * kappa + phi
    val = 4.0 * tau / (kappa + L) * (b - a) + 2.0 * (np.log1p(np.exp(-2.0 * xa)) - np.log1p(np.exp(-2.0 * xb)))
    val = np.where(b > a, val, 0.0)
    return _ret(path, val.sum(axis=1), 4.0 * tau * path.eps)


def s_derivative_at_zero(path: EnvelopePath) -> Functional:
    """d/dtau S(tau, L) at tau = 0, i.e. 2 int_0^1 e^{-(1-t)L(t)} dt (exact per piece)."""
    a, b, L = _pieces(path)
    with np.errstate(invalid="ignore", divide="ignore"):
        piece = 2.0 * (np.exp(-(1.0 - b) * L) - np.exp(-(1.0 - a) * L)) / L
    piece = np.where(L > 0, piece, 2.0 * (b - a))
    return _ret(path, piece.sum(axis=1), 2.0 * path.eps)
