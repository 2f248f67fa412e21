"""The backbone forward-maximal-weight chain W_k and its transforms.

The chain is simulated in the level variable v = theta(W).  From level v it
jumps with probability R(W) * v, and on a jump the new level is uniform on
(0, v).  Two uniforms (A, V) drive each step: the step is a jump iff
A < R(W) and V < v, in which case the new level is V.  This is the
"W ∧ X with probability R(W)" description with X ~ theta, written out on the
level scale so that no root solve is needed inside the loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .analytic import (TreeParams, dual, jump_rate, rate_of_level, theta, theta_inverse,
                       zeta_of_level)
from .streams import derive_seed, open_uniform, stream


@njit(cache=True)
def _rate(sigma, v):
    # R(W) from zeta = (1 - v)^(1/sigma); R = P(zeta) / S(zeta)^2
    z = np.exp(np.log1p(-v) / sigma)
    s = 1.0
    for _ in range(sigma - 1):
        s = 1.0 + z * s
    d = float(sigma - 1)
    for m in range(sigma - 2, 0, -1):
        d = m + z * d
    return d / (s * s)


@njit(cache=True)
def _run_levels(sigma, v0, a, v, out):
    cur = v0
    r = _rate(sigma, cur)
    out[0] = cur
    for k in range(a.shape[0]):
        if a[k] < r and v[k] < cur:
            cur = v[k]
            r = _rate(sigma, cur)
        out[k + 1] = cur


@njit(cache=True)
def _run_coupled(sigma, v0, v1, a, v, out0, out1):
    """Both chains use the same (A, V).  Returns (tau, decreases, coalescing decreases).

    A step moves chain i iff A < R_i and V < v_i.  The lower chain has the
    smaller R, so whenever it moves the higher one moves too and both land on
    V.  tau = -1 if the chains are still apart at the end.
    """
    c0, c1 = v0, v1
    r0 = _rate(sigma, c0)
    r1 = _rate(sigma, c1)
    out0[0] = c0
    out1[0] = c1
    tau = 0 if c0 == c1 else -1
    dec = 0
    coal = 0
    for k in range(a.shape[0]):
        low_before = min(c0, c1)
        apart = c0 != c1
        if a[k] < r0 and v[k] < c0:
            c0 = v[k]
            r0 = _rate(sigma, c0)
        if a[k] < r1 and v[k] < c1:
            c1 = v[k]
            r1 = _rate(sigma, c1)
        out0[k + 1] = c0
        out1[k + 1] = c1
        if apart and min(c0, c1) < low_before:
            dec += 1
            if c0 == c1:
                coal += 1
        if apart and c0 == c1:
            tau = k + 1
    return tau, dec, coal


@dataclass(frozen=True)
class DualChain:
    params: TreeParams
    w_hat: np.ndarray

    def __len__(self):
        return self.w_hat.shape[0]


@dataclass(frozen=True)
class WeightChain:
    """A realisation W_0 >= W_1 >= ... >= W_n > p_c."""

    params: TreeParams
    w: np.ndarray
    seed: int | None = None
    levels: np.ndarray | None = field(default=None, repr=False)  # theta(W_k) as simulated

    @property
    def n(self):
        return self.w.shape[0] - 1

    def dual(self) -> DualChain:
        return dualize(self)


@dataclass(frozen=True)
class RescaledChain:
    """z_k = k (sigma W_k - 1) for k = 1..n, with the Y-chain Y_k = rho theta(W_k)."""

    params: TreeParams
    values: np.ndarray
    y: np.ndarray

    def q(self, y):
        return y_jump_probability(self.params, y)


@lru_cache(maxsize=64)
def _start_level(params: TreeParams, w0: float) -> float:
    if not params.p_c < w0 <= 1.0:
        raise ValueError("a fixed start must satisfy p_c < W_0 <= 1")
    return float(theta(params, w0))


def _draw(rng, n, w0, params):
    if w0 is None:
        v0 = float(open_uniform(rng))
    else:
        v0 = _start_level(params, float(w0))
    a = rng.random(n)
    v = rng.random(n)
    return v0, a, v


def sample_chain(params: TreeParams, n: int, seed: int, w0: float | None = None) -> WeightChain:
    """Sample W_0..W_n.  ``w0`` fixes the start (otherwise W_0 has law theta)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = stream(seed, "chain")
    v0, a, v = _draw(rng, n, w0, params)
    lev = np.empty(n + 1)
    _run_levels(params.sigma, v0, a, v, lev)
    w = np.asarray(theta_inverse(params, lev), dtype=float).reshape(-1)
    if w0 is not None:
        w[lev == v0] = w0
    return WeightChain(params, w, seed, lev)


@dataclass(frozen=True)
class ChainBatch:
    params: TreeParams
    w: np.ndarray  # shape (replicas, n+1)
    seed: int | None = None
    levels: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.w.shape[0]

    def __iter__(self):
        for i, row in enumerate(self.w):
            yield WeightChain(self.params, row, None, None if self.levels is None else self.levels[i])

    def dual(self) -> np.ndarray:
        if self.levels is not None:
            return dual_of_levels(self.params, self.w, self.levels)
        return np.asarray(dual(self.params, self.w))


def sample_chains(params: TreeParams, n: int, replicas: int, seed: int, w0=None) -> ChainBatch:
    """Independent chains; replica r uses the child seed derived from (seed, r)."""
    w = np.empty((replicas, n + 1))
    lev = np.empty((replicas, n + 1))
    for r in range(replicas):
        c = sample_chain(params, n, derive_seed(seed, "chains", r), w0)
        w[r] = c.w
        lev[r] = c.levels
    return ChainBatch(params, w, seed, lev)


def dual_of_levels(params: TreeParams, w, levels):
    """Ŵ = W zeta(W)^(sigma-1) with zeta = (1 - theta(W))^(1/sigma) read off the level."""
    z = np.asarray(zeta_of_level(params, levels))
    return np.asarray(w) * z ** (params.sigma - 1)


def dualize(chain: WeightChain) -> DualChain:
    if chain.levels is not None:
        w_hat = dual_of_levels(chain.params, chain.w, chain.levels)
    else:
        w_hat = np.asarray(dual(chain.params, chain.w), dtype=float).reshape(-1)
    return DualChain(chain.params, w_hat)


def rescale(chain: WeightChain) -> RescaledChain:
    if chain.n < 1:
        raise ValueError("rescaling needs at least W_0, W_1")
    p = chain.params
    k = np.arange(1, chain.n + 1)
    z = k * (p.sigma * chain.w[1:] - 1.0)
    lev = chain.levels if chain.levels is not None else np.asarray(theta(p, chain.w))
    return RescaledChain(p, z, p.rho * np.asarray(lev))


def scaled_path(params: TreeParams, w, k: int, ts) -> np.ndarray:
    """k (sigma W_{ceil(k t)} - 1) for each t; ``w`` may be one chain or a (replicas, n+1) array."""
    idx = np.ceil(k * np.asarray(ts, dtype=float) - 1e-9).astype(int)
    w = np.asarray(w)
    return k * (params.sigma * w[..., idx] - 1.0)


def y_jump_probability(params: TreeParams, y):
    """q(y) = (y/rho) R(theta_inverse(y/rho)), the one-step jump probability of Y."""
    u = np.asarray(y, dtype=float) / params.rho
    out = u * np.asarray(jump_rate(params, theta_inverse(params, u)))
    return float(out) if np.ndim(y) == 0 else out


def sample_y_chain(params: TreeParams, n: int, seed: int, w0: float | None = None) -> np.ndarray:
    """Y_0..Y_n by the direct recursion on Y, consuming the same uniforms as sample_chain.

    From Y the chain moves iff A < R(theta_inverse(Y/rho)) and V < Y/rho,
    and then Y' = Y * U' with U' = V rho / Y, i.e. Y' = rho V.
    """
    rng = stream(seed, "chain")
    v0, a, v = _draw(rng, n, w0, params)
    rho = params.rho
    y = np.empty(n + 1)
    y[0] = rho * v0
    cur = y[0]
    r = float(jump_rate(params, theta_inverse(params, cur / rho)))
    for k in range(n):
        if a[k] < r and v[k] < cur / rho:
            cur = cur * (v[k] * rho / cur)
            r = float(jump_rate(params, theta_inverse(params, cur / rho)))
        y[k + 1] = cur
    return y


@dataclass(frozen=True)
class CoalescenceRecord:
    tau: int | None  # first step with W = W', None if not within n
    w: np.ndarray
    w_prime: np.ndarray
    decreases: int  # steps at which min(W, W') dropped while the chains were apart
    coalescing_decreases: int  # of those, steps that ended with W = W'


def couple_chains(params: TreeParams, n: int, seed: int, starts=None) -> CoalescenceRecord:
    """Two chains with independent starts driven by the same step uniforms.

    ``starts`` optionally fixes (W_0, W'_0).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = stream(seed, "coupled")
    if starts is None:
        v0, v1 = open_uniform(rng, 2)
    else:
        v0, v1 = (float(theta(params, s)) for s in starts)
    a = rng.random(n)
    v = rng.random(n)
    l0 = np.empty(n + 1)
    l1 = np.empty(n + 1)
    tau, dec, coal = _run_coupled(params.sigma, float(v0), float(v1), a, v, l0, l1)
    w = np.asarray(theta_inverse(params, l0)).reshape(-1)
    w1 = np.asarray(theta_inverse(params, l1)).reshape(-1)
    return CoalescenceRecord(None if tau < 0 else int(tau), w, w1, int(dec), int(coal))


def transition_check(params: TreeParams, n: int, replicas: int, seed: int, bins):
    """Pool (W_k, jumped at k+1) over chains and compare with R(W) theta(W) per bin.

    Returns (counts, observed frequency, expected frequency, binomial se).
    """
    bins = np.asarray(bins, dtype=float)
    hits = np.zeros(bins.size - 1)
    tot = np.zeros(bins.size - 1)
    expect = np.zeros(bins.size - 1)
    for r in range(replicas):
        c = sample_chain(params, n, derive_seed(seed, "transition", r))
        cur = c.w[:-1]
        jumped = c.w[1:] < cur
        lv = c.levels[:-1]
        rate = np.asarray(rate_of_level(params, lv)) * lv
        b = np.searchsorted(bins, cur, side="right") - 1
        ok = (b >= 0) & (b < bins.size - 1)
        np.add.at(tot, b[ok], 1.0)
        np.add.at(hits, b[ok], jumped[ok])
        np.add.at(expect, b[ok], rate[ok])
    with np.errstate(invalid="ignore", divide="ignore"):
        freq = hits / tot
        exp_f = expect / tot
        se = np.sqrt(exp_f * (1 - exp_f) / tot)
    return tot, freq, exp_f, se
