"""Generating-function recursions for slice and volume sizes, and the Laplace
transforms of Gamma_n = C[n]/(rho n) and Gamma-hat_n = C[0,n]/(rho n^2).

For a percolation cluster with edge density p below criticality, the
Laplace transform of the number of vertices at depth m is f_m = 1 - g_m with

    slice:   g_{m+1} = p g_m S(1 - g_m),               g_0 = 1 - e^{-tau/sigma}
    volume:  g_{m+1} = p [(1 - e^{-tau}) + e^{-tau} g_m S(1 - g_m)],   g_0 = 0

where S(y) = 1 + y + ... + y^(sigma-1), so that g S(1-g) = 1 - (1-g)^sigma
without cancellation.  Given the chain, branches are independent, which
turns the transforms of Gamma_n and Gamma-hat_n into products over the
backbone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .analytic import TreeParams
from .envelope import (EnvelopePath, default_eps, s_functional, s_hat_functional,
                       sample_envelopes)
from .errors import DomainError
from .stats import McEstimate
from .weight_chain import ChainBatch, DualChain, WeightChain, dualize


@njit(cache=True)
def _gs(g, sigma):
    """g * S(1 - g) = 1 - (1 - g)^sigma."""
    y = 1.0 - g
    s = 1.0
    for _ in range(sigma - 1):
        s = 1.0 + y * s
    return g * s


@njit(cache=True)
def _iterate(p, sigma, tau, M, volume):
    out = np.empty(M + 1)
    em = np.exp(-tau)
    one_minus = -np.expm1(-tau)
    g = 0.0 if volume else -np.expm1(-tau / sigma)
    out[0] = g
    for m in range(M):
        if volume:
            g = p * (one_minus + em * _gs(g, sigma))
        else:
            g = p * _gs(g, sigma)
        out[m + 1] = g
    return out


@njit(cache=True)
def _log_product(sigma, w_hat, n, tau, volume):
    """sum_{k<n} log f_{n-k}(Ŵ_k; tau), exploiting runs of equal Ŵ.

    (The volume product also has a k = n factor, f_0 = 1, which contributes 0.)
    """
    em = np.exp(-tau)
    one_minus = -np.expm1(-tau)
    g0 = 0.0 if volume else -np.expm1(-tau / sigma)
    total = 0.0
    k = 0
    while k < n:
        p = w_hat[k]
        k1 = k
        while k1 + 1 < n and w_hat[k1 + 1] == p:
            k1 += 1
        g = g0
        lo = n - k1
        for m in range(n - k + 1):
            if m >= lo:
                total += np.log1p(-g)
            if volume:
                g = p * (one_minus + em * _gs(g, sigma))
            else:
                g = p * _gs(g, sigma)
        k = k1 + 1
    return total


@njit(cache=True)
def _batch_log_product(sigma, w_hat, n, taus, volume, out):
    for r in range(w_hat.shape[0]):
        for j in range(taus.shape[0]):
            out[r, j] = _log_product(sigma, w_hat[r], n, taus[j], volume)


def _check_sub(params, p):
    if not 0.0 <= p <= params.p_c + 1e-15:
        raise DomainError(f"p must lie in [0, p_c]; got {p}")


@dataclass(frozen=True)
class SliceRecursionState:
    """g_0..g_M of the slice recursion at (p, tau), with delta = 1 - sigma p and q = ((1-delta)/delta) rho sigma."""

    params: TreeParams
    p: float
    tau: float
    values: np.ndarray

    @property
    def delta(self) -> float:
        return 1.0 - self.params.sigma * self.p

    @property
    def q(self) -> float:
        d = self.delta
        return np.inf if d == 0 else (1.0 - d) / d * self.params.rho * self.params.sigma

    def F(self, g):
        return self.p * (1.0 - (1.0 - np.asarray(g)) ** self.params.sigma)

    def F_hat(self, g):
        """Quadratic approximation (1 - delta) g - rho sigma (1 - delta) g^2 of F."""
        g = np.asarray(g)
        return (1.0 - self.delta) * (g - self.params.rho * self.params.sigma * g * g)

    def tilde(self, t):
        return slice_g_tilde(self.params, self.p, self.tau, t)


@dataclass(frozen=True)
class VolumeRecursionState:
    params: TreeParams
    p: float
    tau: float
    values: np.ndarray

    @property
    def alpha(self):
        return self.p * self.params.sigma * np.exp(-self.tau)

    @property
    def beta(self):
        return (self.params.sigma - 1) * self.alpha

    @property
    def D(self):
        return _volume_D(self.params, self.p, self.tau)[0]

    @property
    def C(self):
        D, gap = _volume_D(self.params, self.p, self.tau)
        lead = 1.0 - self.alpha
        return np.inf if gap == 0 else (D + lead) / gap

    def tilde(self, m):
        return volume_g_tilde(self.params, self.p, self.tau, m)


def slice_recursion(params: TreeParams, p: float, tau: float, M: int) -> SliceRecursionState:
    _check_sub(params, p)
    if tau < 0 or M < 0:
        raise DomainError("need tau >= 0 and M >= 0")
    return SliceRecursionState(params, p, tau, _iterate(float(p), params.sigma, float(tau), int(M), False))


def volume_recursion(params: TreeParams, p: float, tau: float, M: int) -> VolumeRecursionState:
    _check_sub(params, p)
    if tau < 0 or M < 0:
        raise DomainError("need tau >= 0 and M >= 0")
    return VolumeRecursionState(params, p, tau, _iterate(float(p), params.sigma, float(tau), int(M), True))


def slice_g(params: TreeParams, p: float, tau: float, m: int) -> float:
    return float(slice_recursion(params, p, tau, m).values[m])


def volume_g(params: TreeParams, p: float, tau: float, m: int) -> float:
    return float(volume_recursion(params, p, tau, m).values[m])


def slice_g_tilde(params: TreeParams, p: float, tau: float, t):
    """g0 e^{-delta t} / (1 + q g0 (1 - e^{-delta t})).

    Written as g0 e^{-delta t} / (1 + rho sigma (1-delta) g0 h) with
    h = (1 - e^{-delta t})/delta, which is t at delta = 0.
    """
    _check_sub(params, p)
    t = np.asarray(t, dtype=float)
    delta = 1.0 - params.sigma * p
    g0 = -np.expm1(-tau / params.sigma)
    h = t if delta == 0 else -np.expm1(-delta * t) / delta
    out = g0 * np.exp(-delta * t) / (1.0 + params.rho * params.sigma * (1.0 - delta) * g0 * h)
    return float(out) if out.ndim == 0 else out


def _volume_D(params, p, tau):
    """D and D - (1 - alpha), the latter without cancellation."""
    alpha = p * params.sigma * np.exp(-tau)
    beta = (params.sigma - 1) * alpha
    lead = 1.0 - alpha
    extra = 2.0 * beta * p * (-np.expm1(-tau))
    D = np.sqrt(lead * lead + extra)
    gap = extra / (D + lead) if D + lead > 0 else 0.0
    return D, gap


def volume_g_tilde(params: TreeParams, p: float, tau: float, m):
    """(1/beta) [D (C e^{Dm} - 1)/(C e^{Dm} + 1) - (1 - alpha)].

    Using tanh((Dm + log C)/2) for the ratio and subtracting its m = 0 value,
    g~ = (D/beta) sinh(a) / (cosh(a+b) cosh(b)) with a = Dm/2, b = log(C)/2;
    every exponential below has a non-positive argument.
    """
    _check_sub(params, p)
    m = np.asarray(m, dtype=float)
    alpha = p * params.sigma * np.exp(-tau)
    beta = (params.sigma - 1) * alpha
    if beta == 0 or tau == 0:
        out = np.zeros_like(m)
    else:
        D, gap = _volume_D(params, p, tau)
        inv_c = gap / (D + 1.0 - alpha)  # e^{-2b}
        a = 0.5 * D * m
        out = (D / beta) * 2.0 * (-np.expm1(-2.0 * a)) * inv_c / ((1.0 + np.exp(-2.0 * a) * inv_c) * (1.0 + inv_c))
    return float(out) if out.ndim == 0 else out


def _w_hat(chain) -> np.ndarray:
    if isinstance(chain, WeightChain):
        return dualize(chain).w_hat
    if isinstance(chain, DualChain):
        return chain.w_hat
    if isinstance(chain, ChainBatch):
        return chain.dual()
    return np.asarray(chain, dtype=float)


def _conditional(chain, n, tau, volume, params=None):
    params = params or getattr(chain, "params", None)
    if params is None:
        raise ValueError("params are required when passing raw Ŵ arrays")
    wh = np.atleast_2d(_w_hat(chain))
    if wh.shape[1] < n:
        raise ValueError(f"chain has {wh.shape[1]} values, need at least n = {n}")
    if np.any(wh[:, :n] > params.p_c + 1e-15):
        raise DomainError("branch parameters must not exceed p_c")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(taus < 0):
        raise DomainError("tau must be non-negative")
    if volume:
        scale = params.rho * n * n
        shift = taus * (n + 1) / scale
    else:
        scale = params.rho * n
        shift = taus / scale
    out = np.empty((wh.shape[0], taus.size))
    _batch_log_product(params.sigma, np.ascontiguousarray(wh), int(n), taus / scale, volume, out)
    val = np.exp(-shift[None, :] + (params.sigma - 1) * out)
    if wh.shape[0] == 1 and not isinstance(chain, ChainBatch) and np.ndim(_w_hat(chain)) == 1:
        val = val[0]
        return float(val[0]) if np.ndim(tau) == 0 else val
    return val[:, 0] if np.ndim(tau) == 0 else val


def conditional_slice_laplace(chain, n: int, tau, params: TreeParams | None = None):
    """E(exp(-tau Gamma_n) | W).  ``chain`` may be a WeightChain, DualChain, ChainBatch
    or raw Ŵ values (then ``params`` is required); batches give one row per chain."""
    return _conditional(chain, n, tau, False, params)


def conditional_volume_laplace(chain, n: int, tau, params: TreeParams | None = None):
    """E(exp(-tau Gamma-hat_n) | W)."""
    return _conditional(chain, n, tau, True, params)


def conditional_slice_mean(params: TreeParams, w_hat, n: int):
    """E(C[n] | W) / (rho n) = (1 + (sigma-1) sum_{k<n} Ŵ_k (sigma Ŵ_k)^{n-k-1}) / (rho n)."""
    wh = np.atleast_2d(np.asarray(w_hat, dtype=float))[:, :n]
    e = n - 1 - np.arange(n)
    with np.errstate(divide="ignore"):
        terms = wh * np.exp(e * np.log(params.sigma * wh))
    return (1.0 + (params.sigma - 1) * terms.sum(axis=1)) / (params.rho * n)


def conditional_volume_mean(params: TreeParams, w_hat, n: int):
    """E(C[0,n] | W) / (rho n^2); a branch from height k adds sum_{j=1}^{n-k} Ŵ (sigma Ŵ)^{j-1}."""
    wh = np.atleast_2d(np.asarray(w_hat, dtype=float))[:, :n]
    L = n - np.arange(n)  # levels available above height k
    x = params.sigma * wh
    with np.errstate(divide="ignore", invalid="ignore"):
        geo = np.where(np.isclose(x, 1.0, rtol=0, atol=1e-15), L, -np.expm1(L * np.log(x)) / (1.0 - x))
    return ((n + 1) + (params.sigma - 1) * (wh * geo).sum(axis=1)) / (params.rho * n * n)


def iic_slice_mean(params: TreeParams, n: int) -> float:
    """E(C_inf[n]) / (rho n) = (1 + 2 rho n) / (rho n)."""
    return (1.0 + 2.0 * params.rho * n) / (params.rho * n)


def iic_volume_mean(params: TreeParams, n: int) -> float:
    """E(C_inf[0,n]) / (rho n^2); each critical side branch from height k adds (n-k) vertices on average."""
    return ((n + 1) + params.rho * n * (n + 1)) / (params.rho * n * n)


def iic_conditional(params: TreeParams, n: int, tau, volume: bool):
    """Exact finite-n IIC transform (every branch at p_c)."""
    pc = np.full(n + 1, params.p_c)
    f = conditional_volume_laplace if volume else conditional_slice_laplace
    return f(DualChain(params, pc), n, tau)


# ---- limits ---------------------------------------------------------------


def _envelope_batch(taus, replicas, seed, tol):
    tmax = float(np.max(taus)) if np.size(taus) else 1.0
    eps = default_eps(max(tmax, 1e-12), tol)
    return sample_envelopes(eps, 1.0, replicas, seed)


def limit_transform_samples(taus, replicas: int, seed: int, hat: bool = False, zero: bool = False,
                            tol: float = 1e-6, paths: EnvelopePath | None = None) -> np.ndarray:
    """Per-path exp(-S(tau, L)) (or exp(-Ŝ)) on a grid of tau, shape (replicas, len(taus)).

    ``zero`` replaces the sampled paths by L = 0 (the IIC limit).
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0):
        raise DomainError("tau must be non-negative")
    if zero:
        paths = EnvelopePath.zero()
    elif paths is None:
        paths = _envelope_batch(taus, replicas, seed, tol)
    fn = s_hat_functional if hat else s_functional
    cols = []
    for t in taus:
        v = np.atleast_1d(fn(float(t), paths).value) if t > 0 else np.zeros(len(paths))
        cols.append(np.exp(-v))
    out = np.column_stack(cols)
    if zero:
        out = np.repeat(out, max(replicas, 2), axis=0)
    return out


def _estimate(samples, tau, seed):
    est = McEstimate.from_samples(samples, seed)
    if np.ndim(tau) == 0:
        return McEstimate(float(est.mean[0]), float(est.se[0]), est.replicas, seed)
    return est


def limit_laplace_gamma(tau, replicas: int, seed: int, zero: bool = False, tol: float = 1e-6) -> McEstimate:
    """E exp(-S(tau, L)), the Laplace transform of Gamma (of Gamma_inf with ``zero``)."""
    return _estimate(limit_transform_samples(tau, replicas, seed, False, zero, tol), tau, seed)


def limit_laplace_gamma_hat(tau, replicas: int, seed: int, zero: bool = False, tol: float = 1e-6) -> McEstimate:
    return _estimate(limit_transform_samples(tau, replicas, seed, True, zero, tol), tau, seed)


@dataclass(frozen=True)
class LimitMoments:
    """Moments of the limiting variables."""

    gamma_mean: float = 1.0
    gamma_second: float = 5.0 / 3.0
    gamma_hat_mean: float = 0.5
    gamma_hat_second: float = 25.0 / 72.0
    iic_gamma_mean: float = 2.0
    iic_gamma_second: float = 6.0
    iic_gamma_hat_mean: float = 1.0
    iic_gamma_hat_second: float = 4.0 / 3.0

    @staticmethod
    def covariance(a: float) -> float:
        return covariance_limit(a)


MOMENTS = LimitMoments()


def covariance_limit(a: float) -> float:
    """lim E(Gamma_{an} Gamma_n) = 1 + a(1+a)/3 for a in [0, 1]."""
    if not 0.0 <= a <= 1.0:
        raise DomainError("a must lie in [0, 1]")
    return 1.0 + a * (1.0 + a) / 3.0


def iic_laplace_gamma(tau):
    return (1.0 + np.asarray(tau, dtype=float)) ** -2


def iic_laplace_gamma_hat(tau):
    return np.cosh(np.sqrt(np.asarray(tau, dtype=float))) ** -2


# ---- moments by differentiation at tau = 0 --------------------------------


@dataclass(frozen=True)
class DerivativeMoments:
    first: McEstimate
    second: McEstimate
    first_half_step: McEstimate  # same stencils at h/2, for a Richardson-style check
    second_half_step: McEstimate


def _stencils(curve, h):
    # one-sided second-order: f'(0) ~ (-3f0 + 4f1 - f2)/(2h); f''(0) ~ (2f0 - 5f1 + 4f2 - f3)/h^2
    f0, f1, f2, f3 = (curve[:, i] for i in range(4))
    d1 = (-3 * f0 + 4 * f1 - f2) / (2 * h)
    d2 = (2 * f0 - 5 * f1 + 4 * f2 - f3) / (h * h)
    return -d1, d2


def moments_by_differentiation(curve_fn, h: float = 1e-3, seed=None) -> DerivativeMoments:
    """E(X), E(X^2) from per-replica transform curves tau -> E(e^{-tau X} | ...).

    ``curve_fn(taus)`` returns an array (replicas, len(taus)).
    """
    taus = np.array([0, h, 2 * h, 3 * h, 0.5 * h, 1.5 * h])
    c = curve_fn(taus)
    m1, m2 = _stencils(c[:, [0, 1, 2, 3]], h)
    m1h, m2h = _stencils(c[:, [0, 4, 1, 5]], 0.5 * h)
    e = McEstimate.from_samples
    return DerivativeMoments(e(m1, seed), e(m2, seed), e(m1h, seed), e(m2h, seed))


def inverse_volume_statistic(params: TreeParams, n: int, replicas: int, seed: int, kind: str = "ipc") -> McEstimate:
    """MC estimate of E(n^2 / C[0, n])."""
    from .cluster.structural import sample_profiles

    if n < 1:
        raise DomainError("n must be >= 1")
    counts, _ = sample_profiles(params, n, replicas, seed, kind)
    vol = counts.sum(axis=1)
    return McEstimate.from_samples(n * n / vol, seed)


# ---- sandwich checks --------------------------------------------------------


def slice_sandwich_gap(params: TreeParams, p: float, tau: float, M: int):
    """(g_m - g~(m), lower bound, upper bound) for m = 0..M, bounds from the slice sandwich."""
    st = slice_recursion(params, p, tau, M)
    m = np.arange(M + 1)
    gap = st.values - slice_g_tilde(params, p, tau, m)
    delta = st.delta
    lower = -(delta * tau + tau * tau / 2.0) / params.sigma
    upper = m * tau**3 / (6.0 * params.sigma)
    return gap, np.full(M + 1, lower), upper


def volume_sandwich_gap(params: TreeParams, p: float, tau: float, M: int):
    """(g_m - g~(m), 0, tau + m^4 tau^3) for m = 0..M."""
    st = volume_recursion(params, p, tau, M)
    m = np.arange(M + 1)
    gap = st.values - volume_g_tilde(params, p, tau, m)
    return gap, np.zeros(M + 1), tau + m.astype(float) ** 4 * tau**3


SANDWICH_GRID = {
    "sigma": (2, 3),
    "delta": (0.0, 1e-3, 1e-2),  # p = (1 - delta) / sigma
    "tau": (1e-3, 1e-2, 1e-1),
    "M": 1000,
}


def sandwich_margins(grid=SANDWICH_GRID, slack: float = 1e-12):
    """Worst signed margins of both sandwiches over the grid (negative means violated).

    Returns rows (sigma, delta, tau, slice_low, slice_high, vol_low, vol_high),
    each margin the minimum over m = 0..M of (value - lower + slack) or
    (upper + slack - value).
    """
    rows = []
    for sigma in grid["sigma"]:
        params = TreeParams(sigma)
        for delta in grid["delta"]:
            p = (1.0 - delta) / sigma
            for tau in grid["tau"]:
                gap, lo, hi = slice_sandwich_gap(params, p, tau, grid["M"])
                vgap, vlo, vhi = volume_sandwich_gap(params, p, tau, grid["M"])
                rows.append((sigma, delta, tau, float(np.min(gap - lo + slack)), float(np.min(hi + slack - gap)),
                             float(np.min(vgap - vlo + slack)), float(np.min(vhi + slack - vgap))))
    return rows
