"""Exact bond-percolation functions on the rooted tree with forward degree sigma.

The extinction probability zeta(p) of one branch is the smallest root of
x = 1 - p + p x^sigma.  Factoring out the trivial root x = 1 leaves

    S(x) = 1 + x + ... + x^(sigma-1) = 1/p,

and writing x = 1 - y this becomes y T(y) = sigma - 1/p with

    T(y) = sum_{i=0}^{sigma-2} (sigma-1-i) (1-y)^i.

Solving for y = 1 - zeta keeps full relative precision close to p_c, where
theta = y S(1 - y) is itself small.  The derivative follows by implicit
differentiation of the deflated equation,

    -zeta'(p) = S(zeta)^2 / P(zeta),   P(x) = sum_{m=0}^{sigma-2} (m+1) x^m,

which has no removable singularity at p_c.

Every function accepts scalars or arrays and returns the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError

ZETA_TOL = 1e-14
CRITICAL_GUARD = 1e-9


@dataclass(frozen=True)
class TreeParams:
    """Forward degree sigma of the rooted regular tree."""

    sigma: int = 2

    def __post_init__(self):
        if int(self.sigma) != self.sigma or self.sigma < 2:
            raise DomainError(f"sigma must be an integer >= 2, got {self.sigma!r}")
        object.__setattr__(self, "sigma", int(self.sigma))

    @property
    def p_c(self) -> float:
        return 1.0 / self.sigma

    @property
    def rho(self) -> float:
        return (self.sigma - 1) / (2.0 * self.sigma)


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def _check_unit(p, lo=0.0, hi=1.0, name="p", lo_open=False, hi_open=False):
    p = np.asarray(p, dtype=float)
    bad = np.isnan(p) | (p < lo) | (p > hi)
    if lo_open:
        bad |= p == lo
    if hi_open:
        bad |= p == hi
    if np.any(bad):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise DomainError(f"{name} must lie in {lb}{lo:g}, {hi:g}{rb}; got {p[bad].ravel()[:3]}")
    return p


def _geom_sum(x, sigma):
    """S(x) = sum_{j<sigma} x^j, by Horner."""
    s = np.ones_like(x)
    for _ in range(sigma - 1):
        s = 1.0 + x * s
    return s


def _deriv_poly(x, sigma):
    """P(x) = sum_{m=0}^{sigma-2} (m+1) x^m, so that S'(x) = P(x)."""
    s = np.full_like(x, float(sigma - 1))
    for m in range(sigma - 2, 0, -1):
        s = m + x * s
    return s


def _t_poly(y, sigma):
    """T(y) and T'(y) with S(1-y) = sigma - y T(y)."""
    x = 1.0 - y
    t = np.zeros_like(y)
    dt = np.zeros_like(y)
    for i in range(sigma - 2, -1, -1):  # Horner in x, then chain rule
        dt = t + x * dt
        t = (sigma - 1 - i) + x * t
    return t, -dt


def _solve_y(p, sigma):
    """y = 1 - zeta(p) for supercritical p (array input, p > 1/sigma)."""
    c = (sigma * p - 1.0) / p
    lo = np.zeros_like(p)
    hi = np.ones_like(p)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        t, _ = _t_poly(mid, sigma)
        up = mid * t > c
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    y = 0.5 * (lo + hi)
    for _ in range(3):
        t, dt = _t_poly(y, sigma)
        step = (y * t - c) / (t + y * dt)
        y = np.clip(y - step, lo, hi)
    if np.any(hi - lo > ZETA_TOL) or np.any(~np.isfinite(y)):
        raise ConvergenceError("extinction-probability solver failed to bracket the root")
    return y


def _one_minus_zeta(params: TreeParams, p):
    p = _check_unit(p)
    y = np.zeros_like(p)
    sup = p > params.p_c
    if np.any(sup):
        y[sup] = _solve_y(p[sup], params.sigma)
    return y


def zeta(params: TreeParams, p):
    """Extinction probability of a single branch at edge density ``p``."""
    y = _one_minus_zeta(params, p)
    return _out(1.0 - y, p)


def theta(params: TreeParams, p):
    """Percolation probability from the root, ``1 - zeta(p)**sigma``."""
    y = _one_minus_zeta(params, p)
    return _out(y * _geom_sum(1.0 - y, params.sigma), p)


def zeta_prime(params: TreeParams, p):
    """Derivative of ``zeta`` on ``[p_c, 1)``; equals ``-2 sigma/(sigma-1)`` at ``p_c``."""
    pa = _check_unit(p, params.p_c, 1.0, hi_open=True)
    z = 1.0 - _one_minus_zeta(params, pa)
    s = _geom_sum(z, params.sigma)
    val = -(s * s) / _deriv_poly(z, params.sigma)
    crit = np.abs(pa - params.p_c) <= CRITICAL_GUARD
    val = np.where(crit, -2.0 * params.sigma / (params.sigma - 1), val)
    return _out(val, p)


def _rate_from_zeta(z, sigma):
    """R = P(zeta)/S(zeta)^2, the reciprocal of -zeta'."""
    s = _geom_sum(z, sigma)
    return _deriv_poly(z, sigma) / (s * s)


def jump_rate(params: TreeParams, u):
    """R(u) = 1/(-zeta'(u)) for u in ``[p_c, 1)``."""
    return _out(-1.0 / np.asarray(zeta_prime(params, u)), u)


def dual(params: TreeParams, p):
    """Subcritical dual ``p zeta(p)^(sigma-1)``, defined on ``[p_c, 1]``."""
    pa = _check_unit(p, params.p_c, 1.0)
    z = 1.0 - _one_minus_zeta(params, pa)
    return _out(pa * z ** (params.sigma - 1), p)


def theta_inverse(params: TreeParams, u):
    """The p in ``(p_c, 1]`` with ``theta(p) = u``.

    From theta = 1 - zeta^sigma and zeta = 1 - p theta, the inverse is explicit
    for every sigma: ``p = (1 - (1-u)^(1/sigma)) / u``.  Both pieces are formed
    with log1p/expm1 so small u keeps full precision.
    """
    ua = _check_unit(u, 0.0, 1.0, name="u", lo_open=True)
    sig = params.sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -np.expm1(np.log1p(-ua) / sig) / ua
    # expm1 underflows for subnormal u; the series 1/sigma + (sigma-1) u/(2 sigma^2) is exact there
    small = ua < 1e-8
    val = np.where(small, (1.0 + (sig - 1) * ua / (2.0 * sig)) / sig, val)
    return _out(val, u)


def zeta_of_level(params: TreeParams, u):
    """zeta(theta_inverse(u)) = (1-u)^(1/sigma), without a root solve."""
    ua = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        return _out(np.exp(np.log1p(-ua) / params.sigma), u)


def rate_of_level(params: TreeParams, u):
    """R(theta_inverse(u)), evaluated directly from the level u = theta(W)."""
    return _out(_rate_from_zeta(np.asarray(zeta_of_level(params, u), dtype=float), params.sigma), u)


def table(params: TreeParams, grid) -> dict[str, np.ndarray]:
    """Columns p, theta, zeta, zeta', R, p_hat over ``grid`` (NaN where undefined)."""
    g = np.asarray(grid, dtype=float)
    cols = {"p": g, "theta": np.asarray(theta(params, g)), "zeta": np.asarray(zeta(params, g))}
    sup = (g >= params.p_c) & (g < 1.0)
    zp = np.full_like(g, np.nan)
    zp[sup] = zeta_prime(params, g[sup])
    cols["zeta_prime"] = zp
    cols["R"] = -1.0 / zp
    ph = np.full_like(g, np.nan)
    ok = g >= params.p_c
    ph[ok] = dual(params, g[ok])
    cols["p_hat"] = ph
    return cols
