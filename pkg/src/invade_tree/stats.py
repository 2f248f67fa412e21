"""Monte Carlo aggregation, goodness-of-fit tests and small regressions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special
from scipy.stats import chi2_contingency

from .errors import DegenerateInputError, TooFewSamplesError


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error.

    ``mean`` and ``se`` may be arrays when several quantities are estimated
    from the same replicas (for instance a transform on a grid of tau).
    """

    mean: float | np.ndarray
    se: float | np.ndarray
    replicas: int
    seed: int | None = None

    @classmethod
    def from_samples(cls, x, seed=None) -> "McEstimate":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if n < 2:
            raise TooFewSamplesError("need at least two replicas for a standard error")
        mean = x.mean(axis=0)
        se = x.std(axis=0, ddof=1) / np.sqrt(n)
        if np.ndim(mean) == 0:
            mean, se = float(mean), float(se)
        return cls(mean, se, n, seed)

    def z(self, target) -> float | np.ndarray:
        """Signed distance to ``target`` in standard errors."""
        se = np.where(np.asarray(self.se) > 0, self.se, np.inf)
        return (np.asarray(self.mean) - target) / se

    def within(self, target, n_se=3.0, allowance=0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(self.mean) - target) <= n_se * np.asarray(self.se) + allowance))

    def __str__(self):
        if np.ndim(self.mean) == 0:
            return f"{self.mean:.6g} ± {self.se:.2g} (n={self.replicas})"
        return f"{np.array2string(np.asarray(self.mean), precision=5)} ± {np.array2string(np.asarray(self.se), formatter={'float_kind': lambda v: f'{v:.2g}'})}"


@dataclass(frozen=True)
class GofResult:
    statistic: float
    p_value: float
    kind: str  # "ks" or "chi2"
    dof: int | None = None

    def passes(self, level=0.01) -> bool:
        return self.p_value >= level


def ks_test(samples, cdf: Callable) -> GofResult:
    """One-sample Kolmogorov–Smirnov test with the asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 20:
        raise TooFewSamplesError(f"KS test needs at least 20 samples, got {n}")
    F = np.clip(np.asarray(cdf(x), dtype=float), 0.0, 1.0)
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - F), np.max(F - (i - 1) / n))
    p = float(special.kolmogorov(np.sqrt(n) * d))
    return GofResult(float(d), min(max(p, 0.0), 1.0), "ks")


def _merge_bins(expected: np.ndarray, min_expected: float) -> list[np.ndarray]:
    """Group consecutive bins (left to right) until each group's expected count >= min_expected."""
    groups, cur, acc = [], [], 0.0
    for j, e in enumerate(expected):
        cur.append(j)
        acc += e
        if acc >= min_expected:
            groups.append(np.array(cur))
            cur, acc = [], 0.0
    if cur:
        if groups:
            groups[-1] = np.concatenate([groups[-1], cur])
        else:
            groups.append(np.array(cur))
    return groups


def chi2_two_sample(a, b, min_expected=5.0) -> GofResult:
    """Chi-square homogeneity test between two samples of integer-valued data.

    Values are tabulated, neighbouring values are pooled until every pooled
    cell has expected count at least ``min_expected`` in both rows.
    """
    a = np.asarray(a).astype(np.int64).ravel()
    b = np.asarray(b).astype(np.int64).ravel()
    if a.size < 20 or b.size < 20:
        raise TooFewSamplesError("chi-square comparison needs at least 20 values per sample")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    ca = np.bincount(a - lo, minlength=hi - lo + 1).astype(float)
    cb = np.bincount(b - lo, minlength=hi - lo + 1).astype(float)
    tot = ca + cb
    # smallest expected count per cell is the smaller row share of the column total
    share = min(a.size, b.size) / (a.size + b.size)
    groups = _merge_bins(tot * share, min_expected)
    table = np.array([[ca[g].sum() for g in groups], [cb[g].sum() for g in groups]])
    if table.shape[1] < 2:
        return GofResult(0.0, 1.0, "chi2", 0)
    stat, p, dof, _ = chi2_contingency(table, correction=False)
    return GofResult(float(stat), float(p), "chi2", int(dof))


def binomial_se(p_hat, n):
    return np.sqrt(np.maximum(p_hat * (1 - p_hat), 0.0) / n)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    residual: float  # root mean square residual


def linear_fit(x, y, se=None) -> LineFit:
    """Least squares line; weighted by 1/se² when standard errors are given.

    With weights the slope error is the textbook sqrt of the inverse normal
    matrix entry (known variances); without, it uses the residual variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise DegenerateInputError("need at least three (x, y) pairs of equal length")
    if np.ptp(x) == 0:
        raise DegenerateInputError("all x values coincide")
    w = np.ones_like(x) if se is None else 1.0 / np.asarray(se, dtype=float) ** 2
    A = np.vstack([x, np.ones_like(x)]).T
    Aw = A * np.sqrt(w)[:, None]
    yw = y * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    resid = y - A @ coef
    cov = np.linalg.inv(Aw.T @ Aw)
    if se is None:
        cov = cov * (resid @ resid) / max(x.size - 2, 1)
    return LineFit(float(coef[0]), float(coef[1]), float(np.sqrt(cov[0, 0])), float(np.sqrt(np.mean(resid**2))))
