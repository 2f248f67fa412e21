"""The sixteen end-to-end acceptance checks.

Each ``criterion_<k>(seed, scale)`` returns a :class:`CriterionResult`.
Its ``checks`` decide pass/fail at pinned tolerances; ``notes`` carry
diagnostics (finite-size extrapolations and the like) that are reported
but never gate.  ``scale`` multiplies every replica count, so ``scale <
1`` gives a quick smoke run whose verdicts are not meaningful.

Where a check says "tolerance" without a number, it means 3 standard
errors plus 5% of the target.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analytic import TreeParams, dual, theta, zeta, zeta_prime
from .cluster import contains, invade_direct, sample_coupled, sample_profiles
from .envelope import envelope_laplace, sample_envelopes
from .rpoint import SpanningGeometry, exit_ratio, finite_rpoint
from .stats import McEstimate, chi2_two_sample, ks_test, linear_fit
from .streams import derive_seed, stream
from .transform import (MOMENTS, conditional_slice_laplace, conditional_slice_mean,
                        conditional_volume_laplace, covariance_limit, iic_laplace_gamma,
                        iic_laplace_gamma_hat, limit_laplace_gamma, limit_laplace_gamma_hat,
                        moments_by_differentiation, sandwich_margins)
from .walk import exit_exponent, walk_exponents
from .weight_chain import sample_chains, scaled_path

SIGMA2 = TreeParams(2)
REL_TOL = 0.05
TAUS = (0.5, 1.0, 2.0)


@dataclass
class Check:
    label: str
    passed: bool
    detail: str


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, label, passed, detail=""):
        self.checks.append(Check(label, bool(passed), detail))

    def note(self, text):
        self.notes.append(text)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        failed = [c.label for c in self.checks if not c.passed]
        tail = f"  failed: {', '.join(failed)}" if failed else ""
        return f"[{verdict}] criterion {self.number:2d}: {self.title} ({self.seconds:.1f} s){tail}"

    def report(self) -> str:
        out = [self.line()]
        for c in self.checks:
            out.append(f"    {'ok ' if c.passed else 'BAD'} {c.label}: {c.detail}")
        for n in self.notes:
            out.append(f"    note: {n}")
        return "\n".join(out)


def _n(count, scale, floor=20):
    return max(floor, int(round(count * scale)))


def _tol(est: McEstimate, target, allowance=None) -> tuple[bool, str]:
    allow = REL_TOL * abs(target) if allowance is None else allowance
    ok = est.within(target, 3.0, allow)
    return ok, f"{est} vs {target:.6g} (allowance 3 SE + {allow:.3g}; z = {float(est.z(target)):+.2f})"


def _diff(a: McEstimate, b: McEstimate):
    """Difference of independent estimates."""
    return McEstimate(a.mean - b.mean, math.hypot(a.se, b.se), min(a.replicas, b.replicas))


_PROFILE_CACHE: dict = {}


def _profiles(kind: str, H: int, replicas: int, seed: int):
    key = (kind, H, replicas, seed)
    if key not in _PROFILE_CACHE:
        _PROFILE_CACHE[key] = sample_profiles(SIGMA2, H, replicas, derive_seed(seed, "profiles", kind, H), kind)[0]
    return _PROFILE_CACHE[key]


def clear_cache():
    _PROFILE_CACHE.clear()


def _gamma(counts, n):
    return counts[:, n] / (SIGMA2.rho * n)


def _gamma_hat(counts, n):
    return counts[:, :n + 1].sum(axis=1) / (SIGMA2.rho * n * n)


def _richardson(x_n, x_half):
    """Per-replica 2 X(n) - X(n/2): cancels a c/n bias."""
    return McEstimate.from_samples(2.0 * x_n - x_half)


# --------------------------------------------------------------------------

def criterion_1(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(1, "closed-form percolation functions (sigma=2)")
    p = np.linspace(0.0, 1.0, 1000)
    sup = p >= 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        th = np.where(sup, (2 * p - 1) / p**2, 0.0)
        ze = np.where(sup, (1 - p) / np.where(p > 0, p, 1), 1.0)
    q = np.linspace(0.5, 1.0, 1000)  # the dual is defined on [p_c, 1]
    err = max(np.max(np.abs(theta(SIGMA2, p) - th)), np.max(np.abs(zeta(SIGMA2, p) - ze)))
    derr = np.max(np.abs(dual(SIGMA2, q) - (1 - q)))
    res.check("theta, zeta on 1000 points of [0, 1]", err <= 1e-10, f"max abs error {err:.2e}")
    res.check("dual = 1 - p on 1000 points of [p_c, 1]", derr <= 1e-10, f"max abs error {derr:.2e}")
    zp = zeta_prime(SIGMA2, 0.5)
    res.check("-zeta'(p_c) = 4", -zp == 4.0, f"-zeta'(1/2) = {-zp!r}")
    return res


def criterion_2(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(2, "W_0 law from direct invasion")
    reps = _n(100_000, scale)
    mx = np.array([invade_direct(SIGMA2, 10_000, derive_seed(seed, "w0", r)).max_weight() for r in range(reps)])
    g = ks_test(mx, lambda u: theta(SIGMA2, u))
    res.check("KS vs theta at level 0.01", g.passes(0.01),
              f"D = {g.statistic:.4g}, p = {g.p_value:.3g}, {reps} runs of 10^4 steps")
    # W_0 > p_c always; a run whose maximum is still subcritical has not met its record yet
    res.note(f"fraction of maxima <= p_c: {np.mean(mx <= SIGMA2.p_c):.4f}")
    emp = np.searchsorted(np.sort(mx), 0.5 + np.array([0.002, 0.02, 0.1]), side="right") / reps
    th = theta(SIGMA2, 0.5 + np.array([0.002, 0.02, 0.1]))
    res.note(f"empirical CDF minus theta at p_c + (0.002, 0.02, 0.1): {np.round(emp - th, 4)}")
    return res


def criterion_3(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(3, "envelope limit of the weight chain")
    reps = _n(10_000, scale)
    k = 1000
    batch = sample_chains(SIGMA2, k, reps, derive_seed(seed, "chains"))
    z = scaled_path(SIGMA2, batch.w, k, [0.5, 1.0])
    g = ks_test(z[:, 1], lambda x: -np.expm1(-np.maximum(x, 0.0)))
    res.check("KS of k(sigma W_k - 1) vs Exp(1)", g.passes(0.01), f"D = {g.statistic:.4g}, p = {g.p_value:.3g}")
    target = envelope_laplace([0.5, 1.0], [1.0, 1.0])
    est = McEstimate.from_samples(np.exp(-z[:, 0] - z[:, 1]))
    ok, msg = _tol(est, target, 0.0)
    res.check("E exp(-z_500 - z_1000) = 2/9 within 3 SE", ok, msg)
    return res


def criterion_4(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(4, "multi-time envelope transform vs closed form")
    reps = _n(100_000, scale)
    rng = stream(seed, "tuples")
    paths = sample_envelopes(0.01, 1.0, reps, derive_seed(seed, "paths"))
    for i in range(5):
        n = int(rng.integers(1, 4))
        ts = np.sort(rng.uniform(0.05, 1.0, n))
        taus = rng.uniform(0.2, 3.0, n)
        L = paths.level_at(ts)
        est = McEstimate.from_samples(np.exp(-(L * taus).sum(axis=1)))
        target = envelope_laplace(ts, taus)
        ok, msg = _tol(est, target, 0.0)
        res.check(f"tuple {i}: t={np.round(ts, 3).tolist()} tau={np.round(taus, 3).tolist()}", ok, msg)
    return res


def criterion_5(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(5, "slice-size limit E Gamma_200, E Gamma_200^2")
    reps = _n(10_000, scale)
    n = 200
    c = _profiles("ipc", 2 * n, reps, seed)
    g = _gamma(c, n)
    m1 = McEstimate.from_samples(g)
    m2 = McEstimate.from_samples(g * g)
    ok, msg = _tol(m1, 1.0, 0.02)
    res.check("E Gamma_200 = 1 within 3 SE + 0.02", ok, msg)
    ok, msg = _tol(m2, MOMENTS.gamma_second, 0.05)
    res.check("E Gamma_200^2 = 5/3 within 3 SE + 0.05", ok, msg)
    chains = sample_chains(SIGMA2, n, reps, derive_seed(seed, "chains"))
    d = moments_by_differentiation(lambda taus: conditional_slice_laplace(chains, n, taus), 1e-3)
    ok, msg = _tol(_diff(d.first, m1), 0.0, 0.0)
    res.check("derivative route agrees with sampled first moment", ok, msg)
    ok, msg = _tol(_diff(d.second, m2), 0.0, 0.0)
    res.check("derivative route agrees with sampled second moment", ok, msg)
    exact = McEstimate.from_samples(conditional_slice_mean(SIGMA2, chains.dual(), n))
    res.note(f"exact-in-W E Gamma_200 = {exact}; derivative route {d.first}, {d.second}")
    rich = _richardson(g, _gamma(c, n // 2))
    res.note(f"2 Gamma_200 - Gamma_100 = {rich} (limit 1)")
    return res


def criterion_6(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(6, "volume-size limit E Gamma-hat_400, second moment")
    reps = _n(10_000, scale)
    n = 400
    c = _profiles("ipc", n, reps, seed)
    gh = _gamma_hat(c, n)
    m1 = McEstimate.from_samples(gh)
    m2 = McEstimate.from_samples(gh * gh)
    ok, msg = _tol(m1, MOMENTS.gamma_hat_mean)
    res.check("E Gamma-hat_400 -> 1/2 within tolerance", ok, msg)
    ok, msg = _tol(m2, MOMENTS.gamma_hat_second)
    res.check("E Gamma-hat_400^2 -> 25/72 within 5%", ok, msg)
    half = _gamma_hat(c, n // 2)
    res.note(f"Richardson mean {_richardson(gh, half)}, second {_richardson(gh * gh, half * half)}")
    return res


def criterion_7(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(7, "IIC moments and transforms")
    reps = _n(10_000, scale)
    n = 400
    c = _profiles("iic", n, reps, seed)
    g = _gamma(c, n)
    gh = _gamma_hat(c, n)
    for label, x, target in (("E Gamma_inf -> 2", g, MOMENTS.iic_gamma_mean),
                             ("E Gamma-hat_inf -> 1", gh, MOMENTS.iic_gamma_hat_mean),
                             ("E Gamma-hat_inf^2 -> 4/3", gh * gh, MOMENTS.iic_gamma_hat_second)):
        ok, msg = _tol(McEstimate.from_samples(x), target)
        res.check(label, ok, msg)
    for tau in TAUS:
        ok, msg = _tol(McEstimate.from_samples(np.exp(-tau * g)), float(iic_laplace_gamma(tau)), 0.0)
        res.check(f"E exp(-{tau} Gamma_inf) = (1+tau)^-2 within 3 SE", ok, msg)
        ok, msg = _tol(McEstimate.from_samples(np.exp(-tau * gh)), float(iic_laplace_gamma_hat(tau)), 0.0)
        res.check(f"E exp(-{tau} Gamma-hat_inf) = cosh(sqrt tau)^-2 within 3 SE", ok, msg)
    return res


def criterion_8(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(8, "conditional transforms at n=500 vs envelope limits")
    chains_n = _n(10_000, scale)
    paths_n = _n(100_000, scale)
    n = 500
    chains = sample_chains(SIGMA2, n, chains_n, derive_seed(seed, "chains"))
    taus = np.array(TAUS)
    for hat, cond, lim, name in ((False, conditional_slice_laplace, limit_laplace_gamma, "slice"),
                                 (True, conditional_volume_laplace, limit_laplace_gamma_hat, "volume")):
        a = McEstimate.from_samples(cond(chains, n, taus))
        b = lim(taus, paths_n, derive_seed(seed, "paths", name))
        for j, tau in enumerate(taus):
            d = McEstimate(a.mean[j] - b.mean[j], math.hypot(a.se[j], b.se[j]), chains_n)
            ok, msg = _tol(d, 0.0, 0.01)
            res.check(f"{name} tau={tau}", ok, f"conditional {a.mean[j]:.5f}, limit {b.mean[j]:.5f}; " + msg)
    big = sample_chains(SIGMA2, 4 * n, _n(2_000, scale), derive_seed(seed, "chains-4n"))
    for name, cond in (("slice", conditional_slice_laplace), ("volume", conditional_volume_laplace)):
        e = McEstimate.from_samples(cond(big, 4 * n, taus))
        res.note(f"{name} conditional transform at n = {4 * n}: {e}")
    return res


def criterion_9(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(9, "covariance E Gamma_200 Gamma_400")
    reps = _n(10_000, scale)
    c = _profiles("ipc", 400, reps, seed)
    prod = _gamma(c, 200) * _gamma(c, 400)
    target = covariance_limit(0.5)
    ok, msg = _tol(McEstimate.from_samples(prod), target)
    res.check("E Gamma_200 Gamma_400 -> 1.25 within tolerance", ok, msg)
    res.note(f"Richardson {_richardson(prod, _gamma(c, 100) * _gamma(c, 200))}")
    return res


def criterion_10(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(10, "r-point limits at N=400")
    reps = _n(20_000, scale)
    N = 400
    chains = sample_chains(SIGMA2, N, reps, derive_seed(seed, "chains"))
    two = SpanningGeometry.path(1.0).integer(N)
    three = SpanningGeometry.three_point(1 / 3, 1 / 3, 1 / 3).integer(N)
    e2 = finite_rpoint(two, chains)
    ok, msg = _tol(e2, 0.5, 0.0)
    res.check("r=2 summed -> 1/2 within 3 SE", ok, msg)
    e3 = finite_rpoint(three, chains)
    ok, msg = _tol(e3, 1 / 3, 0.0)
    res.check("r=3 symmetric -> 1/3 within 3 SE", ok, msg)
    d = exit_ratio(two, chains, (1, N // 2))
    ok, msg = _tol(d, 1.0)
    res.check("r=2 exit density at s=0.5 -> 1 within tolerance", ok, msg)
    half = chains.dual()[:, :N // 2 + 1]
    for geom, label, tgt in ((SpanningGeometry.path(1.0), "r=2", 0.5),
                             (SpanningGeometry.three_point(1 / 3, 1 / 3, 1 / 3), "r=3", 1 / 3)):
        from .rpoint import _log_sw, _per_chain

        full = _per_chain(geom.integer(N), _log_sw(SIGMA2, chains.dual(), N), 2) / N
        h = _per_chain(geom.integer(N // 2), _log_sw(SIGMA2, half, N // 2), 2) / (N // 2)
        res.note(f"{label} Richardson 2 f(N) - f(N/2) = {_richardson(full, h)} (limit {tgt:.4f})")
    return res


def criterion_11(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(11, "structural vs direct invasion, C[0,8]")
    reps = _n(10_000, scale)
    H = 8
    structural = _profiles("ipc", H, reps, seed).sum(axis=1)
    direct, unstable, r = [], 0, 0
    while len(direct) < reps:
        tr = invade_direct(SIGMA2, 10_000, derive_seed(seed, "direct", r), height_window=H)
        r += 1
        if tr.stabilized:
            direct.append(tr.volume(H))
        else:
            unstable += 1
        if r > 2 * reps:
            break
    frac = unstable / r
    g = chi2_two_sample(structural, np.array(direct))
    res.check("chi-square at level 0.01", g.passes(0.01), f"stat {g.statistic:.2f}, dof {g.dof}, p = {g.p_value:.3g}")
    res.check("unstabilized fraction < 5%", frac < 0.05, f"{unstable}/{r} = {frac:.4f}")
    return res


def criterion_12(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(12, "domination: IPC inside IIC under the coupling")
    reps = _n(10_000, scale)
    bad = 0
    for r in range(reps):
        ipc, iic = sample_coupled(SIGMA2, 100, derive_seed(seed, "coupled", r))
        bad += not contains(iic, ipc)
    res.check("containment in every sample", bad == 0, f"{bad} failures in {reps}")
    return res


def criterion_13(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(13, "sandwich inequalities on the transform grid")
    rows = sandwich_margins()
    names = ("slice lower", "slice upper", "volume lower", "volume upper")
    for j, name in enumerate(names):
        worst = min(row[3 + j] for row in rows)
        res.check(name, worst >= 0.0, f"worst margin {worst:.3g} over {len(rows)} (sigma, delta, tau) cells")
    return res


def criterion_14(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(14, "walk exponents on the IPC")
    envs = _n(100, scale, floor=5)
    ex = walk_exponents(SIGMA2, "ipc", envs, 10, derive_seed(seed, "walk"))
    res.check("range slope in [0.55, 0.8]", 0.55 <= ex.median_range_slope <= 0.8,
              f"median over {envs} environments {ex.median_range_slope:.3f}")
    s = ex.return_slope.slope
    res.check("return slope in [-0.8, -0.55]", -0.8 <= s <= -0.55, f"{s:.3f} +- {ex.return_slope.slope_se:.3f}")
    res.check("boundary contact rate < 1%", ex.contact_rate < 0.01, f"{ex.contacts}/{ex.attempts}")
    et = exit_exponent(SIGMA2, "ipc", _n(1000, scale, floor=10), derive_seed(seed, "exit"), walks_per_env=2)
    res.check("E T_n slope in [2.7, 3.3]", 2.7 <= et.fit.slope <= 3.3,
              f"{et.fit.slope:.3f} +- {et.fit.slope_se:.3f}; E T_n = {np.round(et.mean, 1).tolist()}")
    local = np.diff(np.log(et.mean)) / np.diff(np.log(et.levels))
    res.note(f"local exit slopes {np.round(local, 3).tolist()}")
    iic = walk_exponents(SIGMA2, "iic", envs, 10, derive_seed(seed, "walk-iic"))
    iet = exit_exponent(SIGMA2, "iic", _n(1000, scale, floor=10), derive_seed(seed, "exit-iic"), walks_per_env=2)
    res.note(f"IIC: range {iic.median_range_slope:.3f}, return {iic.return_slope.slope:.3f}, exit {iet.fit.slope:.3f}")
    return res


def criterion_15(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(15, "E(n^2/C[0,n]) shows no positive trend")
    reps = _n(10_000, scale)
    ns = np.array([50, 100, 200, 400, 800])
    c = _profiles("ipc", int(ns[-1]), reps, derive_seed(seed, "inverse-volume"))
    cum = np.cumsum(c, axis=1)
    ests = [McEstimate.from_samples(n * n / cum[:, n]) for n in ns]
    mean = np.array([e.mean for e in ests])
    se = np.array([e.se for e in ests])
    # estimates share trees, so fit the per-replica slope and take its SE across replicas
    x = np.log(ns)
    xc = x - x.mean()
    per = ((ns * ns / cum[:, ns]) @ xc) / (xc @ xc)
    slope = McEstimate.from_samples(per)
    res.check("slope vs log n <= 0 + 3 SE", slope.mean <= 3 * slope.se,
              f"slope {slope}; means {np.round(mean, 4).tolist()}")
    res.note(f"weighted fit ignoring correlation: {linear_fit(x, mean, se)}")
    return res


def criterion_16(seed: int, scale: float = 1.0) -> CriterionResult:
    res = CriterionResult(16, "IPC and IIC slice means separate at n=200")
    reps = _n(10_000, scale)
    a = McEstimate.from_samples(_gamma(_profiles("ipc", 400, reps, seed), 200))
    b = McEstimate.from_samples(_gamma(_profiles("iic", 400, reps, seed), 200))
    d = _diff(b, a)
    res.check("separation > 10 combined SE", d.mean > 10 * d.se, f"IIC {b}, IPC {a}; z = {d.mean / d.se:.1f}")
    return res


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 17)}


def run(numbers=None, seed: int = 0x5EED, scale: float = 1.0) -> list[CriterionResult]:
    out = []
    for k in numbers or sorted(CRITERIA):
        t0 = time.perf_counter()
        r = CRITERIA[int(k)](seed, scale)
        r.seconds = time.perf_counter() - t0
        out.append(r)
    return out
