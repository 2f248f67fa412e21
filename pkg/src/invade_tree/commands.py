"""Batch commands shared by the CLI and the experiment suite.

Each command declares typed options and returns a :class:`Table`; the CLI
turns options into argparse flags and the suite into ``module.key`` config
entries, so both front ends accept exactly the same settings.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .analytic import TreeParams, table
from .errors import ConfigError


def _floats(text) -> tuple:
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _ints(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    if str(text).strip() == "all":
        return ()
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _opt_float(text):
    return None if text in (None, "", "none") else float(text)


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable
    default: Any
    help: str = ""
    choices: tuple | None = None

    def coerce(self, value):
        try:
            v = self.type(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cannot read {value!r} ({exc})", field=self.name) from None
        if self.choices is not None and v not in self.choices:
            raise ConfigError(f"{v!r} is not one of {', '.join(map(str, self.choices))}", field=self.name)
        return v


@dataclass
class Table:
    name: str
    fields: list
    rows: list
    verdict: bool | None = None  # set by commands that assert something
    text: str = ""  # human-readable summary
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    options: tuple
    run: Callable

    def defaults(self) -> dict:
        return {o.name: o.default for o in self.options}

    def resolve(self, given: dict) -> dict:
        known = {o.name: o for o in self.options}
        out = self.defaults()
        for k, v in given.items():
            if k not in known:
                raise ConfigError(f"unknown setting {k!r} for {self.name}", field=k)
            out[k] = known[k].coerce(v)
        return out


SIGMA = Option("sigma", int, 2, "tree branching number")


def _analytic(seed, out_dir, sigma, points):
    params = TreeParams(sigma)
    cols = table(params, np.linspace(0.0, 1.0, points))
    names = list(cols)
    rows = list(zip(*(cols[n] for n in names)))
    return Table("analytic", names, rows, text=f"{points} grid points, sigma = {sigma}")


def _chain(seed, out_dir, sigma, length, replicas, w0):
    from .weight_chain import sample_chains

    params = TreeParams(sigma)
    b = sample_chains(params, length, replicas, seed, w0)
    wh = b.dual()
    k = np.arange(length + 1)
    z = k * (sigma * b.w - 1.0)
    rows = [(r, j, b.w[r, j], wh[r, j], z[r, j]) for r in range(replicas) for j in k]
    return Table("chain", ["replica", "k", "W_k", "W_hat_k", "z_k"], rows)


def _envelope(seed, out_dir, eps, tau, replicas):
    from .envelope import default_eps, envelope_laplace, s_functional, s_hat_functional, sample_envelopes
    from .stats import McEstimate

    taus = [t for t in tau if t > 0]
    if not taus:
        raise ConfigError("need at least one positive tau", field="tau")
    eps = eps if eps is not None else default_eps(max(taus))
    paths = sample_envelopes(eps, 1.0, replicas, seed)
    S = {t: np.atleast_1d(s_functional(t, paths).value) for t in taus}
    Sh = {t: np.atleast_1d(s_hat_functional(t, paths).value) for t in taus}
    rows = [(r, t, S[t][r], Sh[t][r]) for r in range(replicas) for t in taus]
    L1 = np.atleast_2d(paths.level_at(1.0))[:, 0]
    cmp_rows, lines = [], []
    for t in taus:
        e = McEstimate.from_samples(np.exp(-t * L1))
        exact = envelope_laplace([1.0], [t])
        cmp_rows.append((t, "exp(-tau L(1))", e.mean, e.se, exact))
        lines.append(f"tau={t:g}: E exp(-tau L(1)) = {e} vs {exact:.6f}")
        for label, v in (("exp(-S)", S[t]), ("exp(-S_hat)", Sh[t])):
            m = McEstimate.from_samples(np.exp(-v))
            cmp_rows.append((t, label, m.mean, m.se, float("nan")))
    comparisons = ("envelope-closed-form", ["tau", "quantity", "estimate", "se", "closed_form"], cmp_rows)
    return Table("envelope", ["replica", "tau", "S", "S_hat"], rows, text="\n".join(lines),
                 extra={"tables": [comparisons]})


def _sample(seed, out_dir, sigma, kind, height, replicas, steps):
    from .cluster import contains, invade_direct, sample_coupled, sample_profiles
    from .streams import derive_seed

    params = TreeParams(sigma)
    fields = ["replica", "n", "C_n", "Ccum_n"]
    if kind in ("ipc", "iic"):
        counts, _ = sample_profiles(params, height, replicas, seed, kind)
        cum = np.cumsum(counts, axis=1)
        rows = [(r, h, counts[r, h], cum[r, h]) for r in range(replicas) for h in range(height + 1)]
        return Table(f"sample-{kind}", fields, rows)
    if kind == "coupled":
        rows, ok = [], True
        for r in range(replicas):
            ipc, iic = sample_coupled(params, height, derive_seed(seed, "coupled", r))
            inside = contains(iic, ipc)
            ok &= inside
            ci, cj = ipc.cumulative(), iic.cumulative()
            rows += [(r, h, ipc.counts[h], ci[h], iic.counts[h], cj[h], inside) for h in range(height + 1)]
        return Table("sample-coupled", fields + ["C_inf_n", "Ccum_inf_n", "contained"], rows, verdict=ok,
                     text=f"containment held in {'all' if ok else 'not all'} {replicas} pairs")
    rows, stable, first = [], 0, None
    for r in range(replicas):
        tr = invade_direct(params, steps, derive_seed(seed, "direct", r), height_window=height)
        first = first or tr
        stable += bool(tr.stabilized)
        c = np.bincount(tr.height[: tr.steps + 1], minlength=height + 1)[: height + 1]
        cum = np.cumsum(c)
        rows += [(r, h, c[h], cum[h]) for h in range(height + 1)]
    return Table("sample-direct", fields, rows, extra={"trace": first},
                 text=f"{stable}/{replicas} runs stabilized below height {height}; "
                      f"run 0 max weight {first.max_weight():.6f}")


_QUANTITIES = ("gamma", "gamma-hat", "iic-gamma", "iic-gamma-hat")


def _transform(seed, out_dir, sigma, quantity, tau, n, replicas, paths):
    from .stats import McEstimate
    from .streams import derive_seed
    from .transform import (conditional_slice_laplace, conditional_volume_laplace, iic_conditional,
                            iic_laplace_gamma, iic_laplace_gamma_hat, limit_laplace_gamma,
                            limit_laplace_gamma_hat)
    from .weight_chain import sample_chains

    params = TreeParams(sigma)
    taus = np.array(tau)
    hat = quantity.endswith("hat")
    nan = np.full(taus.size, np.nan)
    if quantity.startswith("iic"):
        est = np.atleast_1d(iic_conditional(params, n, taus, hat))
        se = np.zeros(taus.size)
        closed = (iic_laplace_gamma_hat if hat else iic_laplace_gamma)(taus)
    else:
        b = sample_chains(params, n, replicas, derive_seed(seed, "chains"))
        a = McEstimate.from_samples((conditional_volume_laplace if hat else conditional_slice_laplace)(b, n, taus))
        est, se, closed = np.atleast_1d(a.mean), np.atleast_1d(a.se), nan
    if paths > 0 and not quantity.startswith("iic"):
        lim = (limit_laplace_gamma_hat if hat else limit_laplace_gamma)(taus, paths, derive_seed(seed, "paths"))
        lm, ls = lim.mean, lim.se
    else:
        lm = ls = nan
    rows = [(t, n, est[j], se[j], closed[j], lm[j], ls[j]) for j, t in enumerate(taus)]
    return Table(f"transform-{quantity}", ["tau", "n", "estimate", "se", "closed_form", "limit_estimate", "limit_se"],
                 rows)


def _rpoint(seed, out_dir, sigma, geometry, N, chains, mode, exit):
    from .rpoint import SpanningGeometry, exit_ratio, finite_rpoint, limit_joint, limit_rpoint
    from .weight_chain import sample_chains

    params = TreeParams(sigma)
    geom = SpanningGeometry.load(geometry) if geometry else SpanningGeometry.path(1.0)
    ig = geom.integer(N) if not (geom.is_integer and geom.total == N) else geom
    b = sample_chains(params, N, chains, seed)
    if mode == "summed":
        e = finite_rpoint(ig, b, "summed")
        limit = limit_rpoint(geom.scaled())
        rows = [("summed", N, "", "", e.mean, e.se, limit)]
    else:
        v, k = exit.split(":")
        k = int(k)
        e = finite_rpoint(ig, b, "joint", (v, k))
        r = exit_ratio(ig, b, (v, k))
        sc = geom.scaled()
        rows = [("joint", N, v, k, e.mean, e.se, limit_joint(sc, v, k / N)),
                ("exit_density", N, v, k, r.mean, r.se, limit_joint(sc, v, k / N) / limit_rpoint(sc))]
    return Table("rpoint", ["mode", "N", "segment", "k", "estimate", "se", "limit"], rows)


def _walk(seed, out_dir, sigma, kind, kmax, n, environments, walks_per_env, statistic):
    from .walk import exit_exponent, walk_exponents

    params = TreeParams(sigma)
    if statistic == "exit":
        if n < 8:
            raise ConfigError("exit statistic needs n >= 8 (four dyadic levels)", field="n")
        levels = [n >> j for j in (3, 2, 1, 0)]
        ex = exit_exponent(params, kind, environments, seed, levels, walks_per_env)
        t = ex.times.reshape(environments, walks_per_env, -1).mean(axis=1)
        rows = [(e, lv, t[e, j]) for e in range(environments) for j, lv in enumerate(ex.levels)]
        return Table(f"walk-{kind}-exit", ["env", "k_or_n", "statistic"], rows,
                     text=f"E T_n slope {ex.fit.slope:.3f}")
    hi = int(np.log2(kmax))
    ex = walk_exponents(params, kind, environments, walks_per_env, seed, (max(hi - 6, 1), hi))
    if statistic == "range":
        rows = [(e, k, ex.env_ranges[e, j]) for e in range(environments) for j, k in enumerate(ex.ks)]
        txt = f"median range slope {ex.median_range_slope:.3f}"
    else:
        rows = [(e, k, ex.env_returns[e, j]) for e in range(environments) for j, k in enumerate(ex.ks[:-1])]
        txt = f"return slope {ex.return_slope.slope:.3f}"
    return Table(f"walk-{kind}-{statistic}", ["env", "k_or_n", "statistic"], rows, text=txt)


def _acceptance(seed, out_dir, criterion, scale):
    from . import acceptance

    results = acceptance.run(list(criterion) or None, seed, scale)
    rows = [(r.number, c.label, c.passed, c.detail) for r in results for c in r.checks]
    text = "\n".join(r.report() for r in results)
    return Table("acceptance", ["criterion", "check", "passed", "detail"], rows,
                 verdict=all(r.passed for r in results), text=text, extra={"results": results})


COMMANDS = {c.name: c for c in (
    Command("analytic", "percolation functions on a grid", (
        SIGMA, Option("points", int, 1001, "grid points on [0, 1]")), _analytic),
    Command("chain", "sample forward maximal weight chains", (
        SIGMA, Option("length", int, 100, "chain length n"), Option("replicas", int, 10, "number of chains"),
        Option("w0", _opt_float, None, "fixed starting weight")), _chain),
    Command("envelope", "envelope paths, their functionals and the closed-form transform", (
        Option("eps", _opt_float, None, "left end of the window (default from tau)"),
        Option("tau", _floats, (0.5, 1.0, 2.0), "comma-separated tau values"),
        Option("replicas", int, 10_000, "envelope paths")), _envelope),
    Command("sample", "sample clusters", (
        SIGMA, Option("kind", str, "ipc", "cluster kind", ("ipc", "iic", "coupled", "direct")),
        Option("height", int, 100, "height cap (height window for direct runs)"),
        Option("replicas", int, 100, "number of trees"),
        Option("steps", int, 10_000, "invasion steps (direct)")), _sample),
    Command("transform", "conditional Laplace transforms against their limits", (
        SIGMA, Option("quantity", str, "gamma", "transform to estimate", _QUANTITIES),
        Option("tau", _floats, (0.5, 1.0, 2.0), "comma-separated tau values"),
        Option("n", int, 500, "height"), Option("replicas", int, 1000, "weight chains"),
        Option("paths", int, 0, "envelope paths for the limit (0 skips it)")), _transform),
    Command("rpoint", "finite-N r-point function from weight chains", (
        SIGMA, Option("geometry", str, "", "geometry file (default: the two-point path)"),
        Option("N", int, 400, "total edges"), Option("chains", int, 1000, "weight chains"),
        Option("mode", str, "summed", "summed or joint", ("summed", "joint")),
        Option("exit", str, "x1:200", "segment:k exit position for joint mode")), _rpoint),
    Command("walk", "random walk statistics on sampled clusters", (
        SIGMA, Option("kind", str, "ipc", "cluster kind", ("ipc", "iic")),
        Option("kmax", int, 2 ** 16, "largest walk length (range, return)"),
        Option("n", int, 128, "largest exit height (exit)"),
        Option("environments", int, 100, "sampled trees"), Option("walks_per_env", int, 10, "walks per tree"),
        Option("statistic", str, "range", "range, return or exit", ("range", "return", "exit"))), _walk),
    Command("acceptance", "run acceptance criteria", (
        Option("criterion", _ints, (), "criterion numbers, or 'all'"),
        Option("scale", float, 1.0, "replica multiplier")), _acceptance),
)}


def run_command(name: str, settings: dict, seed: int, out_dir) -> Table:
    if name not in COMMANDS:
        raise ConfigError(f"unknown command {name!r}", field="run")
    cmd = COMMANDS[name]
    return cmd.run(seed, out_dir, **cmd.resolve(settings))
