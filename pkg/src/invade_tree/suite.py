"""Line-oriented experiment configs and the suite runner.

A config is a sequence of ``key = value`` lines; ``#`` starts a comment.
``experiment = <name>`` opens a block, ``run = <command>`` picks the
command and ``<command>.<setting> = value`` lines configure it.  Lines
before the first block may set ``suite.seed``.

    suite.seed = 0x5eed
    experiment = closed-forms
    run = acceptance
    acceptance.criterion = 1

Experiment ``e`` runs with the seed ``derive_seed(master, "experiment", e)``,
so experiments never share streams and reordering the file changes nothing.
"""
from __future__ import annotations

import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .commands import COMMANDS
from .errors import ConfigError
from .io import emit, write_csv
from .streams import derive_seed, parse_seed, stream_id

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


@dataclass
class Experiment:
    name: str
    line: int
    run: str | None = None
    settings: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)  # setting -> line number


@dataclass
class SuiteConfig:
    experiments: list
    seed: int | None = None


def parse_config(text: str) -> SuiteConfig:
    exps: list[Experiment] = []
    seed = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not value:
            raise ConfigError("missing value", line=lineno, field=key)
        if key == "experiment":
            if not _NAME.match(value):
                raise ConfigError(f"bad experiment name {value!r}", line=lineno, field=key)
            if any(e.name == value for e in exps):
                raise ConfigError(f"duplicate experiment {value!r}", line=lineno, field=key)
            exps.append(Experiment(value, lineno))
        elif key == "suite.seed":
            if exps:
                raise ConfigError("suite.seed must come before the first experiment", line=lineno, field=key)
            try:
                seed = parse_seed(value)
            except ValueError as exc:
                raise ConfigError(str(exc), line=lineno, field=key) from None
        elif not exps:
            raise ConfigError("setting outside an experiment block", line=lineno, field=key)
        elif key == "run":
            if value not in COMMANDS:
                raise ConfigError(f"unknown command {value!r}", line=lineno, field=key)
            exps[-1].run = value
        elif "." in key:
            ns, name = key.split(".", 1)
            cur = exps[-1]
            if cur.run is None:
                raise ConfigError("'run =' must precede settings", line=lineno, field=key)
            if ns != cur.run:
                raise ConfigError(f"setting for {ns!r} in a {cur.run!r} experiment", line=lineno, field=key)
            opts = {o.name: o for o in COMMANDS[ns].options}
            if name not in opts:
                raise ConfigError(f"unknown setting {name!r} for {ns}", line=lineno, field=key)
            try:
                cur.settings[name] = opts[name].coerce(value)
            except ConfigError as exc:
                raise ConfigError(exc.message, line=lineno, field=key) from None
            cur.lines[name] = lineno
        else:
            raise ConfigError(f"unknown key {key!r}", line=lineno, field=key)
    for e in exps:
        if e.run is None:
            raise ConfigError(f"experiment {e.name!r} has no 'run ='", line=e.line)
    return SuiteConfig(exps, seed)


def load_config(path) -> SuiteConfig:
    if str(path) == "paper-suite":
        return parse_config(bundled_config())
    return parse_config(Path(path).read_text(encoding="utf-8"))


def bundled_config() -> str:
    return resources.files("invade_tree").joinpath("data/paper-suite.conf").read_text(encoding="utf-8")


def experiment_seed(master: int, name: str) -> int:
    return derive_seed(master, "experiment", name)


def stream_ids(config: SuiteConfig, master: int, replicas: int) -> list:
    """Fingerprints of the streams (master, e, r) for every experiment e and r < replicas."""
    return [stream_id(master, "experiment", e.name, r) for e in config.experiments for r in range(replicas)]


def _execute(exp: Experiment, master: int, out_dir: str):
    seed = experiment_seed(master, exp.name)
    from .commands import run_command

    tab = run_command(exp.run, exp.settings, seed, out_dir)
    emit(out_dir, exp.name, tab.fields, tab.rows, seed)
    for name, fields, rows in tab.extra.get("tables", ()):
        emit(out_dir, f"{exp.name}.{name}", fields, rows, seed)
    return tab.verdict, tab.text


def run_experiment(config, seed: int = 0x5EED, out_dir=".", threads: int = 1) -> int:
    """Run every experiment of ``config`` (a SuiteConfig, text, or path) and write reports.

    Returns 0 when all ran and every assertion held, 2 if an assertion failed,
    1 on any error.
    """
    try:
        if isinstance(config, SuiteConfig):
            cfg = config
        elif isinstance(config, Path) or (isinstance(config, str) and "\n" not in config and "=" not in config):
            cfg = load_config(config)
        else:
            cfg = parse_config(config)
    except (ConfigError, OSError) as exc:
        print(f"invade-tree: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    master = cfg.seed if cfg.seed is not None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    code = EXIT_OK
    if threads > 1 and len(cfg.experiments) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = {e.name: pool.submit(_execute, e, master, str(out)) for e in cfg.experiments}
            for name, f in futs.items():
                try:
                    results[name] = ("ok", *f.result())
                except Exception as exc:  # reported per experiment
                    results[name] = ("error", None, f"{type(exc).__name__}: {exc}")
    else:
        for e in cfg.experiments:
            log.info("running %s (%s)", e.name, e.run)
            try:
                results[e.name] = ("ok", *_execute(e, master, str(out)))
            except Exception as exc:
                results[e.name] = ("error", None, f"{type(exc).__name__}: {exc}")
    rows = []
    for e in sorted(cfg.experiments, key=lambda x: x.name):
        status, verdict, text = results[e.name]
        if status == "error":
            print(f"invade-tree: experiment {e.name!r} failed: {text}", file=sys.stderr)
            code = EXIT_ERROR
            rows.append((e.name, e.run, "error", text))
            continue
        if verdict is False:
            code = max(code, EXIT_FAILED) if code != EXIT_ERROR else code
            rows.append((e.name, e.run, "failed", ""))
        else:
            rows.append((e.name, e.run, "ok" if verdict is None else "passed", ""))
        if text:
            print(f"== {e.name}\n{text}")
    write_csv(out / "suite-report.csv", ["experiment", "run", "status", "detail"], rows, master)
    return code
