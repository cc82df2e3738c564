"""Batch runner: ``vfoldpen run --scenario S1 --selectors mal,2fcv,penloo+ --N 100``.

Settings come from flags and, optionally, a flat ``key=value`` file given
with ``--config``. Flags win over the file. List keys (``scenario``,
``selectors``) may be repeated in the file or comma separated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, VFoldError
from .experiments import BenchmarkTable, appendix_selectors, benchmark, resolve_workers, table1_selectors
from .scenarios import SCENARIOS, get_scenario
from .selectors import OVERPEN_PLUS, Method, SelectorSpec

log = logging.getLogger("vfoldpen")

FORMATS = ("csv", "markdown", "json")
CSV_COLUMNS = (
    "scenario",
    "selector",
    "V",
    "C",
    "overpen",
    "C_or",
    "se_or",
    "C_path_or",
    "se_path_or",
    "C_prime_or",
    "N",
    "drops",
)
LIST_KEYS = ("scenario", "selectors")
SCALAR_KEYS = ("N", "seed", "threads", "output", "format")
# Names accepted in config files; "selector" and "scenarios" are aliases.
KEY_ALIASES = {"selector": "selectors", "scenarios": "scenario", "n": "N"}

_SELECTOR_RE = re.compile(
    r"""^(?P<base>
        mal\*? | epenid | oracle
      | (?P<corr>corr)?(?:(?P<cvV>\d+)fcv|(?P<cvloo>loo))
      | pen(?:(?P<penV>\d+)f|(?P<penloo>loo))(?P<closed>closed)?
    )(?P<plus>\+)?(?:@c=(?P<C>[0-9.eE+-]+))?$""",
    re.VERBOSE,
)


@dataclass
class RunConfig:
    scenarios: list[str]
    selectors: list[SelectorSpec] = field(default_factory=table1_selectors)
    N: int = 100
    seed: int = 0
    threads: int | None = None
    output: str = "-"
    format: str = "csv"


def parse_selector(token: str) -> SelectorSpec:
    """Turn a shorthand such as ``pen10f+`` or ``5fcv`` into a :class:`SelectorSpec`.

    Grammar: ``mal``, ``mal*``, ``epenid``, ``<V>fcv``, ``loo``,
    ``pen<V>f``, ``penloo``, optionally followed by ``+`` (overpenalize by
    5/4) and ``@c=<x>`` (override C). Extras: ``corr<V>fcv``/``corrloo``
    for bias-corrected cross-validation, a ``closed`` suffix on
    ``pen<V>f`` for the closed-form expected penalty, and ``oracle`` for
    the true-loss minimizer. ``penloo`` uses the closed form, which is exact
    for leave-one-out.
    """
    raw = token.strip()
    m = _SELECTOR_RE.match(raw.lower())
    if not m:
        raise ConfigError(f"unknown selector {raw!r}")
    g = m.groupdict()
    overpen = OVERPEN_PLUS if g["plus"] else 1.0
    C = None
    if g["C"] is not None:
        try:
            C = float(g["C"])
        except ValueError:
            raise ConfigError(f"bad C value in selector {raw!r}") from None
    base = g["base"]
    try:
        if base == "mal":
            method, V = Method.MALLOWS, None
        elif base == "mal*":
            method, V = Method.MALLOWS_STAR, None
        elif base == "epenid":
            method, V = Method.IDEAL_EXPECTED_PENALTY, None
        elif base == "oracle":
            method, V = Method.PATH_ORACLE, None
        elif g["cvV"] is not None or g["cvloo"] is not None:
            method = Method.CORRECTED_VFCV if g["corr"] else Method.VFCV
            V = "n" if g["cvloo"] else int(g["cvV"])
        else:
            V = "n" if g["penloo"] else int(g["penV"])
            closed = bool(g["closed"]) or V == "n"
            method = Method.PEN_VF_CLOSED if closed else Method.PEN_VF_GENERAL
        if C is not None and method not in (Method.PEN_VF_GENERAL, Method.PEN_VF_CLOSED):
            raise ConfigError(f"selector {raw!r}: @c= applies only to V-fold penalties")
        if overpen != 1.0 and method in (Method.VFCV, Method.CORRECTED_VFCV, Method.PATH_ORACLE):
            raise ConfigError(f"selector {raw!r}: '+' applies only to penalties")
        return SelectorSpec(method, V=V, C=C, overpen=overpen)
    except (ValueError, VFoldError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"selector {raw!r}: {exc}") from None


def parse_selectors(tokens: Sequence[str]) -> list[SelectorSpec]:
    """Parse shorthands; ``table1`` and ``appendix`` expand to the standard rosters."""
    out: list[SelectorSpec] = []
    for tok in _split(tokens):
        if tok.lower() == "table1":
            out += table1_selectors()
        elif tok.lower() == "appendix":
            out += appendix_selectors()
        else:
            out.append(parse_selector(tok))
    return out


def _split(values: Sequence[str]) -> list[str]:
    return [t.strip() for v in values for t in v.split(",") if t.strip()]


def read_config_file(path: str | os.PathLike) -> dict[str, list[str]]:
    """Read a flat ``key=value`` file. ``#`` starts a comment; keys may repeat."""
    out: dict[str, list[str]] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = KEY_ALIASES.get(key, key)
        if key not in LIST_KEYS + SCALAR_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out.setdefault(key, []).append(value)
    for key, values in out.items():
        if key in SCALAR_KEYS and len(values) > 1:
            raise ConfigError(f"{path}: key {key!r} given {len(values)} times")
    return out


def _parse_int(key: str, value: str, lo: int, hi: int | None = None) -> int:
    try:
        v = int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None
    if v < lo or (hi is not None and v > hi):
        raise ConfigError(f"{key}={v} out of range")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfoldpen", description="Histogram model-selection benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run benchmarks and write a table")
    run.add_argument("--config", help="flat key=value file; flags override it")
    run.add_argument("--scenario", action="append", help="scenario name(s), comma separated or repeated")
    run.add_argument("--selectors", action="append", help="selector shorthands, e.g. mal,2fcv,penloo+")
    run.add_argument("--N", dest="N", help="replications per scenario")
    run.add_argument("--seed", help="master seed (64-bit unsigned)")
    run.add_argument("--threads", help="worker processes, or 'auto'")
    run.add_argument("--output", help="output path, '-' for stdout")
    run.add_argument("--format", help="csv, markdown or json")
    run.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("scenarios", help="list scenario names")
    return parser


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Resolve a :class:`RunConfig` from ``run`` arguments (the ``run`` word is optional)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] != "run":
        argv = ["run", *argv]
    ns, extra = build_parser().parse_known_args(argv)
    if extra:
        raise ConfigError(f"unknown flag {extra[0]!r}")
    return _resolve(ns)


def _resolve(ns: argparse.Namespace) -> RunConfig:
    values = read_config_file(ns.config) if ns.config else {}
    for key in LIST_KEYS + SCALAR_KEYS:
        flag = getattr(ns, key, None)
        if flag is not None:
            values[key] = list(flag) if isinstance(flag, list) else [flag]

    names = _split(values.get("scenario", []))
    if not names:
        raise ConfigError("no scenario given (--scenario)")
    for name in names:
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    selectors = parse_selectors(values["selectors"]) if "selectors" in values else table1_selectors()

    cfg = RunConfig(names, selectors)
    if "N" in values:
        cfg.N = _parse_int("N", values["N"][0], 1)
    if "seed" in values:
        cfg.seed = _parse_int("seed", values["seed"][0], 0, 2**64 - 1)
    if "threads" in values:
        t = values["threads"][0]
        cfg.threads = None if t.lower() == "auto" else _parse_int("threads", t, 1)
    if "output" in values:
        cfg.output = values["output"][0]
    if "format" in values:
        fmt = values["format"][0].lower()
        if fmt == "md":
            fmt = "markdown"
        if fmt not in FORMATS:
            raise ConfigError(f"unknown format {values['format'][0]!r}; use one of {', '.join(FORMATS)}")
        cfg.format = fmt
    return cfg


# --- output --------------------------------------------------------------------


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _sig4(x: float) -> str:
    return "nan" if x is None or math.isnan(x) else f"{x:.4g}"


def _csv_rows(table: BenchmarkTable) -> list[list[str]]:
    return [
        [table.scenario] + [_num(getattr(r, c)) for c in CSV_COLUMNS[1:]]
        for r in table.rows
    ]


def _markdown(table: BenchmarkTable) -> str:
    lines = [
        f"### {table.scenario} (N={table.N}, seed={table.master_seed})",
        "",
        "| selector | C_or | C_path_or | C'_or | drops |",
        "|---|---|---|---|---|",
    ]
    for r in table.rows:
        lines.append(
            f"| {r.selector} | {_sig4(r.C_or)} ± {_sig4(r.se_or)} | "
            f"{_sig4(r.C_path_or)} ± {_sig4(r.se_path_or)} | {_sig4(r.C_prime_or)} | {r.drops} |"
        )
    return "\n".join(lines) + "\n"


def emit_tables(tables: Sequence[BenchmarkTable], fmt: str) -> bytes:
    """Serialize several tables into one document."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in tables:
            w.writerows(_csv_rows(t))
        return buf.getvalue().encode()
    if fmt == "markdown":
        return "\n".join(_markdown(t) for t in tables).encode()
    if fmt == "json":
        return (json.dumps([t.to_dict() for t in tables], indent=2) + "\n").encode()
    raise ConfigError(f"unknown format {fmt!r}")


def emit_table(table: BenchmarkTable, fmt: str) -> bytes:
    """Serialize one table.

    csv carries the twelve columns at full precision; markdown rounds to
    4 significant digits; json is ``table.to_dict()`` and round-trips
    through :func:`load_json_table`.
    """
    if fmt == "json":
        return (json.dumps(table.to_dict(), indent=2) + "\n").encode()
    return emit_tables([table], fmt)


def load_json_table(payload: bytes | str) -> BenchmarkTable:
    return BenchmarkTable.from_dict(json.loads(payload))


def write_atomic(path: str | os.PathLike, payload: bytes):
    """Write via a temporary file in the target directory and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig) -> int:
    """Run every scenario of ``cfg``; returns the process exit code."""
    workers = resolve_workers(cfg.threads)
    tables, failed = [], []
    for name in cfg.scenarios:
        t0 = time.perf_counter()
        try:
            table = benchmark(get_scenario(name), cfg.selectors, cfg.N, cfg.seed, workers=workers)
        except (VFoldError, ValueError) as exc:
            failed.append(name)
            log.error("%s: failed: %s: %s", name, type(exc).__name__, exc)
            continue
        tables.append(table)
        log.info("%s: N=%d, %d selectors, %.1f s", name, cfg.N, len(cfg.selectors), time.perf_counter() - t0)
    if cfg.format == "json" and len(cfg.scenarios) == 1 and tables:
        payload = emit_table(tables[0], "json")
    else:
        payload = emit_tables(tables, cfg.format)
    try:
        if cfg.output == "-":
            sys.stdout.buffer.write(payload)
            sys.stdout.flush()
        else:
            write_atomic(cfg.output, payload)
    except OSError as exc:
        log.error("cannot write %s: %s", cfg.output, exc)
        return 3
    return 1 if failed else 0


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns, extra = parser.parse_known_args(argv)
        if extra:
            raise ConfigError(f"unknown flag {extra[0]!r}")
        if ns.command == "scenarios":
            for name, sc in SCENARIOS.items():
                print(f"{name}\tn={sc.n}\t{sc.s_id}\t{sc.sigma_id}\t{sc.collection_kind.value}")
            return 0
        logging.basicConfig(
            level=logging.DEBUG if ns.verbose else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr
        )
        cfg = _resolve(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
