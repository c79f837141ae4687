"""
Command-line entry point.

    sarp gen     --out run --seed 7
    sarp project --out run --workers 8
    sarp sort    --out run
    sarp report  --out run
    sarp verify  --out run

Settings resolve in three layers: built-in defaults, then a ``--config``
file, then flags. The config file is either flat ``key = value`` text or
a ``run_manifest.csv`` from an earlier run (the section of the same
command is used). Every run rewrites its section of ``run_manifest.csv``
in the output directory with the resolved settings and the sha256 of each
input file. The worker count is left out on purpose because it never
changes an output byte.

Failures print one line ``error: <kind>: <message>`` on stderr and exit
with status 1; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .market_data import DataError, _write
from .pipeline import RunConfig

COMMANDS = ("gen", "project", "sort", "report", "verify")
MANIFEST = "run_manifest.csv"
MANIFEST_HEADER = ("command", "key", "value")

# which input files each command reads (for the manifest digests)
READS = {
    "gen": (),
    "project": ("daily", "monthly", "rf", "factors_daily", "factors_monthly"),
    "sort": ("daily", "monthly", "rf", "factors_daily", "characteristics"),
    "report": ("monthly", "rf", "factors_monthly", "macro"),
    "verify": (),
}
PRODUCTS = {
    "sort": ("projections.csv", "legs.csv", "projections_ff3.csv", "legs_ff3.csv",
             "projections_ff5.csv", "legs_ff5.csv"),
    "report": ("bins.csv", "bins_minrisky.csv", "bins_ff3.csv", "bins_ff5.csv",
               "bins_bivariate.csv", "projections.csv"),
    "verify": ("legs.csv", "weights.csv", "projections.csv", "bins.csv"),
}


class UsageError(Exception):
    pass


def _parse_months(text: str) -> tuple:
    """'2001-01:2003-12' or a single '2001-05' -> (first, last)."""
    parts = text.split(":")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError(f"bad month range {text!r}")
    lo, hi = (str(np.datetime64(p.strip(), "M")) for p in parts)
    return lo, hi


def _coerce(name: str, text: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds or name == "extra":
        raise UsageError(f"unknown setting {name!r}")
    if name == "months":
        return _parse_months(text) if text else None
    kind = kinds[name]
    if text == "" and "None" in kind:
        return None
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    if kind.startswith("bool"):
        low = text.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ValueError(f"bad boolean {text!r} for {name}")
        return low in ("1", "true", "yes")
    return text


def read_config_file(path, command: str) -> dict:
    """Settings from a ``key = value`` file or a manifest CSV."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    out = {}
    if path.suffix == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != MANIFEST_HEADER:
            raise DataError(f"bad manifest header in {path}")
        for cmd, key, value in rows[1:]:
            if cmd == command and not key.startswith("input:") and key not in ("version",
                                                                               "command"):
                out[key] = _coerce(key, value)
        return out
    for k, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"malformed config line {k} of {path}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = _coerce(key.replace("-", "_"), value)
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(config: RunConfig, command: str):
    """Replace this command's section of the manifest, keeping the others."""
    path = config.output(MANIFEST)
    kept = []
    if path.exists():
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows and tuple(rows[0]) == MANIFEST_HEADER:
            kept = [r for r in rows[1:] if len(r) == 3 and r[0] != command]
    mine = [(command, "version", __version__)]
    mine += [(command, k, v) for k, v in pipeline.config_items(config)]
    for name in READS[command]:
        p = config.path(name)
        if p.exists():
            mine.append((command, f"input:{name}", f"{p.name} sha256={_sha256(p)}"))
    for name in PRODUCTS.get(command, ()):
        p = config.output(name)
        if p.exists():
            mine.append((command, f"input:{name}", f"{p.name} sha256={_sha256(p)}"))
    order = {c: i for i, c in enumerate(COMMANDS)}
    rows = sorted(kept + mine, key=lambda r: order.get(r[0], len(order)))
    _write(path, MANIFEST_HEADER, rows)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="key = value file or run_manifest.csv")
    g.add_argument("--out", help="output directory (default: current directory)")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int, help="process count for the projection cycle")
    g.add_argument("--months", help="formation months, e.g. 2001-01:2003-12")
    g.add_argument("--min-days", type=int, dest="min_days")
    g.add_argument("--nw-lags", type=int, dest="nw_lags")
    g.add_argument("--missing-policy", choices=("riskfree", "drop"), dest="missing_policy")
    g.add_argument("--min-risky", action="store_const", const=True, dest="min_risky",
                   help="sort only records whose replicate holds a risky peer")
    g.add_argument("-v", "--verbose", action="store_true", default=False)
    cv = common.add_argument_group("cross-validation")
    for flag, kind in (("cv-folds", int), ("cv-ell", float), ("cv-grid-size", int),
                       ("cv-grid-decay", float), ("cv-tolerance", float),
                       ("cv-max-iterations", int)):
        cv.add_argument(f"--{flag}", type=kind, dest=flag.replace("-", "_"))
    econ = common.add_argument_group("synthetic economy (gen)")
    for flag, kind in (("n-assets", int), ("n-factors", int), ("n-months", int),
                       ("idio-vol", float), ("beta-scale", float), ("alpha-scale", float),
                       ("factor-mean", float), ("factor-vol", float), ("factor-corr", float),
                       ("cluster-fraction", float), ("cluster-loading", float),
                       ("cluster-factors", int), ("cluster-idio-lo", float),
                       ("cluster-idio-hi", float),
                       ("isolated-beta", float), ("isolated-idio-lo", float),
                       ("isolated-idio-hi", float), ("rf-daily", float), ("start", str)):
        econ.add_argument(f"--{flag}", type=kind, dest=flag.replace("-", "_"))
    inp = common.add_argument_group("input files (default: standard names in --out)")
    for name in pipeline.INPUT_FILES:
        inp.add_argument(f"--{name.replace('_', '-')}", dest=name)

    parser = _Parser(prog="sarp", description="Statistical arbitrage risk research engine.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"gen": "simulate a synthetic economy", "project": "run the projection cycle",
             "sort": "decile and bivariate sorts", "report": "inference tables and plot data",
             "verify": "oracle and identity checks"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    given = vars(args).copy()
    command = given.pop("command")
    given.pop("verbose", None)
    settings = {}
    if "config" in given:
        settings.update(read_config_file(given.pop("config"), command))
    if "months" in given:
        given["months"] = _parse_months(given["months"])
    settings.update(given)
    return RunConfig(**settings)


def run(command: str, config: RunConfig) -> int:
    Path(config.out).mkdir(parents=True, exist_ok=True)
    if command == "verify":
        _, checks = pipeline.cmd_verify(config)
        write_manifest(config, command)
        failed = [c.name for c in checks if not c.passed]
        if failed:
            raise RuntimeError("verification failed: " + ",".join(failed))
        return 0
    getattr(pipeline, f"cmd_{command}")(config)
    write_manifest(config, command)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = resolve(args)
        return run(args.command, config)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {_one_line(exc)}", file=sys.stderr)
    except (ValueError, TypeError) as exc:
        print(f"error: config: {_one_line(exc)}", file=sys.stderr)
    except (OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: run: {_one_line(exc)}", file=sys.stderr)
    return 1


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
