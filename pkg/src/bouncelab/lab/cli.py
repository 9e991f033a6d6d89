"""Command line entry point ``bouncelab``.

Exit codes: 0 when every estimate passes, 1 when some estimate fails (the
report is still written), 2 for an invalid configuration and 3 for a step
budget overrun.
"""

from __future__ import annotations

import argparse
import json
import sys

from .. import __doc__ as PACKAGE_DOC
from ..peeling import BudgetExceeded
from .config import ConfigError
from .experiments import REGISTRY, make_config, run

COMMON = ("seed", "replicas", "threads", "out", "format", "budget")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bouncelab", description=PACKAGE_DOC,
                                     epilog="exit codes: 0 ok, 1 failed estimate, "
                                            "2 invalid configuration, 3 budget overrun")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name, exp in REGISTRY.items():
        sp = sub.add_parser(name, help=exp.help, description=exp.help)
        sp.add_argument("--config", metavar="PATH",
                        help="flat JSON file of parameters; flags override it")
        sp.add_argument("--seed", help="master seed (unsigned 64-bit)")
        sp.add_argument("--threads", help="worker threads for replicas")
        sp.add_argument("--out", metavar="PATH", help="report path (default stdout)")
        sp.add_argument("--format", choices=("json", "csv"))
        # --replicas and --budget are accepted everywhere and rejected by
        # validation when the experiment has no such parameter
        if "replicas" not in exp.defaults:
            sp.add_argument("--replicas")
        if "budget" not in exp.defaults:
            sp.add_argument("--budget")
        for key, default in exp.defaults.items():
            shown = ",".join(f"{v:g}" for v in default) if isinstance(default, list) else default
            sp.add_argument(_flag(key), dest=key, metavar=type(default).__name__.upper(),
                            help=f"default {shown}")
    return parser


def config_from_args(args):
    exp = REGISTRY[args.experiment]
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a flat JSON object")
        doc.pop("experiment", None)
    for key in set(exp.defaults) | set(COMMON):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    for key in ("replicas", "budget"):
        if key in doc and key not in exp.defaults:
            raise ConfigError(f"{args.experiment} has no {key} parameter")
    seed = doc.pop("seed", 1)
    threads = doc.pop("threads", 1)
    out = doc.pop("out", None)
    fmt = doc.pop("format", "json")
    return make_config(args.experiment, doc, seed, threads, out, fmt)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        report = run(config)
    except ConfigError as exc:
        print(f"bouncelab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except BudgetExceeded as exc:
        print(f"bouncelab: {exc}", file=sys.stderr)
        return 3
    text = report.to_json() if config.format == "json" else report.to_csv()
    if config.output_path:
        with open(config.output_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for e in report.estimates:
        if e.passed is False:
            print(f"FAIL {e.name}: value {e.value} target {e.target} tol {e.tol}"
                  + (f" ({e.note})" if e.note else ""), file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
