"""Command-line entry point: ``cloakbench <experiment> --config FILE [--out DIR] [--seed N]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .harness.config import KINDS, ConfigError, ExperimentConfig, load_config
from .harness.experiments import NUMERICAL, StageError, run

EXIT_OK, EXIT_BAND, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("cloakbench")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cloakbench", description="Regularised-cloak benchmark experiments")
    sub = ap.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        sp = sub.add_parser(k, help=f"run the {k} experiment")
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="random seed (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        over = {"out": args.out, "seed": args.seed}
        if args.config:
            cfg = load_config(args.config, **over)
            if cfg.kind != args.kind:
                keys = {ln.split("#", 1)[0].split("=", 1)[0].strip() for ln in open(args.config)}
                if "kind" in keys:
                    raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.kind!r}")
                cfg = cfg.with_overrides(kind=args.kind).validate()
        else:
            cfg = ExperimentConfig(kind=args.kind, **{k: v for k, v in over.items() if v is not None}).validate()
        table = run(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    sys.stdout.write(table.report())
    return EXIT_OK if table.passed else EXIT_BAND


if __name__ == "__main__":
    sys.exit(main())
