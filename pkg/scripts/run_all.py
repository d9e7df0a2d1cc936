"""Run every experiment config in ``scripts/configs`` and print a one-line summary per run.

    python scripts/run_all.py [--out runs] [--only sweep_full,rates]
"""
import argparse
import sys
import time
from pathlib import Path

from cloakbench.harness import experiments
from cloakbench.harness.config import ConfigError, load_config

HERE = Path(__file__).resolve().parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--only", default="", help="comma-separated config stems")
    args = ap.parse_args(argv)
    wanted = {s for s in args.only.split(",") if s}
    failed = 0
    for path in sorted((HERE / "configs").glob("*.cfg")):
        if wanted and path.stem not in wanted:
            continue
        out = Path(args.out) / path.stem
        try:
            cfg = load_config(path, out=str(out))
            t0 = time.perf_counter()
            table = experiments.run(cfg)
        except ConfigError as exc:
            print(f"{path.stem:15s} CONFIG ERROR {exc}")
            failed += 1
            continue
        wall = time.perf_counter() - t0
        fails = [c.name for c in table.checks if not c.passed and not c.informational]
        status = "PASS" if table.passed else "FAIL"
        print(f"{path.stem:15s} {status}  {wall:7.1f} s  -> {out}" + (f"  ({'; '.join(fails)})" if fails else ""))
        failed += not table.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
