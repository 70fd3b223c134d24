"""Run both scenario suites, print the comparison tables and write JSON reports."""

import argparse
import time
from pathlib import Path

from amser import harness


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="reports", help="directory for <app>.suite.json")
    ap.add_argument("--seeds", type=int, help="number of seeds (default: config)")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    cfg = harness.load_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = range(args.seeds) if args.seeds else None
    failed = False
    for app in harness.APPLICATIONS:
        t = time.perf_counter()
        pool = harness.train_pool(app, cfg)
        ctx = harness.make_context(app, cfg, pool, harness.load_calibration(app))
        suite = harness.run_suite(app, ctx, cfg, seeds=seeds, workers=args.workers)
        (out / f"{app}.suite.json").write_text(harness.dumps(suite))
        print(f"== {app} ({time.perf_counter() - t:.1f}s)")
        print(harness.format_table(suite))
        for problem in harness.check_suite(suite, cfg):
            print(f"MISMATCH: {problem}")
            failed = True
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
