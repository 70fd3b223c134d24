"""``amser`` command line: train pools, run scenarios and suites, fit calibration."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, models

log = logging.getLogger("amser")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--app", choices=harness.APPLICATIONS, required=True)
    p.add_argument("--config", help="config.json (default: $AMSER_CONFIG_DIR or shipped)")


def _run_opts(p: argparse.ArgumentParser):
    p.add_argument("--seeds", type=int, help="number of seeds, 0..N-1")
    p.add_argument("--windows", type=int, help="windows per seed")
    p.add_argument("--pool", help="pool file from `amser train` (default: train in-process)")
    p.add_argument("--calibration", help="calibration.json")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--check", action="store_true",
                   help="exit nonzero when decisions differ from the expected table")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amser", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model pool")
    _common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run one scenario")
    _common(p)
    p.add_argument("--scenario", required=True, help="S1..S4 or a scenario JSON file")
    _run_opts(p)

    p = sub.add_parser("suite", help="run S1-S4 and print the comparison table")
    _common(p)
    _run_opts(p)

    p = sub.add_parser("fit-calibration", help="fit cost coefficients to the gain targets")
    p.add_argument("--config")
    p.add_argument("--out", help="output path (default: calibration.json in the config dir)")
    return ap


def _pool(args, cfg) -> tuple[models.ModelPool, str]:
    if args.pool:
        if not Path(args.pool).exists():
            raise harness.SetupError(f"pool {args.pool} not found; create it with "
                                     f"`amser train --app {args.app} --out {args.pool}`")
        pool = models.ModelPool.load(args.pool)
        if pool.application != args.app:
            raise harness.SetupError(f"pool {args.pool} was trained for {pool.application}")
    else:
        log.info("no --pool given; training the %s pool in-process", args.app)
        pool = harness.train_pool(args.app, cfg)
    return pool, pool.to_json()["content_hash"][:16]


def _setup(args):
    cfg = harness.load_config(args.config)
    pool, pool_hash = _pool(args, cfg)
    cal_path = Path(args.calibration or harness.resource_path("calibration.json"))
    ctx = harness.make_context(args.app, cfg, pool, harness.load_calibration(args.app, cal_path))
    meta = {
        "config_hash": harness.json_hash(cfg),
        "catalog_hash": harness.json_hash(ctx.catalog.to_json()),
        "calibration_hash": harness.file_hash(cal_path),
        "pool_hash": pool_hash,
    }
    seeds = range(args.seeds) if args.seeds is not None else None
    return cfg, ctx, meta, seeds


def _write(path, report):
    if path:
        Path(path).write_text(harness.dumps(report))


def cmd_train(args) -> int:
    cfg = harness.load_config(args.config)
    pool = harness.train_pool(args.app, cfg)
    digest = pool.save(args.out)
    print(f"{args.app}: {len(pool)} models -> {args.out} (sha256 {digest[:16]})")
    return 0


def cmd_run(args) -> int:
    cfg, ctx, meta, seeds = _setup(args)
    spec = harness.load_scenario(args.app, args.scenario, cfg, args.windows, seeds)
    report = harness.run_scenario(spec, ctx, args.workers, meta)
    _write(args.report, report)
    agg = report["aggregate"]
    print(f"{args.app} {spec.name}: volume {agg['feature_volume_pct']:.1f}%  "
          f"accuracy amser {agg['accuracy']['amser_mean']:.3f} "
          f"baseline {agg['accuracy']['baseline_mean']:.3f} "
          f"(p={agg['accuracy']['paired_p_value']:.3g})")
    print("gains: " + "  ".join(f"{k} {v:.3f}" for k, v in agg["gains_vs_baseline"].items()))
    if args.check and spec.name in cfg["expected"].get(args.app, {}):
        flags = harness.decision_flags(report)
        exp = cfg["expected"][args.app][spec.name]["labels"]
        want = {m: l != "Noisy" for m, l in exp.items()}
        if flags != want:
            print(f"MISMATCH: kept {flags}, expected {want}", file=sys.stderr)
            return 1
    return 0


def cmd_suite(args) -> int:
    cfg, ctx, meta, seeds = _setup(args)
    suite = harness.run_suite(args.app, ctx, cfg, args.windows, seeds, args.workers, meta)
    _write(args.report, suite)
    print(harness.format_table(suite))
    if args.check:
        problems = harness.check_suite(suite, cfg)
        for p in problems:
            print(f"MISMATCH: {p}", file=sys.stderr)
        return 1 if problems else 0
    return 0


def cmd_fit(args) -> int:
    cfg = harness.load_config(args.config)
    fits = harness.fit_calibrations(cfg)
    out = Path(args.out) if args.out else harness.resource_path("calibration.json")
    out.write_text(json.dumps(fits, sort_keys=True, indent=1) + "\n")
    for app in harness.APPLICATIONS:
        print(f"{app}: max relative error {fits[app]['max_rel_error']:.4f}")
    print(f"wrote {out}")
    return 0


COMMANDS = {"train": cmd_train, "run": cmd_run, "suite": cmd_suite, "fit-calibration": cmd_fit}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (harness.SetupError, models.ModelUnavailableError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
