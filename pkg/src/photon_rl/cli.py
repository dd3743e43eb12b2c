"""Command-line entry point: ``photon-rl run | verify | sweep``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from photon_rl import kernel
from photon_rl.agents import ConfigError
from photon_rl.harness import AgentFailure, ExperimentConfig, run_experiment

log = logging.getLogger("photon_rl")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config)
    for key, value in (("seed", args.seed), ("agents", args.agents), ("trials", args.trials), ("parallel", args.parallel)):
        if value is not None:
            cfg = cfg.with_value(f"experiment.{key}", value)
    return cfg.scaled(args.full_scale)


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.out)
    log.info("running %s: %d agents x %d trials (backend %s)", cfg.kind, cfg.agents, cfg.trials, kernel.BACKEND)
    result = run_experiment(cfg, out)
    for key, value in result.summary.items():
        print(f"{key}: {value}")
    print(f"wrote {out / 'result.csv'} and {out / 'result.json'} in {result.wall_clock:.1f}s")
    return 0


def cmd_verify(args) -> int:
    from photon_rl.verify import run_suite

    results = run_suite(echo=print)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_sweep(args) -> int:
    base = _load(args)
    root = Path(args.out or base.out)
    rows = []
    for text in args.values.split(","):
        value = _scalar(text.strip())
        cfg = base.with_value(args.param, value)
        out = root / f"{args.param}={text.strip()}"
        result = run_experiment(cfg, out)
        row = {args.param: value}
        row.update({k: v for k, v in result.summary.items() if isinstance(v, (int, float)) or v is None})
        rows.append(row)
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {root / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photon-rl", description="Photonic beamsplitter-tree reinforcement learning simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="experiment TOML file")
        p.add_argument("--out", help="output directory (default: [experiment] out)")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--agents", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--parallel", type=int, help="worker threads; 0 = one per CPU")
        p.add_argument("--full-scale", action="store_true", help="use the large reference population sizes")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="run the equivalence and property checks")
    verify.set_defaults(func=cmd_verify)

    sweep = sub.add_parser("sweep", help="run an experiment once per parameter value")
    sweep.add_argument("--param", required=True, help="section.key, e.g. noise.sigma")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    common(sweep)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AgentFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
