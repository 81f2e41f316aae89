"""Command-line entry points: run experiments, build reports, self-test."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigurationError, ProtocolError
from .harness import ExperimentConfig, compare_report, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safeact")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a batch of seeded episodes")
    run.add_argument("--config", type=Path, help="JSON config file (flags override its fields)")
    run.add_argument("--policy", help="scripted | random | adversarial | remote:HOST:PORT")
    run.add_argument("--safety", choices=["on", "off"])
    run.add_argument("--episodes", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--log-trajectories", action="store_true", default=None)

    report = sub.add_parser("report", help="merge summary.json files into a long-format CSV")
    report.add_argument("--in", dest="inputs", nargs="+", required=True, type=Path)
    report.add_argument("--out", type=Path, required=True)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
    for key in ("policy", "safety", "episodes", "seed"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.log_trajectories is not None:
        data["log_trajectories"] = args.log_trajectories
    return ExperimentConfig.from_dict(data)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    summary = run_experiment(cfg, args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    summaries = []
    for path in args.inputs:
        try:
            with open(path) as fh:
                summaries.append(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read summary {path}: {exc}") from exc
    csv_text = compare_report(summaries)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(csv_text)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_selftest() -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_RUNTIME


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "selftest":
            return _cmd_selftest()
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
