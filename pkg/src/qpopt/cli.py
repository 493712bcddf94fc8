"""Command-line front end.

Subcommands: vqt, qmhl, meta-vqt, qvartz, fisher-efficiency, verify.
Exit codes: 0 success, 1 config error, 2 numerical abort or failed checks.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ConfigError,
    NumericalAbort,
    RunConfig,
    apply_overrides,
    load_config,
    parse_config,
    run_experiment,
)

_SUBCOMMANDS = {
    "vqt": "vqt",
    "qmhl": "qmhl",
    "meta-vqt": "meta_vqt",
    "qvartz": "qvartz",
    "fisher-efficiency": "fisher_efficiency",
    "verify": "verify",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpopt",
        description="Metric-aware variational optimization of quantum mixed states",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to a JSON run config")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--shots", type=int, help="samples per expectation (0 = exact)")
        p.add_argument("--optimizer", help="override the optimizer kind")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--trials", type=int, help="override the trial count")
    return parser


def _default_config(experiment: str) -> RunConfig:
    doc = {
        "schema": 1,
        "experiment": experiment,
        "seed": 0,
        "output_dir": f"runs/{experiment}",
    }
    if experiment == "fisher_efficiency":
        doc["fisher"] = {"mu_star": 0.6, "steps": 200}
        doc["trials"] = 1000
    return parse_config(doc)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    experiment = _SUBCOMMANDS[args.command]

    if experiment == "verify":
        from .verify import format_table, run_verify

        results = run_verify(seed=args.seed if args.seed is not None else 20240)
        print(format_table(results))
        return 0 if all(r.ok for r in results) else 2

    try:
        if args.config:
            cfg = load_config(args.config)
            if cfg.experiment != experiment:
                raise ConfigError(
                    f"config field 'experiment' is {cfg.experiment!r}, expected {experiment!r}"
                )
        elif experiment == "fisher_efficiency":
            cfg = _default_config(experiment)
        else:
            raise ConfigError(f"subcommand {args.command!r} requires --config")
        cfg = apply_overrides(
            cfg,
            seed=args.seed,
            shots=args.shots,
            optimizer=args.optimizer,
            out=args.out,
            trials=args.trials,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        summary = run_experiment(cfg)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
