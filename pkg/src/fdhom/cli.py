"""Command line entry point: ``fdhom <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, FdhomError
from .experiments import (
    GAMMA_COLUMNS,
    HOMOGENIZE_COLUMNS,
    STOCHASTIC_COLUMNS,
    gamma_rows,
    homogenize_rows,
    metadata,
    run_cell_solve,
    run_check,
    stochastic_rows,
    write_artifacts,
)
from .parallel import default_workers

OUT_ENV = "FDHOM_OUT_DIR"
SUBCOMMANDS = ("check", "cell-solve", "homogenize", "stochastic", "gamma")

EXIT_OK, EXIT_FAILED_CHECK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2, 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdhom", description="Cell formulas, stochastic processes and minima experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML experiment file")
        p.add_argument("--out", type=Path, default=None,
                       help=f"output directory (else ${OUT_ENV}, else the config's output)")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: machine parallelism)")
        p.add_argument("--seed-override", type=_u64, default=None, help="replace the config seed")
    return parser


def _out_dir(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(cfg.output)


def _dispatch(args) -> int:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg = cfg.model_copy(update={"seed": args.seed_override})
    workers = default_workers() if args.workers is None else max(1, args.workers)
    out = _out_dir(args, cfg)
    name = args.command.replace("-", "_")
    meta = metadata(cfg, args.command)
    if args.command == "check":
        text, ok, summary = run_check(cfg)
        sys.stdout.write(text)
        out.mkdir(parents=True, exist_ok=True)
        (out / "check.txt").write_text(text)
        (out / "check.json").write_text(
            json.dumps({"meta": meta, "summary": summary}, sort_keys=True, indent=2) + "\n")
        return EXIT_OK if ok else EXIT_FAILED_CHECK
    if args.command == "cell-solve":
        _, summary, field = run_cell_solve(cfg)
        paths = write_artifacts(out, name, meta, ("key", "value"),
                                [[k, str(v)] for k, v in sorted(summary.items())], summary)
        if cfg.cell_solve.write_field:
            path = out / "cell_solve_field.csv"
            with open(path, "w", newline="") as fh:
                for k, v in meta.items():
                    fh.write(f"# {k}: {v}\n")
                field.write_csv(fh)
            paths.append(path)
        print(f"value {summary['value']!r}")
    elif args.command == "homogenize":
        rows, summary = homogenize_rows(cfg, workers)
        paths = write_artifacts(out, name, meta, HOMOGENIZE_COLUMNS, rows, summary)
        for key, v in summary.items():
            flag = "  (spread above tolerance)" if v["flagged"] else ""
            print(f"{key}: limit {v['limit']:.6g} spread {v['spread']:.3g}{flag}")
    elif args.command == "stochastic":
        rows, summary = stochastic_rows(cfg, workers)
        paths = write_artifacts(out, name, meta, STOCHASTIC_COLUMNS, rows, summary)
        if "limit" in summary:
            print(f"limit {summary['limit']:.6g} spread {summary['spread']:.3g}")
        else:
            print(f"mean {summary['mean']:.6g} std {summary['std']:.3g}")
    else:
        rows, summary = gamma_rows(cfg)
        paths = write_artifacts(out, name, meta, GAMMA_COLUMNS, rows, summary)
        for r in rows:
            print(f"eps {r[0]:g}: inf {r[1]:.6g} hom {r[2]:.6g} gap {r[3]:.3%}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FdhomError as exc:
        print(f"{type(exc).__name__} during {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
