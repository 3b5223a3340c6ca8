"""Command-line front end (``abfold``).

Exit codes: 0 on success, 1 when a target score was set and missed,
2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

from . import benchmark as bm
from . import formats
from .model import (AbSequence, SequenceError, compute_positions,
                    energy_auxiliary, kd_transform, parse_ab_sequence)
from .optimizer import OptimizerConfig, StoppingCondition, run

EXIT_OK = 0
EXIT_MISS = 1
EXIT_USAGE = 2

DEFAULT_NSE_LIMIT = 10_000_000

# flag dest -> OptimizerConfig field
_CONFIG_FLAGS = {"np": "np", "pb": "p_b", "lb": "l_b", "c": "c", "hc": "h_c",
                 "lambda_": "lambda_", "seed": "seed"}
_STOP_FIELDS = ("target_score", "nse_limit", "time_limit")


class UsageError(Exception):
    pass


def _add_sequence_flags(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--seq", help="A/B string")
    g.add_argument("--seq-file", type=Path, help="file holding an A/B string")
    g.add_argument("--label", help="built-in benchmark label, e.g. F13")


def _add_optimizer_flags(p):
    p.add_argument("--target", type=float, help="target score (higher is better)")
    p.add_argument("--nse-limit", type=int,
                   help=f"evaluation budget (default {DEFAULT_NSE_LIMIT} "
                        "when no time limit is given)")
    p.add_argument("--time-limit", type=float, help="wall-clock limit in seconds")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--np", type=int, help="population size (default 100)")
    p.add_argument("--pb", type=float, help="component reinit factor (default 20)")
    p.add_argument("--lb", type=float, help="random reinit factor (default 20)")
    p.add_argument("--c", type=int, help="components reset per reinit (default 10)")
    p.add_argument("--hc", type=float, help="phase switch factor (default 35)")
    p.add_argument("--lambda", dest="lambda_", type=float,
                   help="phase-1 energy offset (default 1000)")
    p.add_argument("--config", type=Path,
                   help="JSON file with OptimizerConfig fields; flags win")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", type=Path, help="results file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abfold",
        description="AB off-lattice protein folding with two-phase "
                    "differential evolution.",
        epilog="exit codes: 0 success, 1 target missed, 2 usage or input error")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="energy of a conformation file")
    _add_sequence_flags(p)
    p.add_argument("--conf", type=Path, required=True)
    p.add_argument("--lambda", dest="lambda_", type=float, default=1000.0)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("optimize", help="one seeded optimization run")
    _add_sequence_flags(p)
    _add_optimizer_flags(p)
    p.add_argument("--trace", type=Path, help="write the improvement trace CSV")
    p.add_argument("--conf-out", type=Path,
                   help="write the best conformation (degrees)")
    p.add_argument("--xyz", type=Path, help="write the best chain as XYZ")
    p.add_argument("--timing", action="store_true",
                   help="include wall-clock times in the results")

    p = sub.add_parser("benchmark", help="batch of independent runs")
    _add_sequence_flags(p)
    _add_optimizer_flags(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--seeds", help="comma-separated explicit seeds, one per run")
    p.add_argument("--timing", action="store_true",
                   help="fill the time_s column (makes output nondeterministic)")

    p = sub.add_parser("convert", help="one-letter amino acids to A/B")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--seq", help="amino-acid string")
    g.add_argument("--seq-file", type=Path)

    p = sub.add_parser("export", help="conformation file to XYZ")
    _add_sequence_flags(p)
    p.add_argument("--conf", type=Path, required=True)
    p.add_argument("--xyz", type=Path, help="output path (default stdout)")
    return parser


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _resolve_sequence(args):
    """Return (sequence, benchmark entry or None)."""
    if args.label is not None:
        try:
            entry = bm.get_benchmark(args.label)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        return entry.sequence, entry
    text = args.seq if args.seq is not None else _read(args.seq_file)
    return parse_ab_sequence(text), None


def _load_config_file(path: Path) -> dict:
    try:
        data = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    if "lambda" in data:
        data["lambda_"] = data.pop("lambda")
    stop = dict(data.pop("stopping", None) or {})
    for key in _STOP_FIELDS:
        if key in data:
            stop[key] = data.pop(key)
    known = {f.name for f in dataclasses.fields(OptimizerConfig)}
    unknown = sorted(set(data) - known) + sorted(set(stop) - set(_STOP_FIELDS))
    if unknown:
        raise UsageError(f"{path}: unknown config keys {', '.join(unknown)}")
    data["stopping"] = stop
    return data


def _build_config(args) -> OptimizerConfig:
    fields = _load_config_file(args.config) if args.config else {"stopping": {}}
    stop = fields.pop("stopping")
    for flag, name in _CONFIG_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            fields[name] = value
    for flag, name in (("target", "target_score"), ("nse_limit", "nse_limit"),
                       ("time_limit", "time_limit")):
        value = getattr(args, flag)
        if value is not None:
            stop[name] = value
    if stop.get("nse_limit") is None and stop.get("time_limit") is None:
        stop["nse_limit"] = DEFAULT_NSE_LIMIT
    try:
        return OptimizerConfig(stopping=StoppingCondition(**stop), **fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _emit(text: str, path: Optional[Path]):
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _load_conformation(args, seq):
    return formats.parse_conformation(_read(args.conf), seq)


def cmd_evaluate(args) -> int:
    seq, _ = _resolve_sequence(args)
    conf = _load_conformation(args, seq)
    e = energy_auxiliary(seq, conf, args.lambda_)
    if args.format == "json":
        doc = {"score": e.score, "e_o": e.e_o, "e_bb": e.e_bb,
               "e_lj": e.e_lj, "e_hc": e.e_hc, "e_x": e.e_x,
               "lambda": e.lambda_}
        print(json.dumps(doc, indent=2))
    else:
        print(f"score {e.score:.6f}")
        for name in ("e_o", "e_bb", "e_lj", "e_hc", "e_x"):
            print(f"{name} {getattr(e, name):.6f}")
    return EXIT_OK


def _label_for(seq: AbSequence, entry) -> str:
    return entry.label if entry is not None else (seq.label or "custom")


def cmd_optimize(args) -> int:
    seq, entry = _resolve_sequence(args)
    cfg = _build_config(args)
    try:
        cfg.check_dimension(seq.dimension)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run(seq, cfg)
    label = _label_for(seq, entry)
    record = bm.RunRecord.from_result(label, cfg.seed, result)
    if args.format == "json":
        _emit(formats.format_results_json([record], timing=args.timing), args.out)
    else:
        _emit(formats.format_results_csv([record], timing=args.timing), args.out)
    if args.trace is not None:
        with open(args.trace, "w", newline="") as fh:
            formats.write_trace(result.trace, fh)
    if args.conf_out is not None:
        args.conf_out.write_text(formats.format_conformation(result.best_conformation))
    if args.xyz is not None:
        chain = compute_positions(result.best_conformation)
        args.xyz.write_text(formats.export_xyz(seq, chain, label, result.best_score))
    if cfg.stopping.target_score is not None and not result.success:
        return EXIT_MISS
    return EXIT_OK


def _parse_seeds(text: str, n_runs: int) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds must be comma-separated integers: {text!r}") from None
    if len(seeds) != n_runs:
        raise UsageError(f"--seeds lists {len(seeds)} seeds but --runs is {n_runs}")
    return seeds


def cmd_benchmark(args) -> int:
    seq, entry = _resolve_sequence(args)
    cfg = _build_config(args)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    try:
        cfg.check_dimension(seq.dimension)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seeds = _parse_seeds(args.seeds, args.runs) if args.seeds else None
    if entry is None:
        entry = bm.BenchmarkEntry(_label_for(seq, None), seq)
    records = bm.run_batch(entry, cfg, args.runs, base_seed=cfg.seed,
                           max_parallel=args.jobs, seeds=seeds)
    stats = bm.aggregate(records)
    if args.format == "json":
        _emit(formats.format_results_json(records, stats, args.timing), args.out)
    else:
        _emit(formats.format_results_csv(records, args.timing), args.out)
        summary = formats.format_results_json([], stats, args.timing)
        if args.out is not None:
            args.out.with_suffix(".aggregate.json").write_text(summary)
        else:
            sys.stderr.write(summary)
    if cfg.stopping.target_score is not None and stats.n_success < stats.n_runs:
        return EXIT_MISS
    return EXIT_OK


def cmd_convert(args) -> int:
    text = args.seq if args.seq is not None else _read(args.seq_file)
    print(kd_transform(text))
    return EXIT_OK


def cmd_export(args) -> int:
    seq, entry = _resolve_sequence(args)
    conf = _load_conformation(args, seq)
    e = energy_auxiliary(seq, conf)
    text = formats.export_xyz(seq, compute_positions(conf),
                              _label_for(seq, entry), e.score)
    _emit(text, args.xyz)
    return EXIT_OK


_COMMANDS = {"evaluate": cmd_evaluate, "optimize": cmd_optimize,
             "benchmark": cmd_benchmark, "convert": cmd_convert,
             "export": cmd_export}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage and 0 for --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, SequenceError, formats.ConformationFormatError) as exc:
        parser.print_usage(sys.stderr)
        print(f"abfold: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
