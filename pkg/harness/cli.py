"""
Command-line front door.

    fedqs run        one experiment (all repeats)
    fedqs motivation {sync, safl} x {iid, non-iid} gradient/model gap grid
    fedqs compare    FedQS-SGD, FedSGD, FedQS-Avg, FedAvg side by side
    fedqs sweep      one key over a list of values
    fedqs bounds     convergence constants over a hyperparameter grid

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from core.bounds import bounds_table
from core.config import DEFAULT_GRAD_CLIP
from core.errors import ConfigError, ContractViolation
from core.models import Aggregation, BoundParams, Strategy

from .runner import (
    COMPARISON_STRATEGIES, preset_comparison, preset_motivation, preset_sweep,
    probe_heterogeneity, run_experiment, write_table,
)
from .settings import ExperimentConfig, format_value, load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment file (key = value lines)")
    parser.add_argument("--profile", help="base defaults: full or desk")
    parser.add_argument("--seed", help="base seed; repeat r uses seed + r")
    parser.add_argument("--strategy", help="fedqs-sgd, fedqs-avg, fedsgd or fedavg")
    parser.add_argument("--mode", help="safl or sync")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--repeats", help="number of repeats")
    parser.add_argument("--run-id", dest="run_id", help="name of the run directory")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any config key; may be given several times",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedqs", description="Semi-asynchronous FL simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="run one experiment"))
    _common(sub.add_parser("motivation", help="gradient vs model aggregation gap grid"))

    compare = sub.add_parser("compare", help="compare strategies in SAFL mode")
    _common(compare)
    compare.add_argument("--strategies", help="comma separated subset of strategies")

    sweep = sub.add_parser("sweep", help="sweep one key over values")
    _common(sweep)
    sweep.add_argument("--key", required=True, help="config key to vary")
    sweep.add_argument("--values", required=True, help="comma separated values")
    sweep.add_argument("--strategies", default="fedqs-sgd,fedqs-avg", help="comma separated strategies")

    bounds = sub.add_parser("bounds", help="convergence constants over a grid")
    _common(bounds)
    bounds.add_argument("--thetas", default="0.5,0.9")
    bounds.add_argument("--epochs", default="1,2")
    bounds.add_argument("--ks", default="4,10")
    bounds.add_argument("--betas", default="", help="fixed betas; default is each range's midpoint")
    bounds.add_argument("--aggregation", default="sgd,avg", help="sgd, avg or both")
    bounds.add_argument("--L", dest="L", type=float, default=1.0)
    bounds.add_argument("--delta", type=float, default=1.0)
    bounds.add_argument("--grad-clip", dest="grad_clip", type=float, default=DEFAULT_GRAD_CLIP)
    bounds.add_argument("--p", type=float, default=0.5)
    bounds.add_argument("--q", type=float, default=0.0)
    bounds.add_argument("--q-t", dest="q_t", type=int, default=0)
    bounds.add_argument("--init-gap", dest="init_gap", type=float, default=1.0)
    bounds.add_argument("--t-max", dest="t_max", type=int, default=100)
    bounds.add_argument(
        "--estimate-delta", action="store_true",
        help="replace --delta by the gradient dissimilarity measured on the configured data",
    )
    return parser


def _split(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_list(text: str, kind, flag: str) -> list:
    try:
        return [kind(t) for t in _split(text)]
    except ValueError:
        raise ConfigError(f"cannot parse '{text}'", key=flag) from None


def _strategies(text: Optional[str], default: Sequence[Strategy]) -> List[Strategy]:
    if not text:
        return list(default)
    try:
        return [Strategy(t) for t in _split(text)]
    except ValueError:
        raise ConfigError(f"unknown strategy in '{text}'", key="strategies") from None


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    """Named flags plus --set pairs; --set wins when both name a key."""
    out = {}
    for flag, key in (("seed", "seed"), ("strategy", "strategy"), ("mode", "mode"),
                      ("out", "out_dir"), ("repeats", "repeats"), ("run_id", "run_id")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected KEY=VALUE, got '{item}'", key="--set")
        out[key.strip()] = value
    return out


def _print_rows(rows: Sequence[Dict[str, object]]) -> None:
    if not rows:
        return
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else format_value(v) for k, v in row.items()})


def _run(cfg: ExperimentConfig) -> None:
    result = run_experiment(cfg)
    print(f"run {result.run_id}: {len(result.repeats)} repeat(s) in {result.directory}")
    for metric in ("convergence_acc", "best_acc", "T_f", "T_s", "oscillations", "final_vtime"):
        stats = result.aggregate[metric]
        print(f"  {metric}: mean={stats['mean']} stdev={stats['stdev']} n={stats['count']}")


def _bounds(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    try:
        aggregations = [Aggregation(a) for a in _split(args.aggregation.replace("both", "sgd,avg"))]
    except ValueError:
        raise ConfigError(f"expected sgd, avg or both, got '{args.aggregation}'", key="--aggregation") from None
    delta = probe_heterogeneity(cfg) if args.estimate_delta else args.delta
    if args.estimate_delta:
        logger.info("estimated delta = %.6g", delta)
    try:
        base = BoundParams(
            L=args.L, delta=delta, G_c=args.grad_clip, N=cfg.num_clients, p=args.p, q=args.q,
            Q_t=args.q_t, init_gap=args.init_gap,
        )
        rows = bounds_table(
            _parse_list(args.thetas, float, "--thetas"),
            _parse_list(args.epochs, int, "--epochs"),
            _parse_list(args.ks, int, "--ks"),
            base,
            strategies=aggregations,
            betas=_parse_list(args.betas, float, "--betas"),
            t_max=args.t_max,
        )
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from exc
    _print_rows(rows)
    if args.out:
        write_table(rows, Path(cfg.out_dir) / cfg.run_id / "bounds.csv")


def dispatch(args: argparse.Namespace) -> None:
    cfg = load_config(args.config, _overrides(args), args.profile)
    if args.command == "run":
        _run(cfg)
    elif args.command == "motivation":
        _print_rows(preset_motivation(cfg))
    elif args.command == "compare":
        _print_rows(preset_comparison(cfg, _strategies(args.strategies, COMPARISON_STRATEGIES)))
    elif args.command == "sweep":
        _print_rows(preset_sweep(cfg, args.key, _split(args.values), _strategies(args.strategies, ())))
    elif args.command == "bounds":
        _bounds(cfg, args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logger.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
