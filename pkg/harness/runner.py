"""
Run orchestration: data preparation, repeated runs, result persistence and the
motivation / comparison / sweep presets.

Output layout for one experiment:
    <out_dir>/<run_id>/config.txt
    <out_dir>/<run_id>/<r>/trace.csv, summary.json [, replay.bin]
    <out_dir>/<run_id>/aggregate.json
    <out_dir>/<run_id>/events.jsonl
"""
import csv
import dataclasses
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from core.bounds import estimate_heterogeneity
from core.codec import dump_replay
from core.config import (
    AGGREGATE_FILE, CONFIG_FILE, EVENTS_FILE, REPLAY_FILE, STREAM_DATA,
    STREAM_INIT, STREAM_PARTITION, STREAM_SPLIT, STREAM_TEST, SUMMARY_FILE, TRACE_FILE,
)
from core.datagen import (
    apply_plan, gen_synthetic, load_csv, load_csv_groups, partition_dirichlet,
    partition_iid, partition_lognormal, split_indices, split_train_val,
)
from core.engine import ClientData, model_spec_for, simulate
from core.errors import ConfigError, FedQSError
from core.metrics import emit, summarize, summary_dict
from core.models import LabeledDataset, Mode, PartitionPlan, Strategy, Summary, Trace
from core.numcore import init_params
from utils import analytics

from .settings import ExperimentConfig, coerce, dump_config, format_value, to_sim_config, validate

logger = logging.getLogger(__name__)

COMPARISON_STRATEGIES = (Strategy.FEDQS_SGD, Strategy.FEDSGD, Strategy.FEDQS_AVG, Strategy.FEDAVG)


@dataclass(frozen=True, eq=False)
class PreparedData:
    clients: List[ClientData]
    testset: LabeledDataset
    pool: LabeledDataset          # union of the client shards
    plan: PartitionPlan


@dataclass(frozen=True, eq=False)
class RepeatResult:
    index: int
    seed: int
    summary: Summary
    trace: Trace


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    run_id: str
    directory: Path
    repeats: List[RepeatResult]
    aggregate: Dict[str, Dict[str, Optional[float]]]

    def mean(self, metric: str) -> Optional[float]:
        return self.aggregate[metric]["mean"]


# ---- data ----

def _source(cfg: ExperimentConfig, seed: int):
    """(pool, testset, group ids of pool rows or None)."""
    if cfg.dataset == "synthetic":
        pool = gen_synthetic(cfg.synthetic_spec(), [seed, STREAM_DATA])
        test = gen_synthetic(cfg.test_spec(), [seed, STREAM_TEST])
        return pool, test, None
    full = load_csv(cfg.csv_path, cfg.feature_list(), cfg.label_column, cfg.categorical_map())
    groups = load_csv_groups(cfg.csv_path, cfg.group_column) if cfg.group_column else None
    pool_idx, test_idx = split_indices(len(full), 1.0 - cfg.test_fraction, [seed, STREAM_TEST])
    pool_groups = groups[pool_idx] if groups is not None else None
    return full.subset(pool_idx), full.subset(test_idx), pool_groups


def _partition(cfg: ExperimentConfig, pool: LabeledDataset, groups, seed: int) -> PartitionPlan:
    stream = [seed, STREAM_PARTITION]
    if cfg.partition == "iid":
        return partition_iid(pool, cfg.num_clients, stream)
    if cfg.partition == "dirichlet":
        return partition_dirichlet(pool, cfg.num_clients, cfg.dirichlet_x, stream)
    group_of = groups if groups is not None else pool.labels
    num_groups = int(np.max(group_of)) + 1
    per_group = cfg.clients_per_group or cfg.num_clients // num_groups
    if per_group < 1 or per_group * num_groups != cfg.num_clients:
        raise ConfigError(
            f"{num_groups} groups cannot be spread evenly over {cfg.num_clients} clients",
            key="clients_per_group",
        )
    return partition_lognormal(pool, group_of, cfg.lognormal_sigma, per_group, stream, num_groups)


def prepare_data(cfg: ExperimentConfig, seed: int) -> PreparedData:
    """
    Build the per-client train/validation sets and the held-out test set for one
    repeat. Depends only on the data and partition keys and the seed, so every
    strategy of a preset sees the same data.
    """
    pool, test, groups = _source(cfg, seed)
    plan = _partition(cfg, pool, groups, seed)
    clients = []
    for cid, shard in enumerate(apply_plan(pool, plan)):
        if len(shard) < 2:
            # too small to hold out anything; validate on the training sample
            clients.append(ClientData(shard, shard))
            continue
        train, val = split_train_val(shard, cfg.train_fraction, [seed, STREAM_SPLIT, cid])
        clients.append(ClientData(train, val))
    logger.debug("prepared %d clients, sizes %s, test %d", len(clients), plan.sizes, len(test))
    return PreparedData(clients=clients, testset=test, pool=pool, plan=plan)


# ---- runs ----

def run_repeat(cfg: ExperimentConfig, index: int, directory: Path) -> RepeatResult:
    seed = cfg.seed + index
    data = prepare_data(cfg, seed)
    trace = simulate(to_sim_config(cfg, seed), data.clients, data.testset)
    summary = summarize(trace, cfg.target_fraction)
    trace.summary = summary
    target = directory / str(index)
    target.mkdir(parents=True, exist_ok=True)
    emit(trace, summary, target / TRACE_FILE, target / SUMMARY_FILE)
    if cfg.dump_replay:
        dump_replay(trace, target / REPLAY_FILE)
    logger.info(
        "%s repeat %d (seed %d): acc=%.4f T_f=%s oscillations=%d",
        cfg.run_id, index, seed, summary.convergence_acc, summary.T_f, summary.oscillations,
    )
    return RepeatResult(index=index, seed=seed, summary=summary, trace=trace)


def aggregate_summaries(summaries: Sequence[Summary]) -> Dict[str, Dict[str, Optional[float]]]:
    """Per-metric mean and sample standard deviation over the defined values."""
    if not summaries:
        raise FedQSError("nothing to aggregate")
    rows = [summary_dict(s) for s in summaries]
    out = {}
    for metric in rows[0]:
        values = [float(r[metric]) for r in rows if r[metric] is not None]
        out[metric] = {
            "mean": float(np.mean(values)) if values else None,
            "stdev": float(np.std(values, ddof=1)) if len(values) > 1 else None,
            "count": len(values),
        }
    return out


def _write_json(path: Path, data) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise FedQSError(f"cannot write {path}: {exc}") from exc


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """
    Run every repeat (seed + r), persist each under its own directory, then write
    aggregate.json. A failing repeat aborts the experiment; finished repeats stay
    on disk.
    """
    cfg = validate(cfg)
    directory = Path(cfg.out_dir) / cfg.run_id
    directory.mkdir(parents=True, exist_ok=True)
    try:
        (directory / CONFIG_FILE).write_text(dump_config(cfg), encoding="utf-8")
    except OSError as exc:
        raise FedQSError(f"cannot write {directory / CONFIG_FILE}: {exc}") from exc
    events = directory / EVENTS_FILE
    analytics.log_event(
        events, "run_started", run_id=cfg.run_id, strategy=cfg.strategy.value,
        mode=cfg.mode.value, repeats=cfg.repeats, seed=cfg.seed,
    )

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(run_repeat, cfg, r, directory) for r in range(cfg.repeats)]
        results = []
        for r, future in enumerate(futures):
            try:
                result = future.result()
            except Exception as exc:
                analytics.log_event(events, "repeat_failed", run_id=cfg.run_id, repeat=r, error=str(exc))
                raise
            results.append(result)
            analytics.log_event(
                events, "repeat_done", run_id=cfg.run_id, repeat=r, seed=result.seed,
                accuracy=result.summary.convergence_acc, T_f=result.summary.T_f,
            )

    aggregate = aggregate_summaries([r.summary for r in results])
    _write_json(directory / AGGREGATE_FILE, aggregate)
    analytics.log_event(events, "run_finished", run_id=cfg.run_id, accuracy=aggregate["convergence_acc"]["mean"])
    return ExperimentResult(run_id=cfg.run_id, directory=directory, repeats=results, aggregate=aggregate)


# ---- presets ----

def _safe(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", text)


def _variant(base: ExperimentConfig, name: str, **changes) -> ExperimentConfig:
    """A child experiment stored under <out_dir>/<base run_id>/<name>."""
    return validate(dataclasses.replace(
        base, out_dir=str(Path(base.out_dir) / base.run_id), run_id=_safe(name), **changes,
    ))


def write_table(rows: Sequence[Dict[str, object]], path: Union[str, Path]) -> None:
    """CSV with the first row's keys as header; None becomes an empty cell."""
    if not rows:
        raise FedQSError(f"no rows to write to {path}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: "" if v is None else format_value(v) for k, v in row.items()})
    except OSError as exc:
        raise FedQSError(f"cannot write {path}: {exc}") from exc


def _finish_preset(base: ExperimentConfig, name: str, rows: List[Dict[str, object]]) -> List[Dict[str, object]]:
    directory = Path(base.out_dir) / base.run_id
    write_table(rows, directory / f"{name}.csv")
    analytics.log_event(directory / EVENTS_FILE, "preset_finished", preset=name, rows=len(rows))
    logger.info("preset %s: %d rows written to %s", name, len(rows), directory)
    return rows


def preset_motivation(base: ExperimentConfig) -> List[Dict[str, object]]:
    """
    {sync, safl} x {iid, non-iid}, each under gradient and model aggregation.
    One row per cell with the |gradient - model| accuracy gap.
    """
    rows = []
    for partition, label in (("iid", "iid"), ("dirichlet", "non-iid")):
        for mode in (Mode.SYNC, Mode.SAFL):
            results = {}
            for strategy in (Strategy.FEDSGD, Strategy.FEDAVG):
                cfg = _variant(
                    base, f"motivation-{mode.value}-{label}-{strategy.value}",
                    mode=mode, strategy=strategy, partition=partition, dirichlet_x=base.dirichlet_x,
                )
                results[strategy] = run_experiment(cfg)
            sgd_acc = results[Strategy.FEDSGD].mean("convergence_acc")
            avg_acc = results[Strategy.FEDAVG].mean("convergence_acc")
            rows.append({
                "partition": label,
                "mode": mode.value,
                "gradient_acc": sgd_acc,
                "model_acc": avg_acc,
                "gap": abs(sgd_acc - avg_acc),
                "mean_staleness": max(r.mean("mean_staleness") for r in results.values()),
            })
    return _finish_preset(base, "motivation", rows)


def _strategy_row(strategy: Strategy, result: ExperimentResult) -> Dict[str, object]:
    return {
        "strategy": strategy.value,
        "accuracy": result.mean("convergence_acc"),
        "best_acc": result.mean("best_acc"),
        "T_f": result.mean("T_f"),
        "oscillations": result.mean("oscillations"),
        "stability": result.mean("stability"),
        "final_vtime": result.mean("final_vtime"),
    }


def preset_comparison(
    base: ExperimentConfig,
    strategies: Sequence[Strategy] = COMPARISON_STRATEGIES,
) -> List[Dict[str, object]]:
    """Every strategy in SAFL mode on the same data, speeds and seeds."""
    rows = []
    for strategy in strategies:
        cfg = _variant(base, f"compare-{strategy.value}", mode=Mode.SAFL, strategy=strategy)
        rows.append(_strategy_row(strategy, run_experiment(cfg)))
    return _finish_preset(base, "comparison", rows)


def preset_sweep(
    base: ExperimentConfig,
    key: str,
    values: Sequence[str],
    strategies: Sequence[Strategy] = (Strategy.FEDQS_SGD, Strategy.FEDQS_AVG),
) -> List[Dict[str, object]]:
    """One SAFL experiment per (value, strategy) with key set to value."""
    if not values:
        raise ConfigError("sweep needs at least one value", key=key)
    if key in ("strategy", "mode", "run_id", "out_dir", "profile"):
        raise ConfigError("cannot be swept", key=key)
    rows = []
    for text in values:
        value = coerce(key, text)
        for strategy in strategies:
            name = f"sweep-{key}-{format_value(value)}-{strategy.value}"
            cfg = _variant(base, name, mode=Mode.SAFL, strategy=strategy, **{key: value})
            row = {key: value}
            row.update(_strategy_row(strategy, run_experiment(cfg)))
            rows.append(row)
    return _finish_preset(base, f"sweep-{_safe(key)}", rows)


def probe_heterogeneity(cfg: ExperimentConfig) -> float:
    """Empirical gradient dissimilarity of the first repeat's clients at the initial model."""
    cfg = validate(cfg)
    data = prepare_data(cfg, cfg.seed)
    spec = model_spec_for(to_sim_config(cfg, cfg.seed), data.testset)
    params = init_params(spec, [cfg.seed, STREAM_INIT])
    return estimate_heterogeneity(spec, params, [c.train for c in data.clients], data.pool)
