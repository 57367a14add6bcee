"""
Evaluation metrics over a run's per-round accuracies, and result emission.
"""
import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .config import CONVERGENCE_WINDOW, CSV_COLUMNS, OSCILLATION_THRESHOLD
from .errors import ContractViolation, FedQSError
from .models import RoundRecord, Summary, Trace

logger = logging.getLogger(__name__)


def _check_target(target: float) -> None:
    if not 0 < target <= 1:
        raise ContractViolation(f"target accuracy must lie in (0, 1], got {target}")


def conv_speed(accs: Sequence[float], target: float) -> Optional[int]:
    """T_f: first 1-based round whose accuracy reaches target, or None."""
    _check_target(target)
    for i, acc in enumerate(accs, start=1):
        if acc >= target:
            return i
    return None


def stability_T_s(accs: Sequence[float], target: float) -> Optional[int]:
    """T_s: first 1-based round from which accuracy never drops below target again."""
    _check_target(target)
    if not accs or accs[-1] < target:
        return None
    t_s = len(accs)
    for i in range(len(accs) - 1, -1, -1):
        if accs[i] < target:
            break
        t_s = i + 1
    return t_s


def oscillations(accs: Sequence[float], threshold: float = OSCILLATION_THRESHOLD) -> int:
    """Rounds whose accuracy fell more than threshold below the previous round's."""
    if threshold <= 0:
        raise ContractViolation(f"oscillation threshold must be positive, got {threshold}")
    return sum(1 for prev, cur in zip(accs, accs[1:]) if prev - cur > threshold)


def summarize(
    trace: Trace,
    target_fraction: float,
    threshold: float = OSCILLATION_THRESHOLD,
) -> Summary:
    """
    Convergence accuracy is the mean of the last 20 rounds (all rounds if fewer);
    the convergence target is target_fraction times that. Oscillations are
    counted on the percentage scale.
    """
    if not trace.records:
        raise ContractViolation("cannot summarize an empty trace")
    if not 0 < target_fraction <= 1:
        raise ContractViolation(f"target_fraction must lie in (0, 1], got {target_fraction}")
    accs = trace.accuracies
    convergence_acc = float(np.mean(accs[-CONVERGENCE_WINDOW:]))
    target = target_fraction * convergence_acc
    defined = target > 0
    last = trace.records[-1]
    return Summary(
        best_acc=float(max(accs)),
        convergence_acc=convergence_acc,
        target_acc=target,
        T_f=conv_speed(accs, target) if defined else None,
        T_s=stability_T_s(accs, target) if defined else None,
        oscillations=oscillations([100.0 * a for a in accs], threshold),
        final_vtime=last.vtime,
        final_loss=last.test_loss,
        mean_staleness=float(np.mean([r.mean_staleness for r in trace.records])),
    )


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summary_dict(summary: Summary) -> dict:
    out = asdict(summary)
    out["stability"] = summary.stability
    return out


def emit(
    trace: Trace,
    summary: Summary,
    csv_path: Union[str, Path],
    json_path: Union[str, Path],
) -> None:
    """Per-round CSV (fixed column order, shortest round-trip floats) and a JSON summary."""
    csv_path, json_path = Path(csv_path), Path(json_path)
    try:
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in trace.records:
                writer.writerow([_fmt(getattr(r, col)) for col in CSV_COLUMNS])
    except OSError as exc:
        raise FedQSError(f"cannot write {csv_path}: {exc}") from exc
    try:
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(summary_dict(summary), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise FedQSError(f"cannot write {json_path}: {exc}") from exc
    logger.debug("wrote %s and %s", csv_path, json_path)


def load_records(csv_path: Union[str, Path]) -> List[RoundRecord]:
    """Read back a CSV written by emit."""
    with open(csv_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise FedQSError(f"{csv_path}: unexpected columns {reader.fieldnames}")
        return [
            RoundRecord(
                round=int(row["round"]),
                vtime=float(row["vtime"]),
                test_acc=float(row["test_acc"]),
                test_loss=float(row["test_loss"]),
                mean_staleness=float(row["mean_staleness"]),
                num_feedback=int(row["num_feedback"]),
                f_bar=float(row["f_bar"]),
                s_bar=float(row["s_bar"]),
            )
            for row in reader
        ]


def load_summary(json_path: Union[str, Path]) -> Summary:
    with open(json_path, encoding="utf-8") as f:
        data = json.load(f)
    data.pop("stability", None)
    return Summary(**data)
