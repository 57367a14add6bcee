"""
Run-event log: one JSON object per line in <out_dir>/<run_id>/events.jsonl.

Diagnostics only. Writing an event never raises, and the timestamps make the
file differ between otherwise identical runs.
"""
import json
import threading
from datetime import datetime
from pathlib import Path
from typing import Union

_lock = threading.Lock()

KNOWN_EVENTS = ("run_started", "repeat_done", "repeat_failed", "run_finished", "preset_finished")


def log_event(path: Union[str, Path], event: str, **fields) -> None:
    """
    Append one event.

    Args:
        path: events file; parent directories are created
        event: event name (e.g. "repeat_done")
        fields: JSON-serializable details
    """
    try:
        path = Path(path)
        record = {"ts": datetime.now().isoformat(timespec="seconds"), "event": event}
        record.update(fields)
        line = json.dumps(record, sort_keys=True, default=str)
        with _lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
    except Exception:
        pass  # never fail a run because of the event log


def read_events(path: Union[str, Path]) -> list:
    path = Path(path)
    if not path.exists():
        return []
    events = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                events.append(json.loads(line))
    return events


def get_summary(path: Union[str, Path]) -> dict:
    """
    Summarize an event log.

    Returns dict with:
    - total_events, event_counts
    - repeats_done, failed_repeats
    - mean_accuracy over repeat_done events that carry one
    - insights: short human-readable notes
    """
    try:
        events = read_events(path)
    except (OSError, ValueError) as e:
        return {"error": str(e)}
    if not events:
        return {"error": "No events recorded"}

    counts = {}
    for e in events:
        name = e.get("event", "unknown")
        counts[name] = counts.get(name, 0) + 1
    done = [e for e in events if e.get("event") == "repeat_done"]
    accs = [e["accuracy"] for e in done if isinstance(e.get("accuracy"), (int, float))]
    started = counts.get("run_started", 0)
    finished = counts.get("run_finished", 0)

    insights = []
    if started > finished:
        insights.append(f"{started - finished} run(s) started without finishing; check for errors.")
    unconverged = sum(1 for e in done if e.get("T_f") is None)
    if unconverged:
        insights.append(f"{unconverged} repeat(s) never reached the convergence target.")
    unknown = sorted(set(counts) - set(KNOWN_EVENTS))
    if unknown:
        insights.append(f"Unrecognized events: {', '.join(unknown)}.")
    if not insights:
        insights.append("No problems recorded.")

    return {
        "total_events": len(events),
        "event_counts": counts,
        "repeats_done": len(done),
        "failed_repeats": counts.get("repeat_failed", 0),
        "mean_accuracy": round(sum(accs) / len(accs), 4) if accs else None,
        "insights": insights,
    }


def clear_events(path: Union[str, Path]) -> str:
    path = Path(path)
    if path.exists():
        path.unlink()
    return "Events cleared."
