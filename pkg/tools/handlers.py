"""
MCP tool definitions for the FedQS simulator.

Every tool returns a plain-text block that starts with a STATUS line. Failures
come back as "STATUS: ERROR" with a Reason line; tools never raise.

Run events are appended to <out_dir>/<run_id>/events.jsonl and can be read back
with run_history.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from mcp.server.fastmcp import FastMCP

from core.bounds import bounds_table
from core.config import AGGREGATE_FILE, EVENTS_FILE
from core.errors import ConfigError, FedQSError
from core.models import Aggregation, BoundParams, Strategy
from harness.runner import (
    COMPARISON_STRATEGIES, preset_comparison, preset_motivation, preset_sweep, run_experiment,
)
from harness.settings import ExperimentConfig, dump_config, format_value, load_config, profile_defaults
from utils import analytics

logger = logging.getLogger(__name__)

# Metrics shown for a single experiment
REPORTED_METRICS = ("convergence_acc", "best_acc", "T_f", "T_s", "stability", "oscillations", "final_vtime")


def _error(reason: str, action: Optional[str] = None, **context) -> str:
    lines = ["STATUS: ERROR"]
    lines.extend(f"{key.replace('_', ' ').capitalize()}: {value}" for key, value in context.items())
    lines.append(f"Reason: {reason}")
    if action:
        lines.append(f"Action: {action}")
    return "\n".join(lines)


def _config(config_path: Optional[str], overrides: Optional[Dict[str, str]], profile: Optional[str]) -> ExperimentConfig:
    return load_config(config_path or None, {k: str(v) for k, v in (overrides or {}).items()}, profile or None)


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return format_value(value)


def _table(rows: Sequence[Dict[str, object]]) -> List[str]:
    if not rows:
        return ["(no rows)"]
    header = list(rows[0])
    lines = [" | ".join(header)]
    lines.extend(" | ".join(_fmt(row[k]) for k in header) for row in rows)
    return lines


def _strategies(names: Optional[Sequence[str]], default: Sequence[Strategy]) -> List[Strategy]:
    if not names:
        return list(default)
    try:
        return [Strategy(str(s)) for s in names]
    except ValueError:
        raise ConfigError(f"unknown strategy in {list(names)}", key="strategies") from None


def _guarded(tool: str, action, **context) -> str:
    """Run action(); map harness errors onto STATUS: ERROR text."""
    try:
        return action()
    except ConfigError as e:
        return _error(str(e), "Fix the named key; see dump of defaults with describe_config.", **context)
    except FedQSError as e:
        return _error(str(e), **context)
    except Exception as e:
        logger.exception("%s failed", tool)
        return _error(f"unexpected {type(e).__name__}: {e}", **context)


def register_tools(mcp: FastMCP):
    """Register all MCP tools with the server."""

    # ==================== TOOL 1: run_simulation ====================
    @mcp.tool()
    def run_simulation(
        config_path: str = None,
        overrides: dict = None,
        profile: str = None,
    ) -> str:
        """
        Run one experiment: every repeat, CSV + JSON per repeat, aggregate.json.

        Args:
            config_path: Optional `key = value` experiment file
            overrides: Config keys to override, e.g. {"strategy": "fedqs-avg", "rounds": "50"}
            profile: "full" (protocol defaults) or "desk" (small, fast task)

        Returns:
        - STATUS: SUCCESS/ERROR
        - Output directory
        - Mean (stdev) of accuracy, T_f, T_s, stability, oscillations, virtual time
        """
        def action():
            cfg = _config(config_path, overrides, profile)
            result = run_experiment(cfg)
            lines = [
                "STATUS: SUCCESS",
                f"Run: {result.run_id}",
                f"Strategy: {cfg.strategy.value} ({cfg.mode.value})",
                f"Repeats: {len(result.repeats)}",
                f"Directory: {result.directory}",
                "",
            ]
            for metric in REPORTED_METRICS:
                stats = result.aggregate[metric]
                lines.append(f"{metric}: {_fmt(stats['mean'])} (stdev {_fmt(stats['stdev'])}, n={stats['count']})")
            return "\n".join(lines)
        return _guarded("run_simulation", action, config=config_path or "(defaults)")

    # ==================== TOOL 2: compare_strategies ====================
    @mcp.tool()
    def compare_strategies(
        config_path: str = None,
        overrides: dict = None,
        profile: str = "desk",
        strategies: list = None,
    ) -> str:
        """
        Run FedQS-SGD, FedSGD, FedQS-Avg and FedAvg in SAFL mode on identical
        data, speeds and seeds.

        Args:
            strategies: Optional subset, e.g. ["fedqs-sgd", "fedsgd"]

        Returns one row per strategy: accuracy, best accuracy, T_f, oscillations,
        stability and final virtual time.
        """
        def action():
            cfg = _config(config_path, overrides, profile)
            chosen = _strategies(strategies, COMPARISON_STRATEGIES)
            rows = preset_comparison(cfg, chosen)
            return "\n".join(["STATUS: SUCCESS", f"Directory: {Path(cfg.out_dir) / cfg.run_id}", ""] + _table(rows))
        return _guarded("compare_strategies", action)

    # ==================== TOOL 3: motivation_grid ====================
    @mcp.tool()
    def motivation_grid(config_path: str = None, overrides: dict = None, profile: str = "desk") -> str:
        """
        Gradient vs model aggregation accuracy gap in four cells:
        {sync, safl} x {iid, non-iid (Dirichlet x=0.5)}.
        """
        def action():
            cfg = _config(config_path, overrides, profile)
            rows = preset_motivation(cfg)
            return "\n".join(["STATUS: SUCCESS", ""] + _table(rows))
        return _guarded("motivation_grid", action)

    # ==================== TOOL 4: hyperparameter_sweep ====================
    @mcp.tool()
    def hyperparameter_sweep(
        key: str,
        values: list,
        config_path: str = None,
        overrides: dict = None,
        profile: str = "desk",
        strategies: list = None,
    ) -> str:
        """
        Sweep one numeric key (eta0, a, m0, k, num_clients, k_trigger,
        speed_ratio, local_epochs, dirichlet_x, ...) over values.

        Example:
            hyperparameter_sweep("eta0", ["0.05", "0.1", "0.2"])
        """
        def action():
            cfg = _config(config_path, overrides, profile)
            chosen = _strategies(strategies, (Strategy.FEDQS_SGD, Strategy.FEDQS_AVG))
            rows = preset_sweep(cfg, key, [str(v) for v in values], chosen)
            return "\n".join(["STATUS: SUCCESS", f"Key: {key}", ""] + _table(rows))
        return _guarded("hyperparameter_sweep", action, key=key)

    # ==================== TOOL 5: convergence_bounds ====================
    @mcp.tool()
    def convergence_bounds(
        thetas: list = None,
        epochs: list = None,
        ks: list = None,
        betas: list = None,
        aggregation: str = "both",
        L: float = 1.0,
        delta: float = 1.0,
        p: float = 0.5,
        q_t: int = 0,
    ) -> str:
        """
        R, beta range, V, U and the W bound over a (theta, E, K) grid, with flags
        for empty ranges, bad denominators and V outside (0, 1).
        """
        def action():
            if aggregation not in ("both", "sgd", "avg"):
                raise ConfigError(f"expected sgd, avg or both, got '{aggregation}'", key="aggregation")
            kinds = [Aggregation.SGD, Aggregation.AVG] if aggregation == "both" else [Aggregation(aggregation)]
            rows = bounds_table(
                [float(t) for t in (thetas or [0.5, 0.9])],
                [int(e) for e in (epochs or [1, 2])],
                [int(k) for k in (ks or [4, 10])],
                BoundParams(L=L, delta=delta, p=p, Q_t=q_t),
                strategies=kinds,
                betas=[float(b) for b in (betas or [])],
            )
            return "\n".join(["STATUS: SUCCESS", ""] + _table(rows))
        return _guarded("convergence_bounds", action)

    # ==================== TOOL 6: summarize_results ====================
    @mcp.tool()
    def summarize_results(run_dir: str) -> str:
        """
        Show aggregate.json of a finished run directory (<out_dir>/<run_id>).
        """
        path = Path(run_dir) / AGGREGATE_FILE
        if not path.exists():
            return _error("aggregate.json not found.", "Run the experiment first.", run_dir=run_dir)
        return "STATUS: SUCCESS\nFile: {}\nCONTENT:\n{}".format(path, path.read_text(encoding="utf-8"))

    # ==================== TOOL 7: run_history ====================
    @mcp.tool()
    def run_history(run_dir: str, clear: bool = False) -> str:
        """
        Summarize the event log of a run directory, or clear it.
        """
        events = Path(run_dir) / EVENTS_FILE
        if clear:
            return "STATUS: SUCCESS\n" + analytics.clear_events(events)
        summary = analytics.get_summary(events)
        if "error" in summary:
            return _error(summary["error"], run_dir=run_dir)
        lines = ["STATUS: SUCCESS", f"Events: {summary['total_events']}"]
        lines.extend(f"  {name}: {count}" for name, count in sorted(summary["event_counts"].items()))
        lines.append(f"Repeats done: {summary['repeats_done']}")
        lines.append(f"Mean accuracy: {_fmt(summary['mean_accuracy'])}")
        lines.extend(f"- {note}" for note in summary["insights"])
        return "\n".join(lines)

    # ==================== TOOL 8: describe_config ====================
    @mcp.tool()
    def describe_config(profile: str = "full", overrides: dict = None) -> str:
        """
        Print every config key with its value under a profile plus overrides,
        in the file format accepted by config_path.
        """
        def action():
            cfg = _config(None, overrides, profile) if overrides else profile_defaults(profile)
            return "STATUS: SUCCESS\nCONTENT:\n" + dump_config(cfg)
        return _guarded("describe_config", action, profile=profile)
