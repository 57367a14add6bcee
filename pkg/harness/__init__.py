"""
Experiment harness: configuration, run orchestration, presets and the CLI.
"""
from .settings import ExperimentConfig, dump_config, load_config, parse_config
from .runner import (
    aggregate_summaries, prepare_data, preset_comparison, preset_motivation,
    preset_sweep, run_experiment,
)

__all__ = [
    "ExperimentConfig",
    "dump_config",
    "load_config",
    "parse_config",
    "aggregate_summaries",
    "prepare_data",
    "preset_comparison",
    "preset_motivation",
    "preset_sweep",
    "run_experiment",
]
