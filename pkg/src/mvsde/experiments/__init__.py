"""Named experiments, their configuration files, result records, and
the command line entry point."""

from .config import ExperimentConfig, load_config, parse_config_text, render_config
from .records import ResultRecord, emit_outputs, read_results_jsonl
from .runner import EXPERIMENTS, run_experiment

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "render_config",
    "ResultRecord",
    "emit_outputs",
    "read_results_jsonl",
    "EXPERIMENTS",
    "run_experiment",
]
