"""Experiment runner, statistics and command-line interface."""

from .config import ExperimentConfig, load_config
from .counterexample import counterexample_report
from .runner import ExperimentFailed, ResultRow, read_results, run_experiment, write_results
from .stats import ConstantInputWarning, SummaryRow, aggregate, spearman

__all__ = [
    "ExperimentConfig", "load_config", "counterexample_report", "ExperimentFailed", "ResultRow",
    "read_results", "run_experiment", "write_results", "ConstantInputWarning", "SummaryRow",
    "aggregate", "spearman",
]
