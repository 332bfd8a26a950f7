"""Configuration-driven experiments: training, SNR sweeps, baselines and reports."""

from .config import ExperimentConfig, load_config
from .experiment import ResultRow, cmd_run, cmd_train
from .report import cmd_report

__all__ = ["ExperimentConfig", "load_config", "ResultRow", "cmd_run", "cmd_train", "cmd_report"]
