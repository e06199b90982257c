"""Experiment configuration, training loop, sweeps, reports and the CLI."""
from .config import ExperimentConfig, config_from_dict, default_config, load_config
from .runner import RunRecord, SweepReport, run_experiment, run_seeds, run_sweep

__all__ = ["ExperimentConfig", "RunRecord", "SweepReport", "config_from_dict", "default_config", "load_config",
           "run_experiment", "run_seeds", "run_sweep"]
