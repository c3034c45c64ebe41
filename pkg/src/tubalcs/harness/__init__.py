"""Experiment harness: config files, sweeps, metrics and tensor files."""

from .config import ExperimentConfig, parse_config
from .experiment import iterations_to_threshold, psnr, run_experiment
from .tensor_io import read_tensor, write_tensor

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "run_experiment",
    "iterations_to_threshold",
    "psnr",
    "read_tensor",
    "write_tensor",
]
