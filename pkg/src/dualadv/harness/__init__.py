"""Experiment harness: datasets, orchestration, persistence, CLI, plots."""

from .amap import read_amap, write_amap
from .data import load_arrays, load_dataset, load_split, synthesize_dataset, train_desk_model
from .runner import (
    CSV_HEADER,
    ExperimentConfig,
    RunManifest,
    run_experiment,
    transferability_eval,
)

__all__ = [
    "CSV_HEADER",
    "ExperimentConfig",
    "RunManifest",
    "load_arrays",
    "load_dataset",
    "load_split",
    "read_amap",
    "run_experiment",
    "synthesize_dataset",
    "train_desk_model",
    "transferability_eval",
    "write_amap",
]
