"""Replay curricula for class-incremental learning.

Thin wrapper over the C++ core. ``run_sweep`` takes the same JSON document as
``rcl sweep --config``, either as a dict or as a path to a file.
"""

import json
import os

from ._core import (
    ConfigError,
    Error,
    MetricError,
    SmallCnn,
    avg_accuracy,
    build_schedule,
    class_quotas,
    confidence_scores,
    distance_scores,
    forgetfulness,
    precision,
    replay_run,
    run_metrics,
    uniform_pick_indices,
    write_synthetic_dataset,
)
from ._core import run_sweep_json as _run_sweep_json


def run_sweep(config):
    if isinstance(config, (str, os.PathLike)):
        with open(config) as f:
            config = json.load(f)
    return _run_sweep_json(json.dumps(config))


__all__ = [
    "ConfigError",
    "Error",
    "MetricError",
    "SmallCnn",
    "avg_accuracy",
    "build_schedule",
    "class_quotas",
    "confidence_scores",
    "distance_scores",
    "forgetfulness",
    "precision",
    "replay_run",
    "run_metrics",
    "run_sweep",
    "uniform_pick_indices",
    "write_synthetic_dataset",
]
