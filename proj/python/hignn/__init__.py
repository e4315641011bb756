"""Heterogeneous interference GNN beamforming.

Configs are passed as dicts (or JSON strings) using the same schema as the
command-line config files.
"""

import json as _json

from . import _core
from ._core import Checkpoint, Error, Sample, __version__

__all__ = [
    "Checkpoint",
    "Error",
    "Sample",
    "__version__",
    "check_gradients",
    "check_permutations",
    "fit",
    "fp_solve",
    "generate_dataset",
    "generate_sample",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "weighted_sum_rate",
]


def _text(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def generate_sample(config=None, index=0):
    return _core.generate_sample(_text(config), index)


def generate_dataset(num_samples, config=None, threads=1):
    return _core.generate_dataset(_text(config), num_samples, threads)


def load_dataset(path):
    return _core.load_dataset(path)


def fp_solve(sample, options=None):
    """Returns a dict with beamformers, wsr_trace, iterations, converged, bisections."""
    return _core.fp_solve(sample, _text(options))


def weighted_sum_rate(sample, beamformers):
    return _core.weighted_sum_rate(sample, beamformers)


def init_model(arch=None, seed=1):
    return _core.init_model(_text(arch), seed)


def load_checkpoint(path):
    return _core.load_checkpoint(path)


def fit(config, train, val):
    return _core.fit(_text(config), train, val)


def check_gradients(seed=1):
    return _core.check_gradients(seed)


def check_permutations(trials=20, seed=1):
    return _core.check_permutations(trials, seed)
