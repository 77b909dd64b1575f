from .altopt import (
    AltOptReport,
    AltOptSettings,
    ConfigError,
    alternating_optimize_perfect,
    alternating_optimize_stochastic,
)
from .experiment import load_spec, parse_spec, run_experiment
from .bench import run_bench

__all__ = [
    "AltOptReport",
    "AltOptSettings",
    "ConfigError",
    "alternating_optimize_perfect",
    "alternating_optimize_stochastic",
    "load_spec",
    "parse_spec",
    "run_experiment",
    "run_bench",
]
