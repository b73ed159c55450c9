"""Experiment specs, orchestration and the command-line interface."""

from .run import EXIT_FAILED, EXIT_INVALID, EXIT_OK, RunContext, prepare, run_experiment
from .spec import MODES, PRESETS, ExperimentSpec, load_spec, parse_spec

__all__ = [
    "EXIT_FAILED", "EXIT_INVALID", "EXIT_OK", "MODES", "PRESETS", "ExperimentSpec", "RunContext",
    "load_spec", "parse_spec", "prepare", "run_experiment",
]
