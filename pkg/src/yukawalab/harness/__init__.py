"""Configuration, experiment dispatch, manifests and report emission."""
from .config import ConfigError, RunConfig
from .report import emit_report, read_csv, render_report
from .runner import NumericalFailure, RunManifest, run_experiment

__all__ = ["ConfigError", "RunConfig", "emit_report", "read_csv", "render_report", "NumericalFailure", "RunManifest", "run_experiment"]
