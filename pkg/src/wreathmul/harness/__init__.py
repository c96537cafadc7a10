"""Experiments, exponent fits and the command-line interface."""

from .experiments import ErrorReport, ExponentFit, fit_exponent, run_error_experiment

__all__ = ["ErrorReport", "ExponentFit", "fit_exponent", "run_error_experiment"]
