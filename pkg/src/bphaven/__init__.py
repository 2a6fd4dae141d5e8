"""Bivariate Poisson home-advantage models for soccer match data."""
from __future__ import annotations

from .bpcore import BPParams, bp_log_pmf, bp_log_pmf_grid, bp_moments, bp_sample

__version__ = "0.1.0"

__all__ = [
    "BPParams",
    "bp_log_pmf",
    "bp_log_pmf_grid",
    "bp_moments",
    "bp_sample",
]
