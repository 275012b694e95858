"""Batch figures from forest-lab CSVs: read-only, deterministic, no recomputation."""

__version__ = "0.1.0"

from .spec import PlotSpec, SpecError
from .render import render
