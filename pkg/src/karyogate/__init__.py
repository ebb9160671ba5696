"""Reliability-gated classification toolkit for low-quality G-banded
chromosome images."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    classify,
    dimred,
    features,
    imaging,
    pipeline,
    reliability,
    synthgen,
)
