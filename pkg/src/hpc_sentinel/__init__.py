"""Streaming detection of Spectre/Meltdown-like process behavior from
hardware/software performance-counter samples, with a behavioral workload
simulator, four from-scratch classifiers, and an evaluation harness."""

from . import bench, cli, collector, detector, events, features, models, simgen
from .errors import (
    CapabilityError,
    ConfigurationError,
    DataError,
    DecodeError,
    PrivilegeError,
    SentinelError,
)

__version__ = "0.1.0"

__all__ = [
    "bench",
    "cli",
    "collector",
    "detector",
    "events",
    "features",
    "models",
    "simgen",
    "CapabilityError",
    "ConfigurationError",
    "DataError",
    "DecodeError",
    "PrivilegeError",
    "SentinelError",
    "__version__",
]
