"""Federated unlearning with auxiliary classifier heads.

The heavy lifting lives in the compiled extension; this package re-exports
its surface: pipeline runs, coefficient sweeps, and the head-combination
primitives.
"""

from ._core import (
    BoundRefusalError,
    ConfigError,
    Head,
    MissingArtifactError,
    class_combine,
    preset_names,
    run,
    sample_combine,
    sweep,
)

__all__ = [
    "BoundRefusalError",
    "ConfigError",
    "Head",
    "MissingArtifactError",
    "class_combine",
    "preset_names",
    "run",
    "sample_combine",
    "sweep",
]
