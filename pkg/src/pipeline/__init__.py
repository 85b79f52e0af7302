"""Batch pipeline: subcommands, run manifests and toy data."""
from .manifest import RunManifest
from .commands import COMMANDS, run_command

__all__ = ["RunManifest", "COMMANDS", "run_command"]
