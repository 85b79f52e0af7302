"""Utility functions package."""
from .config import build_config, read_key_values
from .storage import atomic_output, file_digest, read_corpus

__all__ = [
    "build_config",
    "read_key_values",
    "atomic_output",
    "file_digest",
    "read_corpus",
]
