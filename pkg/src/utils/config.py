"""key=value configuration files and flag/file/default precedence."""
from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

UNBOUNDED = ("none", "inf", "unbounded")


def normalize_key(key: str) -> str:
    """``stack-logP-threshold`` -> ``stack_logp_threshold``."""
    return key.strip().lower().replace("-", "_")


def read_key_values(path: Path | str) -> Dict[str, str]:
    """
    Parse a ``key=value`` file; blank lines and ``#`` comments are skipped.

    Raises:
        ValueError: a line without ``=``.
    """
    values: Dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{line_no}: expected key=value")
        key, value = stripped.split("=", 1)
        values[normalize_key(key)] = value.strip()
    return values


def _coerce(raw: Any, default: Any, name: str) -> Any:
    if not isinstance(raw, str):
        return raw
    if raw.lower() in UNBOUNDED:
        return None
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int) or name.endswith("depth_threshold"):
        return int(raw)
    if isinstance(default, float) or default is None:
        try:
            return float(raw)
        except ValueError:
            return raw
    return raw


def build_config(
    cls: Type[T],
    file_values: Optional[Mapping[str, Any]] = None,
    flag_values: Optional[Mapping[str, Any]] = None,
) -> T:
    """
    Instantiate dataclass ``cls`` with precedence flags > file > defaults.

    Flags set to None are treated as not given; unknown keys are ignored with a
    debug message so one file can hold several sections.
    """
    defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls) if f.init}  # type: ignore[arg-type]
    resolved: Dict[str, Any] = dict(defaults)
    for source in (file_values or {}, {k: v for k, v in (flag_values or {}).items() if v is not None}):
        for key, value in source.items():
            name = normalize_key(key)
            if name not in defaults:
                logger.debug("Ignoring %s for %s", key, cls.__name__)
                continue
            resolved[name] = _coerce(value, defaults[name], name)
    return cls(**resolved)
