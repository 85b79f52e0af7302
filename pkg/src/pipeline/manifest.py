"""Run manifests: what a subcommand read, wrote and was configured with."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from src.utils.storage import file_digest, write_text_atomic

logger = logging.getLogger(__name__)


@dataclass
class RunManifest:
    """
    Record of one subcommand run, written as ``key=value`` text.

    In deterministic mode the timing fields are left out, so two runs with
    the same inputs, config and seed produce identical manifests.
    """

    subcommand: str
    config: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    deterministic: bool = True
    started_at: Optional[str] = None
    elapsed_seconds: Optional[float] = None
    _clock: float = field(default=0.0, repr=False)

    def start(self) -> "RunManifest":
        self._clock = time.perf_counter()
        self.started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return self

    def finish(self) -> "RunManifest":
        self.elapsed_seconds = time.perf_counter() - self._clock
        return self

    def add_inputs(self, paths: Mapping[str, Optional[Path | str]]) -> None:
        for name, path in paths.items():
            if path is not None and Path(path).exists():
                self.inputs[name] = f"{Path(path).name} sha256:{file_digest(path)}"

    def add_outputs(self, paths: Mapping[str, Optional[Path | str]]) -> None:
        for name, path in paths.items():
            if path is not None and Path(path).exists():
                self.outputs[name] = f"{Path(path).name} sha256:{file_digest(path)}"

    def to_text(self) -> str:
        lines: List[str] = [f"subcommand={self.subcommand}"]
        if self.seed is not None:
            lines.append(f"seed={self.seed}")
        lines.extend(f"config.{key}={_format(value)}" for key, value in sorted(self.config.items()))
        lines.extend(f"input.{key}={value}" for key, value in sorted(self.inputs.items()))
        lines.extend(f"output.{key}={value}" for key, value in sorted(self.outputs.items()))
        if not self.deterministic:
            lines.append(f"started_at={self.started_at}")
            lines.append(f"elapsed_seconds={self.elapsed_seconds:.3f}")
        return "\n".join(lines) + "\n"

    def write(self, path: Path | str) -> None:
        write_text_atomic(path, self.to_text())
        logger.info("Wrote manifest %s", path)


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)


def read_manifest(path: Path | str) -> Dict[str, str]:
    """Flat ``key -> value`` view of a written manifest."""
    out: Dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key] = value
    return out


def manifest_path(outputs: Sequence[Optional[Path | str]], subcommand: str) -> Path:
    """``<first output>.manifest``, or ``<subcommand>.manifest`` in the working directory."""
    for path in outputs:
        if path is not None:
            return Path(f"{path}.manifest")
    return Path(f"{subcommand}.manifest")
