"""File helpers: corpora, atomic outputs and content digests."""
from __future__ import annotations

import hashlib
import logging
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, List, Sequence, Tuple

logger = logging.getLogger(__name__)


def read_corpus(path: Path | str) -> List[List[str]]:
    """One sentence per line, space-separated tokens; blank lines skipped."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.split() for line in lines if line.strip()]


def read_id_corpus(path: Path | str) -> Tuple[List[str], List[List[str]]]:
    """``<utt-id> <tokens...>`` per line."""
    ids: List[str] = []
    sentences: List[List[str]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if parts:
            ids.append(parts[0])
            sentences.append(parts[1:])
    return ids, sentences


def format_corpus(sentences: Iterable[Sequence[str]]) -> str:
    return "".join(" ".join(s) + "\n" for s in sentences)


@contextmanager
def atomic_output(path: Path | str, mode: str = "w") -> Iterator:
    """
    Write to a temporary sibling and rename over ``path`` on success.

    On error the temporary file is removed and ``path`` is left untouched.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(f".{target.name}.tmp")
    encoding = None if "b" in mode else "utf-8"
    try:
        with open(tmp, mode, encoding=encoding) as handle:
            yield handle
        os.replace(tmp, target)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise


def write_text_atomic(path: Path | str, text: str) -> None:
    with atomic_output(path) as handle:
        handle.write(text)


def file_digest(path: Path | str) -> str:
    """sha256 of a file, or of every file under a directory in name order."""
    path = Path(path)
    digest = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for file in files:
        if path.is_dir():
            digest.update(str(file.relative_to(path)).encode("utf-8"))
        digest.update(file.read_bytes())
    return digest.hexdigest()


def remove_outputs(paths: Iterable[Path | str]) -> int:
    """Delete partially written outputs; returns how many were removed."""
    removed = 0
    for path in paths:
        path = Path(path)
        if path.is_file():
            path.unlink()
            removed += 1
            logger.debug("Removed partial output %s", path)
    return removed


def remove_empty_dirs(paths: Sequence[Path | str]) -> int:
    """Remove directories, deepest last-created first, that are left empty."""
    removed = 0
    for path in reversed([Path(p) for p in paths]):
        if path.is_dir() and not any(path.iterdir()):
            path.rmdir()
            removed += 1
    return removed
