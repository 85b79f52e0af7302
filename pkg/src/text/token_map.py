"""Tokenization mapping between CSR-style and Treebank-style word forms.

The CSR transcripts write contractions as single tokens ("don't") while the
treebank splits them ("do n't"). A TokenMap holds the split rules and applies
or undoes them over token sequences.

Rule file format (one rule per line, ``#`` starts a comment line)::

    don't<TAB>do n't
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_MAP = Path("data_files/token_map.txt")

# Table rows for the most frequent mismatches plus the general clitics.
SEED_RULES: Tuple[Tuple[str, Tuple[str, str]], ...] = (
    ("don't", ("do", "n't")),
    ("it's", ("it", "'s")),
    ("i'm", ("i", "'m")),
    ("i'll", ("i", "'ll")),
    ("doesn't", ("does", "n't")),
    ("didn't", ("did", "n't")),
    ("isn't", ("is", "n't")),
    ("can't", ("ca", "n't")),
    ("won't", ("wo", "n't")),
    ("that's", ("that", "'s")),
    ("there's", ("there", "'s")),
    ("what's", ("what", "'s")),
    ("you're", ("you", "'re")),
    ("we're", ("we", "'re")),
    ("they're", ("they", "'re")),
    ("i've", ("i", "'ve")),
    ("we've", ("we", "'ve")),
    ("you've", ("you", "'ve")),
    ("i'd", ("i", "'d")),
    ("you'd", ("you", "'d")),
    ("we'll", ("we", "'ll")),
    ("you'll", ("you", "'ll")),
)


class TokenMapError(ValueError):
    """Invalid token map rule set."""


@dataclass(frozen=True)
class TokenMap:
    """Ordered split rules ``source -> (part1, part2)``."""

    rules: Tuple[Tuple[str, Tuple[str, str]], ...]
    _split: Dict[str, Tuple[str, str]] = field(init=False, repr=False, compare=False)
    _merge: Dict[Tuple[str, str], str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        split: Dict[str, Tuple[str, str]] = {}
        merge: Dict[Tuple[str, str], str] = {}
        for source, pair in self.rules:
            if source in split:
                raise TokenMapError(f"Duplicate rule source: {source!r}")
            if pair in merge:
                raise TokenMapError(
                    f"Rules {merge[pair]!r} and {source!r} share the replacement {pair}"
                )
            split[source] = pair
            merge[pair] = source
        for source, pair in self.rules:
            for part in pair:
                if part in split:
                    raise TokenMapError(
                        f"Replacement token {part!r} of rule {source!r} is itself a rule source"
                    )
        object.__setattr__(self, "_split", split)
        object.__setattr__(self, "_merge", merge)

    @classmethod
    def default(cls) -> "TokenMap":
        """Token map seeded with the built-in rules."""
        return cls(SEED_RULES)

    @classmethod
    def from_text(cls, text: str) -> "TokenMap":
        """Parse the rule file format."""
        rules: List[Tuple[str, Tuple[str, str]]] = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "\t" not in line:
                raise TokenMapError(f"line {line_no}: expected 'source<TAB>part1 part2'")
            source, replacement = line.split("\t", 1)
            parts = replacement.split()
            if len(parts) != 2 or not source.strip():
                raise TokenMapError(f"line {line_no}: expected exactly two replacement tokens")
            rules.append((source.strip(), (parts[0], parts[1])))
        return cls(tuple(rules))

    @classmethod
    def from_file(cls, path: Path | str = DEFAULT_TOKEN_MAP) -> "TokenMap":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = [f"{source}\t{a} {b}" for source, (a, b) in self.rules]
        return "\n".join(lines) + "\n"

    def split(self, token: str) -> Tuple[str, str] | None:
        """Replacement pair for ``token``, or None if no rule applies."""
        return self._split.get(token)

    @property
    def replacement_tokens(self) -> frozenset:
        return frozenset(part for _, pair in self.rules for part in pair)

    def __len__(self) -> int:
        return len(self.rules)


def normalize(tokens: Iterable[str], token_map: TokenMap) -> List[str]:
    """
    Apply every split rule (CSR -> Treebank tokenization).

    Examples:
        >>> normalize(["it's", "i'll"], TokenMap.default())
        ['it', "'s", 'i', "'ll"]
    """
    out: List[str] = []
    for token in tokens:
        pair = token_map.split(token)
        if pair is None:
            out.append(token)
        else:
            out.extend(pair)
    return out


def denormalize(tokens: Sequence[str], token_map: TokenMap) -> List[str]:
    """
    Undo the split rules (Treebank -> CSR tokenization).

    Adjacent pairs are merged leftmost-first without overlap. Merging is
    context-free, so a CSR sequence that already holds a replacement pair
    (``do n't``) comes back merged (``don't``): the round trip is the
    identity only for inputs without such pairs.
    """
    out: List[str] = []
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens):
            source = token_map._merge.get((tokens[i], tokens[i + 1]))
            if source is not None:
                out.append(source)
                i += 2
                continue
        out.append(tokens[i])
        i += 1
    return out
