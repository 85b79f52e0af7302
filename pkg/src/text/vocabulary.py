"""Token <-> id mapping with reserved sentence markers."""
from __future__ import annotations

from collections import Counter
from typing import Iterable, List, Optional, Sequence, Tuple

SENTENCE_BEGIN = "<s>"
SENTENCE_END = "</s>"
UNKNOWN = "<unk>"


class OutOfVocabularyError(KeyError):
    """Token not in a closed vocabulary."""

    def __init__(self, token: str):
        super().__init__(token)
        self.token = token

    def __str__(self) -> str:
        return f"Out-of-vocabulary token: {self.token!r}"


class Vocabulary:
    """
    Dense id <-> token bijection.

    Ids start at 0. Word vocabularies reserve ``<s>`` (id 0) and ``</s>``
    (id 1); open vocabularies additionally reserve ``<unk>`` (id 2) and map
    unseen tokens to it. Tag and label vocabularies use ``reserved=()``.

    Instances are immutable after construction.
    """

    __slots__ = ("_tokens", "_ids", "_closed")

    def __init__(
        self,
        tokens: Iterable[str],
        reserved: Sequence[str] = (SENTENCE_BEGIN, SENTENCE_END),
        closed: bool = True,
    ):
        ordered: List[str] = list(reserved)
        seen = set(ordered)
        for token in tokens:
            if token not in seen:
                seen.add(token)
                ordered.append(token)
        if not closed and UNKNOWN not in seen:
            ordered.insert(len(reserved), UNKNOWN)
        object.__setattr__(self, "_tokens", tuple(ordered))
        object.__setattr__(self, "_ids", {tok: i for i, tok in enumerate(ordered)})
        object.__setattr__(self, "_closed", closed)

    def __setattr__(self, name, value):
        raise AttributeError("Vocabulary is immutable")

    def __reduce__(self):
        return (_rebuild, (self._tokens, self._closed))

    @classmethod
    def from_sentences(
        cls,
        sentences: Iterable[Sequence[str]],
        closed: bool = True,
        min_count: int = 1,
    ) -> "Vocabulary":
        """Build a word vocabulary in order of first appearance."""
        counts: Counter = Counter()
        order: List[str] = []
        for sentence in sentences:
            for token in sentence:
                if token not in counts:
                    order.append(token)
                counts[token] += 1
        return cls((t for t in order if counts[t] >= min_count), closed=closed)

    # ------------------------------------------------------------------
    # Lookup
    # ------------------------------------------------------------------

    @property
    def closed(self) -> bool:
        return self._closed

    @property
    def tokens(self) -> Tuple[str, ...]:
        return self._tokens

    @property
    def begin_id(self) -> int:
        return self._ids[SENTENCE_BEGIN]

    @property
    def end_id(self) -> int:
        return self._ids[SENTENCE_END]

    @property
    def unknown_id(self) -> Optional[int]:
        return self._ids.get(UNKNOWN)

    def encode(self, token: str) -> int:
        """Id of ``token``; open vocabularies fall back to ``<unk>``."""
        idx = self._ids.get(token)
        if idx is not None:
            return idx
        if self._closed or UNKNOWN not in self._ids:
            raise OutOfVocabularyError(token)
        return self._ids[UNKNOWN]

    def decode(self, idx: int) -> str:
        return self._tokens[idx]

    def encode_sentence(self, tokens: Sequence[str]) -> List[int]:
        """Encode a sentence without the <s>/</s> markers."""
        return [self.encode(t) for t in tokens]

    def decode_sentence(self, ids: Sequence[int]) -> List[str]:
        return [self._tokens[i] for i in ids]

    def union(self, other: "Vocabulary") -> "Vocabulary":
        """Vocabulary with this one's ids preserved and ``other``'s new tokens appended."""
        return Vocabulary(
            list(self._tokens) + [t for t in other.tokens if t not in self._ids],
            reserved=(),
            closed=self._closed,
        )

    def __contains__(self, token: object) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self._tokens)

    def __iter__(self):
        return iter(self._tokens)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._tokens == other._tokens and self._closed == other._closed

    def __hash__(self) -> int:
        return hash((self._tokens, self._closed))

    def __repr__(self) -> str:
        mode = "closed" if self._closed else "open"
        return f"Vocabulary({len(self)} tokens, {mode})"


def _rebuild(tokens: Tuple[str, ...], closed: bool) -> Vocabulary:
    return Vocabulary(tokens, reserved=(), closed=closed)
