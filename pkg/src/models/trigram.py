"""
Deleted-interpolation trigram baseline.

Sentences are padded as ``B <s> w1 ... wn </s>`` where ``B`` is the boundary
sentinel, so the first word is predicted from ``(<s>, B)``. Every token after
``<s>`` is predicted, ``</s>`` included.
"""
from __future__ import annotations

import io
import logging
import math
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

from src.models.deleted_interpolation import (
    ContextChain,
    DIConfig,
    DIModel,
    Event,
    split_heldout,
)
from src.text.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

# Conditioning symbol for positions left of <s>.
BOUNDARY = -1

MAGIC = b"TRIGRAM\n"
FORMAT_VERSION = 1


def trigram_events(ids: Sequence[int], vocab: Vocabulary) -> Iterator[Event]:
    """Yield ``((w-1, w-2), w)`` events for an encoded sentence (no markers)."""
    prev1, prev2 = vocab.begin_id, BOUNDARY
    for word in list(ids) + [vocab.end_id]:
        yield Event((prev1, prev2), word)
        prev1, prev2 = word, prev1


@dataclass
class TrigramLM:
    """A word vocabulary plus a DIModel over ``(w-1, w-2) -> (w-1) -> ()``."""

    vocab: Vocabulary
    model: DIModel

    @classmethod
    def train(
        cls,
        sentences: Sequence[Sequence[str]],
        vocab: Optional[Vocabulary] = None,
        config: Optional[DIConfig] = None,
    ) -> "TrigramLM":
        """
        Train on tokenized sentences; the last ``heldout_fraction`` is held out.

        Raises:
            ValueError: no sentences.
            OutOfVocabularyError: a token outside a supplied closed vocabulary.
        """
        if not sentences:
            raise ValueError("Cannot train a trigram on an empty corpus")
        config = config or DIConfig()
        vocab = vocab or Vocabulary.from_sentences(sentences)
        train_part, heldout_part = split_heldout(list(sentences), config.heldout_fraction)
        encoded_train = [vocab.encode_sentence(s) for s in train_part]
        encoded_heldout = [vocab.encode_sentence(s) for s in heldout_part]
        model = DIModel.train(
            (ev for ids in encoded_train for ev in trigram_events(ids, vocab)),
            ContextChain.trigram(),
            (ev for ids in encoded_heldout for ev in trigram_events(ids, vocab)),
            vocab_size=len(vocab),
            config=config,
        )
        logger.info(
            "Trained trigram on %d sentences (%d held out), V=%d",
            len(train_part), len(heldout_part), len(vocab),
        )
        return cls(vocab, model)

    def logprob(self, word: int, prev1: int, prev2: int) -> float:
        return self.model.logprob((prev1, prev2), word)

    def start_context(self) -> Tuple[int, int]:
        return (self.vocab.begin_id, BOUNDARY)

    def sentence_logprob(self, tokens: Sequence[str]) -> Tuple[float, List[float]]:
        """Total and per-token log-probabilities, ``</s>`` included."""
        ids = self.vocab.encode_sentence(tokens)
        per_word = [self.model.logprob(ev.context, ev.event) for ev in trigram_events(ids, self.vocab)]
        return math.fsum(per_word), per_word

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path: Path | str) -> None:
        buffer = io.BytesIO()
        buffer.write(MAGIC)
        buffer.write(f"{FORMAT_VERSION}\n".encode("ascii"))
        payload = {
            "vocab": list(self.vocab.tokens),
            "closed": self.vocab.closed,
            "model": self.model.to_bytes(),
        }
        pickle.dump(payload, buffer, protocol=pickle.HIGHEST_PROTOCOL)
        Path(path).write_bytes(buffer.getvalue())

    @classmethod
    def load(cls, path: Path | str) -> "TrigramLM":
        data = Path(path).read_bytes()
        if not data.startswith(MAGIC):
            raise ValueError(f"{path}: not a trigram model file")
        version_line, _, payload = data[len(MAGIC):].partition(b"\n")
        if int(version_line) != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported trigram model version {version_line.decode()}")
        state = pickle.loads(payload)
        vocab = Vocabulary(state["vocab"], reserved=(), closed=state["closed"])
        return cls(vocab, DIModel.from_bytes(state["model"]))


def trigram_ppl(model: TrigramLM, corpus: Sequence[Sequence[str]]) -> float:
    """
    Perplexity ``exp(-1/N sum log P)`` with N counting every predicted token.

    Raises:
        OutOfVocabularyError: a corpus token outside a closed vocabulary.
    """
    total = 0.0
    n_tokens = 0
    for sentence in corpus:
        logp, per_word = model.sentence_logprob(sentence)
        total += logp
        n_tokens += len(per_word)
    if n_tokens == 0:
        raise ValueError("Empty corpus")
    return math.exp(-total / n_tokens)
