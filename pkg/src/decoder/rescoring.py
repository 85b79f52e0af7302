"""
Language models that rescore lattice paths.

Every model is used through the same incremental contract: ``start()``
returns the state of the empty prefix and ``score(state, link)`` returns
``(log P(link.word | prefix), next_state)``. States are immutable, so a
child path reuses its parent's state and each expansion costs one call.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.lattice.lattice import Link
from src.models.evaluation import interpolate_logprob
from src.models.slm import SLModel, WordParsePrefix, initial_prefix
from src.models.slm_search import BeamConfig, SearchStarvationError, advance_stack, slm_word_logprob
from src.models.trigram import TrigramLM

logger = logging.getLogger(__name__)


class RescoringLM(ABC):
    """Incremental scoring contract used by the lattice search."""

    name = "lm"

    @abstractmethod
    def start(self) -> Any:
        """State of the empty prefix."""

    @abstractmethod
    def score(self, state: Any, link: Link) -> Tuple[float, Any]:
        """Log-probability of ``link.word`` after ``state`` and the extended state."""

    def reset(self) -> None:
        """Drop per-lattice caches."""

    def prefix_logprob(self, words: Sequence[str], word: str) -> float:
        """log P(word | words) through the incremental interface."""
        state = self.start()
        for prev in words:
            _, state = self.score(state, _word_link(prev))
        return self.score(state, _word_link(word))[0]

    def path_logprobs(self, links: Sequence[Link]) -> List[float]:
        state = self.start()
        out: List[float] = []
        for link in links:
            logprob, state = self.score(state, link)
            out.append(logprob)
        return out


def _word_link(word: str) -> Link:
    return Link(-1, -1, -1, word, 0.0, 0.0)


class LatticeNgramLM(RescoringLM):
    """The n-gram scores stored on the lattice links."""

    name = "lattice-ngram"

    def start(self) -> None:
        return None

    def score(self, state: None, link: Link) -> Tuple[float, None]:
        return link.lm, None

    def prefix_logprob(self, words: Sequence[str], word: str) -> float:
        raise TypeError("Lattice n-gram scores are only defined on lattice links")


class TrigramRescorer(RescoringLM):
    name = "trigram"

    def __init__(self, trigram: TrigramLM):
        self.trigram = trigram

    def start(self) -> Tuple[int, int]:
        return self.trigram.start_context()

    def score(self, state: Tuple[int, int], link: Link) -> Tuple[float, Tuple[int, int]]:
        word = self.trigram.vocab.encode(link.word)
        prev1, prev2 = state
        return self.trigram.logprob(word, prev1, prev2), (word, prev1)


class SLMRescorer(RescoringLM):
    """
    Structured LM over path prefixes.

    The state is the prefix's word history; the surviving stack for each
    history is cached, so sibling expansions share their parent's stack.
    """

    name = "slm"

    def __init__(self, model: SLModel, beams: Optional[BeamConfig] = None):
        self.model = model
        self.beams = beams or BeamConfig()
        self._stacks: Dict[Tuple[int, ...], List[WordParsePrefix]] = {(): [initial_prefix()]}

    def reset(self) -> None:
        self._stacks = {(): [initial_prefix()]}

    def start(self) -> Tuple[int, ...]:
        return ()

    def _stack(self, history: Tuple[int, ...]) -> List[WordParsePrefix]:
        stack = self._stacks.get(history)
        if stack is None:
            parent = self._stack(history[:-1])
            stack = advance_stack(parent, self.model, history[-1], self.beams)
            if not stack:
                raise SearchStarvationError(len(history))
            self._stacks[history] = stack
        return stack

    def score(self, state: Tuple[int, ...], link: Link) -> Tuple[float, Tuple[int, ...]]:
        word = self.model.words.encode(link.word)
        logprob = slm_word_logprob(self._stack(state), self.model, word, len(state))
        return logprob, state + (word,)


class InterpolatedLM(RescoringLM):
    """lam * P_a + (1 - lam) * P_b, mixed in probability space."""

    name = "interpolated"

    def __init__(self, first: RescoringLM, second: RescoringLM, lam: float):
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"Interpolation weight must be in [0, 1], got {lam}")
        self.first = first
        self.second = second
        self.lam = lam

    def reset(self) -> None:
        self.first.reset()
        self.second.reset()

    def start(self) -> Tuple[Any, Any]:
        return (self.first.start(), self.second.start())

    def score(self, state: Tuple[Any, Any], link: Link) -> Tuple[float, Tuple[Any, Any]]:
        lp_a, state_a = self.first.score(state[0], link)
        lp_b, state_b = self.second.score(state[1], link)
        return interpolate_logprob(lp_a, lp_b, self.lam), (state_a, state_b)
