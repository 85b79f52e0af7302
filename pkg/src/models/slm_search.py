"""
Synchronous multi-stack search for the structured language model.

Stack k holds the surviving word-parse prefixes that have consumed k words.
Word probabilities are assigned by summing the predictor over stack k,
weighted by each prefix's share of the stack's joint probability:

    P(w | W_k) = sum_{T in S_k} P(w | W_k T) * rho(W_k, T)
    rho(W_k, T) = P(W_k T) / sum_{T' in S_k} P(W_k T')
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from src.models.slm import (
    ParserAction,
    SLModel,
    WordParsePrefix,
    apply_action,
    close_sentence,
    initial_prefix,
    shift,
    tree_from_derivation,
)
from src.text.treebank import TreebankTree

logger = logging.getLogger(__name__)


class SearchStarvationError(RuntimeError):
    """Every hypothesis was pruned or had zero probability."""

    def __init__(self, position: int, message: Optional[str] = None):
        super().__init__(message or f"SLM search has no surviving prefix at position {position}")
        self.position = position


@dataclass
class BeamConfig:
    """
    Pruning knobs for the SLM stacks.

    ``None`` disables a limit. ``stack_depth_threshold`` caps entries per
    stack, ``stack_logp_threshold`` caps the log-probability spread from the
    best entry and ``phase_beam`` does the same for alternatives inside one
    tagging/parsing phase.
    """

    stack_depth_threshold: Optional[int] = 20
    stack_logp_threshold: Optional[float] = 15.0
    phase_beam: Optional[float] = 10.0

    def __post_init__(self) -> None:
        if self.stack_depth_threshold is not None and self.stack_depth_threshold < 1:
            raise ValueError("stack_depth_threshold must be a positive integer")
        for name in ("stack_logp_threshold", "phase_beam"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def exhaustive(cls) -> "BeamConfig":
        return cls(None, None, None)

    @property
    def is_exhaustive(self) -> bool:
        return self.stack_depth_threshold is None and self.stack_logp_threshold is None and self.phase_beam is None


def _within(entries: List[WordParsePrefix], spread: Optional[float]) -> List[WordParsePrefix]:
    if spread is None or not entries:
        return entries
    floor = max(e.logprob for e in entries) - spread
    return [e for e in entries if e.logprob >= floor]


def prune_stack(entries: Sequence[WordParsePrefix], beams: BeamConfig) -> List[WordParsePrefix]:
    """Deduplicate, order by (logprob desc, derivation) and apply both stack limits."""
    ordered = sorted(entries, key=WordParsePrefix.sort_key)
    unique: List[WordParsePrefix] = []
    seen = set()
    for entry in ordered:
        if entry.derivation in seen:
            continue
        seen.add(entry.derivation)
        unique.append(entry)
    if beams.stack_depth_threshold is not None:
        unique = unique[: beams.stack_depth_threshold]
    if beams.stack_logp_threshold is not None and unique:
        floor = unique[0].logprob - beams.stack_logp_threshold
        unique = [e for e in unique if e.logprob >= floor]
    return unique


class StackSet:
    """Stacks S_0 .. S_k advanced synchronously, one word at a time."""

    def __init__(self, model: SLModel, beams: Optional[BeamConfig] = None):
        self.model = model
        self.beams = beams or BeamConfig()
        self.stacks: List[List[WordParsePrefix]] = [[initial_prefix()]]

    @property
    def k(self) -> int:
        return len(self.stacks) - 1

    @property
    def current(self) -> List[WordParsePrefix]:
        return self.stacks[-1]

    def __getitem__(self, k: int) -> List[WordParsePrefix]:
        return self.stacks[k]

    def advance(self, word: Union[int, str]) -> List[WordParsePrefix]:
        """Extend every prefix of the top stack with ``word`` and push the pruned result."""
        word_id = _word_id(self.model, word)
        extended = advance_stack(self.current, self.model, word_id, self.beams)
        self.stacks.append(extended)
        if not extended:
            raise SearchStarvationError(self.k)
        return extended


def _word_id(model: SLModel, word: Union[int, str]) -> int:
    return model.words.encode(word) if isinstance(word, str) else word


def extend_with_word(
    prefix: WordParsePrefix,
    model: SLModel,
    word: Union[int, str],
    beams: Optional[BeamConfig] = None,
) -> List[WordParsePrefix]:
    """
    All extensions of ``prefix`` by ``word``: every tag, then every parser
    action sequence closed by Null (or, for ``</s>``, adjoined to one root).

    Alternatives below the phase beam are dropped after tagging and after each
    round of adjoins.

    Raises:
        OutOfVocabularyError: ``word`` is a token outside a closed vocabulary.
    """
    beams = beams or BeamConfig()
    word_id = _word_id(model, word)
    word_lp = model.word_logprob(prefix, word_id)
    if word_lp == -math.inf:
        return []
    if word_id == model.words.end_id:
        return finish_parse(close_sentence(prefix, model, word_lp), model, beams)

    shifted = [
        shift(prefix, model, word_id, tag, word_lp, tag_lp)
        for tag, tag_lp in enumerate(model.tag_logprobs(prefix, word_id))
        if tag_lp > -math.inf
    ]
    results: List[WordParsePrefix] = []
    frontier = _within(shifted, beams.phase_beam)
    while frontier:
        adjoined: List[WordParsePrefix] = []
        for state in frontier:
            for event, lp in model.action_logprobs(state).items():
                if lp == -math.inf:
                    continue
                action = ParserAction.from_event(event)
                nxt = apply_action(state, action, model, logprob=lp)
                (results if action.is_null else adjoined).append(nxt)
        frontier = _within(adjoined, beams.phase_beam)
    return results


def finish_parse(prefix: WordParsePrefix, model: SLModel, beams: BeamConfig) -> List[WordParsePrefix]:
    """Adjoin the remaining heads after ``</s>`` until one root is left."""
    if prefix.complete:
        return [prefix]
    done: List[WordParsePrefix] = []
    frontier = [prefix]
    while frontier:
        adjoined: List[WordParsePrefix] = []
        for state in frontier:
            for event, lp in model.action_logprobs(state, end_phase=True).items():
                if lp == -math.inf:
                    continue
                nxt = apply_action(state, ParserAction.from_event(event), model, end_phase=True, logprob=lp)
                (done if nxt.complete else adjoined).append(nxt)
        frontier = _within(adjoined, beams.phase_beam)
    return done


def advance_stack(
    stack: Sequence[WordParsePrefix],
    model: SLModel,
    word: int,
    beams: BeamConfig,
) -> List[WordParsePrefix]:
    extended: List[WordParsePrefix] = []
    for prefix in stack:
        extended.extend(extend_with_word(prefix, model, word, beams))
    return prune_stack(extended, beams)


# ----------------------------------------------------------------------
# Word probabilities
# ----------------------------------------------------------------------

def posterior_weights(stack: Sequence[WordParsePrefix]) -> np.ndarray:
    """rho over the stack entries."""
    logps = np.array([p.logprob for p in stack])
    return np.exp(logps - logsumexp(logps))


def slm_word_logprob(
    stack: Sequence[WordParsePrefix],
    model: SLModel,
    word: Union[int, str],
    position: int = 0,
) -> float:
    """
    log P(word | W_k) over the surviving prefixes.

    Raises:
        SearchStarvationError: empty stack.
    """
    if not stack:
        raise SearchStarvationError(position)
    word_id = _word_id(model, word)
    if len(stack) == 1:
        return model.word_logprob(stack[0], word_id)
    joint = [p.logprob + model.word_logprob(p, word_id) for p in stack]
    return float(logsumexp(joint) - logsumexp([p.logprob for p in stack]))


def slm_word_prob(stacks: StackSet, model: SLModel, word: Union[int, str]) -> float:
    """P(word | W_k) for the top stack of ``stacks``."""
    return math.exp(slm_word_logprob(stacks.current, model, word, stacks.k))


def slm_sentence_ppl(
    model: SLModel,
    sentence: Sequence[str],
    beams: Optional[BeamConfig] = None,
) -> Tuple[float, List[float]]:
    """
    Left-to-right log-probability of ``sentence`` with ``</s>``.

    Returns:
        (total log-probability, per-token log-probabilities)

    Raises:
        SearchStarvationError: all prefixes died at some position.
        OutOfVocabularyError: a token outside a closed vocabulary.
    """
    beams = beams or BeamConfig()
    ids = model.words.encode_sentence(sentence)
    stack: List[WordParsePrefix] = [initial_prefix()]
    per_word: List[float] = []
    for position, word in enumerate(ids):
        per_word.append(slm_word_logprob(stack, model, word, position))
        stack = advance_stack(stack, model, word, beams)
        if not stack:
            raise SearchStarvationError(position + 1)
    per_word.append(slm_word_logprob(stack, model, model.words.end_id, len(ids)))
    return math.fsum(per_word), per_word


def corpus_ppl(model: SLModel, corpus: Sequence[Sequence[str]], beams: Optional[BeamConfig] = None) -> float:
    total = 0.0
    n_tokens = 0
    for sentence in corpus:
        logp, per_word = slm_sentence_ppl(model, sentence, beams)
        total += logp
        n_tokens += len(per_word)
    if n_tokens == 0:
        raise ValueError("Empty corpus")
    return math.exp(-total / n_tokens)


# ----------------------------------------------------------------------
# Complete parses
# ----------------------------------------------------------------------

def complete_parses(
    model: SLModel,
    sentence: Sequence[str],
    beams: Optional[BeamConfig] = None,
) -> List[WordParsePrefix]:
    """
    Surviving complete parses, best first.

    Raises:
        ValueError: empty sentence.
        SearchStarvationError: nothing survives to the end.
    """
    if not sentence:
        raise ValueError("Cannot parse an empty sentence")
    beams = beams or BeamConfig()
    ids = model.words.encode_sentence(sentence)
    stack: List[WordParsePrefix] = [initial_prefix()]
    for position, word in enumerate(ids):
        stack = advance_stack(stack, model, word, beams)
        if not stack:
            raise SearchStarvationError(position + 1)
    final = advance_stack(stack, model, model.words.end_id, beams)
    if not final:
        raise SearchStarvationError(len(ids) + 1, "No complete parse survives; widen the beams")
    return final


def best_parse(
    model: SLModel,
    sentence: Sequence[str],
    beams: Optional[BeamConfig] = None,
) -> TreebankTree:
    """Highest-probability complete parse; ties go to the smaller derivation."""
    return tree_from_derivation(model, complete_parses(model, sentence, beams)[0].derivation)


def parse_corpus(
    model: SLModel,
    corpus: Sequence[Sequence[str]],
    beams: Optional[BeamConfig] = None,
) -> Tuple[List[TreebankTree], Dict[int, str]]:
    """
    Best parse of every sentence; failures are logged and reported by index.
    """
    trees: List[TreebankTree] = []
    failures: Dict[int, str] = {}
    for index, sentence in enumerate(corpus):
        try:
            trees.append(best_parse(model, sentence, beams))
        except SearchStarvationError as exc:
            logger.warning("Sentence %d: %s", index, exc)
            failures[index] = str(exc)
    return trees, failures
