"""
Structured language model: hypothesis state and component models.

A sentence is generated left to right. At each position the model predicts
the next word from the two rightmost exposed heads, tags it, pushes it as a
new head and then runs a parser phase of adjoin actions closed by a Null
transition:

    P(W, T) = prod_k P(w_k | h0, h-1) * P(t_k | w_k, h0.tag, h-1.tag)
                     * prod_i P(p_i | h0, h-1)

``<s>`` is not an exposed head. It is the conditioning sentinel to the left
of the leftmost head, and positions further left use the boundary sentinel.
After ``</s>`` is predicted only adjoin actions are legal until a single root
remains.
"""
from __future__ import annotations

import io
import logging
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

from scipy.special import logsumexp

from src.models.deleted_interpolation import (
    ContextChain,
    DIConfig,
    DIModel,
    Event,
    split_heldout,
)
from src.models.trigram import BOUNDARY, TrigramLM
from src.text.treebank import TreebankTree
from src.text.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"SLMODEL\n"
FORMAT_VERSION = 1

# Label symbol of the <s> sentinel head.
SB_SYMBOL = -2
# Tag slot of the </s> step in a derivation.
END_TAG = -1
NULL = 0

PREDICTOR_CHAIN = ContextChain(((0, 1, 2, 3), (0, 1), ()))
TAGGER_CHAIN = ContextChain(((0, 1, 2), (0, 1), (0,), ()))
PARSER_CHAIN = ContextChain(((0, 1, 2, 3), (0, 1), ()))


class IllegalActionError(ValueError):
    """Parser action not allowed in the current state."""


class ExposedHead(NamedTuple):
    """(headword, label); ``label`` is a POS tag id when ``leaf`` else a non-terminal id."""

    word: int
    label: int
    leaf: bool

    @property
    def symbol(self) -> int:
        """Single integer label: tags are >= 0, non-terminals fold to <= -3."""
        return self.label if self.leaf else -3 - self.label


@dataclass(frozen=True)
class ParserAction:
    """AdjoinLeft(label), AdjoinRight(label) or Null."""

    kind: str
    label: int = -1

    @classmethod
    def null(cls) -> "ParserAction":
        return cls("null")

    @classmethod
    def adjoin_left(cls, label: int) -> "ParserAction":
        return cls("left", label)

    @classmethod
    def adjoin_right(cls, label: int) -> "ParserAction":
        return cls("right", label)

    @classmethod
    def from_event(cls, event: int) -> "ParserAction":
        if event == NULL:
            return cls.null()
        label, side = divmod(event - 1, 2)
        return cls("left" if side == 0 else "right", label)

    @property
    def event(self) -> int:
        if self.kind == "null":
            return NULL
        return 1 + 2 * self.label + (0 if self.kind == "left" else 1)

    @property
    def is_null(self) -> bool:
        return self.kind == "null"

    def __str__(self) -> str:
        return "Null" if self.is_null else f"Adjoin{self.kind.title()}({self.label})"


class Step(NamedTuple):
    """One word position of a derivation: shifted word, its tag and the adjoins that followed."""

    word: int
    tag: int
    actions: Tuple[int, ...] = ()


Derivation = Tuple[Step, ...]


@dataclass(frozen=True)
class WordParsePrefix:
    """
    Word k-prefix with its partial parse.

    ``heads`` lists the exposed heads left to right (``heads[-1]`` is h0).
    ``derivation`` is the action record; replaying it from the empty prefix
    reproduces ``heads`` and ``logprob`` exactly.
    """

    k: int = 0
    heads: Tuple[ExposedHead, ...] = ()
    logprob: float = 0.0
    derivation: Derivation = ()
    complete: bool = False

    def exposed(self, begin_id: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        """(h0, h-1) as (word, symbol) pairs, padded with the sentinels."""
        padded = [(BOUNDARY, BOUNDARY), (begin_id, SB_SYMBOL)]
        padded.extend((h.word, h.symbol) for h in self.heads[-2:])
        return padded[-1], padded[-2]

    def sort_key(self) -> Tuple[float, Derivation]:
        return (-self.logprob, self.derivation)


class DegenerateModel:
    """Distribution putting all mass on one event, whatever the context."""

    def __init__(self, vocab_size: int, event: int = 0):
        self.vocab_size = vocab_size
        self.event = event

    def logprob(self, context, event: int) -> float:
        return 0.0 if event == self.event else -math.inf

    def to_state(self) -> dict:
        return {"degenerate": True, "vocab_size": self.vocab_size, "event": self.event}


ComponentModel = Union[DIModel, DegenerateModel]


@dataclass
class SLModel:
    """Vocabularies plus the predictor, tagger and parser conditionals."""

    words: Vocabulary
    tags: Vocabulary
    labels: Vocabulary
    predictor: ComponentModel
    tagger: ComponentModel
    parser: ComponentModel

    @property
    def n_actions(self) -> int:
        return 1 + 2 * len(self.labels)

    # ------------------------------------------------------------------
    # Component conditionals
    # ------------------------------------------------------------------

    def predictor_context(self, prefix: WordParsePrefix) -> Tuple[int, int, int, int]:
        h0, h1 = prefix.exposed(self.words.begin_id)
        return (h0[0], h0[1], h1[0], h1[1])

    def word_logprob(self, prefix: WordParsePrefix, word: int) -> float:
        return self.predictor.logprob(self.predictor_context(prefix), word)

    def tag_logprobs(self, prefix: WordParsePrefix, word: int) -> List[float]:
        """log P(t | w, h0.tag, h-1.tag) for every tag id."""
        if len(self.tags) == 1:
            return [0.0]
        h0, h1 = prefix.exposed(self.words.begin_id)
        context = (word, h0[1], h1[1])
        return [self.tagger.logprob(context, t) for t in range(len(self.tags))]

    def legal_actions(self, n_heads: int, end_phase: bool) -> Tuple[int, ...]:
        if n_heads < 2:
            return () if end_phase else (NULL,)
        first = 1 if end_phase else 0
        return tuple(range(first, self.n_actions))

    def action_logprobs(self, prefix: WordParsePrefix, end_phase: bool = False) -> Dict[int, float]:
        """
        Parser conditional restricted to legal actions and renormalized.

        When the model gives no mass to any legal action they become
        equiprobable.
        """
        legal = self.legal_actions(len(prefix.heads), end_phase)
        if len(legal) == 1:
            return {legal[0]: 0.0}
        if not legal:
            return {}
        context = self.predictor_context(prefix)
        raw = {a: self.parser.logprob(context, a) for a in legal}
        if len(legal) == self.n_actions:
            return raw
        norm = float(logsumexp(list(raw.values())))
        if math.isinf(norm):
            uniform = -math.log(len(legal))
            return {a: uniform for a in legal}
        return {a: lp - norm for a, lp in raw.items()}

    # ------------------------------------------------------------------
    # Derived models
    # ------------------------------------------------------------------

    def with_word_vocabulary(self, words: Vocabulary) -> "SLModel":
        """Same model over a larger word vocabulary whose ids extend the current ones."""
        if words.tokens[: len(self.words)] != self.words.tokens:
            raise ValueError("New word vocabulary must preserve the existing ids")
        predictor = self.predictor
        if isinstance(predictor, DIModel):
            predictor = predictor.with_vocab_size(len(words))
        else:
            predictor = DegenerateModel(len(words), predictor.event)
        return SLModel(words, self.tags, self.labels, predictor, self.tagger, self.parser)

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path: Path | str) -> None:
        buffer = io.BytesIO()
        buffer.write(MAGIC)
        buffer.write(f"{FORMAT_VERSION}\n".encode("ascii"))
        payload = {
            "words": list(self.words.tokens),
            "closed": self.words.closed,
            "tags": list(self.tags.tokens),
            "labels": list(self.labels.tokens),
            "predictor": _component_to_state(self.predictor),
            "tagger": _component_to_state(self.tagger),
            "parser": _component_to_state(self.parser),
        }
        pickle.dump(payload, buffer, protocol=pickle.HIGHEST_PROTOCOL)
        Path(path).write_bytes(buffer.getvalue())
        logger.info("Saved SLM to %s", path)

    @classmethod
    def load(cls, path: Path | str) -> "SLModel":
        data = Path(path).read_bytes()
        if not data.startswith(MAGIC):
            raise ValueError(f"{path}: not an SLM file (bad magic header)")
        version_line, _, payload = data[len(MAGIC):].partition(b"\n")
        if int(version_line) != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported SLM version {version_line.decode()}")
        state = pickle.loads(payload)
        return cls(
            Vocabulary(state["words"], reserved=(), closed=state["closed"]),
            Vocabulary(state["tags"], reserved=()),
            Vocabulary(state["labels"], reserved=()),
            _component_from_state(state["predictor"]),
            _component_from_state(state["tagger"]),
            _component_from_state(state["parser"]),
        )


def _component_to_state(model: ComponentModel):
    if isinstance(model, DegenerateModel):
        return model.to_state()
    return model.to_bytes()


def _component_from_state(state) -> ComponentModel:
    if isinstance(state, dict) and state.get("degenerate"):
        return DegenerateModel(state["vocab_size"], state["event"])
    return DIModel.from_bytes(state)


# ----------------------------------------------------------------------
# Transitions
# ----------------------------------------------------------------------

def initial_prefix() -> WordParsePrefix:
    return WordParsePrefix()


def shift(prefix: WordParsePrefix, model: SLModel, word: int, tag: int,
          word_logprob: float, tag_logprob: float) -> WordParsePrefix:
    """Push ``word``/``tag`` as a new leaf head and open a new derivation step."""
    logprob = prefix.logprob + word_logprob
    logprob = logprob + tag_logprob
    return WordParsePrefix(
        k=prefix.k + 1,
        heads=prefix.heads + (ExposedHead(word, tag, True),),
        logprob=logprob,
        derivation=prefix.derivation + (Step(word, tag),),
    )


def adjoin_heads(heads: Tuple[ExposedHead, ...], action: ParserAction) -> Tuple[ExposedHead, ...]:
    """Merge the two rightmost heads under ``action.label``."""
    if len(heads) < 2:
        raise IllegalActionError(f"{action} needs at least 2 exposed heads, have {len(heads)}")
    left, right = heads[-2], heads[-1]
    word = left.word if action.kind == "left" else right.word
    return heads[:-2] + (ExposedHead(word, action.label, False),)


def apply_action(
    prefix: WordParsePrefix,
    action: ParserAction,
    model: SLModel,
    end_phase: bool = False,
    logprob: Optional[float] = None,
) -> WordParsePrefix:
    """
    Apply one parser action and add its log-probability.

    Null leaves the heads unchanged and closes the parser phase; it is not
    recorded in the derivation.

    Raises:
        IllegalActionError: adjoin with fewer than 2 exposed heads, or an
            action outside the legal set for this phase.
    """
    if action.is_null:
        if end_phase:
            raise IllegalActionError("Null is not legal in the end-of-sentence phase")
        if logprob is None:
            logprob = model.action_logprobs(prefix)[NULL]
        return WordParsePrefix(prefix.k, prefix.heads, prefix.logprob + logprob, prefix.derivation)
    heads = adjoin_heads(prefix.heads, action)
    if action.label >= len(model.labels):
        raise IllegalActionError(f"Unknown non-terminal label id {action.label}")
    if logprob is None:
        logprob = model.action_logprobs(prefix, end_phase)[action.event]
    last = prefix.derivation[-1]
    step = Step(last.word, last.tag, last.actions + (action.event,))
    return WordParsePrefix(
        prefix.k,
        heads,
        prefix.logprob + logprob,
        prefix.derivation[:-1] + (step,),
        complete=end_phase and len(heads) == 1,
    )


def close_sentence(prefix: WordParsePrefix, model: SLModel, end_logprob: float) -> WordParsePrefix:
    """Add the ``</s>`` prediction and open the end-of-sentence phase."""
    return WordParsePrefix(
        prefix.k,
        prefix.heads,
        prefix.logprob + end_logprob,
        prefix.derivation + (Step(model.words.end_id, END_TAG),),
        complete=len(prefix.heads) == 1,
    )


def replay(model: SLModel, derivation: Sequence[Step]) -> WordParsePrefix:
    """Rebuild a prefix from its action record using the search's own arithmetic."""
    prefix = initial_prefix()
    end_id = model.words.end_id
    for step in derivation:
        if step.word == end_id:
            prefix = close_sentence(prefix, model, model.word_logprob(prefix, end_id))
            for event in step.actions:
                prefix = apply_action(prefix, ParserAction.from_event(event), model, end_phase=True)
            continue
        word_lp = model.word_logprob(prefix, step.word)
        tag_lp = model.tag_logprobs(prefix, step.word)[step.tag]
        prefix = shift(prefix, model, step.word, step.tag, word_lp, tag_lp)
        for event in step.actions:
            prefix = apply_action(prefix, ParserAction.from_event(event), model)
        prefix = apply_action(prefix, ParserAction.null(), model)
    return prefix


# ----------------------------------------------------------------------
# Trees <-> derivations
# ----------------------------------------------------------------------

def derivation_from_tree(tree: TreebankTree, words: Vocabulary, tags: Vocabulary,
                         labels: Vocabulary) -> Derivation:
    """
    Unique derivation of a binarized, head-annotated tree.

    Adjoins are taken as soon as both children are complete, so the final
    step after ``</s>`` is empty for treebank trees.

    Raises:
        ValueError: a node that is not binary or carries no head annotation.
    """
    steps: List[Tuple[int, int, List[int]]] = []

    def visit(node: TreebankTree) -> None:
        if node.is_leaf:
            steps.append((words.encode(node.word), tags.encode(node.label), []))  # type: ignore[arg-type]
            return
        if len(node.children) != 2 or node.head_child is None:
            raise ValueError(f"Node {node.label} is not a binary head-annotated node")
        visit(node.children[0])
        visit(node.children[1])
        label = labels.encode(node.label)
        action = ParserAction.adjoin_left(label) if node.head_child == 0 else ParserAction.adjoin_right(label)
        steps[-1][2].append(action.event)

    visit(tree)
    return tuple(Step(w, t, tuple(a)) for w, t, a in steps) + (Step(words.end_id, END_TAG),)


def tree_from_derivation(model: SLModel, derivation: Sequence[Step]) -> TreebankTree:
    """Rebuild the parse tree of a complete derivation."""
    stack: List[TreebankTree] = []
    for step in derivation:
        if step.word != model.words.end_id:
            stack.append(TreebankTree(model.tags.decode(step.tag), word=model.words.decode(step.word)))
        for event in step.actions:
            action = ParserAction.from_event(event)
            if len(stack) < 2:
                raise IllegalActionError(f"{action} needs at least 2 subtrees")
            right = stack.pop()
            left = stack.pop()
            head_child = 0 if action.kind == "left" else 1
            stack.append(TreebankTree(
                model.labels.decode(action.label),
                (left, right),
                headword=(left, right)[head_child].head,
                head_child=head_child,
            ))
    if len(stack) != 1:
        raise ValueError(f"Derivation leaves {len(stack)} subtrees, not a complete parse")
    return stack[0]


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------

@dataclass
class ComponentEvents:
    """Weighted training events for the three component models."""

    predictor: List[Event] = field(default_factory=list)
    tagger: List[Event] = field(default_factory=list)
    parser: List[Event] = field(default_factory=list)

    def extend(self, other: "ComponentEvents") -> None:
        self.predictor.extend(other.predictor)
        self.tagger.extend(other.tagger)
        self.parser.extend(other.parser)

    def __len__(self) -> int:
        return len(self.predictor)


def derivation_events(derivation: Sequence[Step], begin_id: int, end_id: int,
                      weight: float = 1.0) -> ComponentEvents:
    """
    Events of every factor in a derivation.

    One predictor event per word plus ``</s>``, one tagger event per word and
    one parser event per adjoin and per closing Null (end-phase adjoins
    included, the final implicit Null excluded).
    """
    events = ComponentEvents()
    prefix = initial_prefix()

    def context() -> Tuple[int, int, int, int]:
        h0, h1 = prefix.exposed(begin_id)
        return (h0[0], h0[1], h1[0], h1[1])

    for step in derivation:
        ctx = context()
        events.predictor.append(Event(ctx, step.word, weight))
        if step.word == end_id:
            end_phase = True
        else:
            end_phase = False
            events.tagger.append(Event((step.word, ctx[1], ctx[3]), step.tag, weight))
            prefix = WordParsePrefix(prefix.k + 1, prefix.heads + (ExposedHead(step.word, step.tag, True),))
        for event in step.actions:
            events.parser.append(Event(context(), event, weight))
            prefix = WordParsePrefix(prefix.k, adjoin_heads(prefix.heads, ParserAction.from_event(event)))
        if not end_phase:
            events.parser.append(Event(context(), NULL, weight))
    return events


def train_components(
    words: Vocabulary,
    tags: Vocabulary,
    labels: Vocabulary,
    train: ComponentEvents,
    heldout: ComponentEvents,
    config: Optional[DIConfig] = None,
) -> SLModel:
    """Fit the three DIModels from accumulated events."""
    n_actions = 1 + 2 * len(labels)
    predictor = DIModel.train(train.predictor, PREDICTOR_CHAIN, heldout.predictor, len(words), config)
    tagger = DIModel.train(train.tagger, TAGGER_CHAIN, heldout.tagger, len(tags), config)
    parser = DIModel.train(train.parser, PARSER_CHAIN, heldout.parser, n_actions, config)
    return SLModel(words, tags, labels, predictor, tagger, parser)


def init_from_treebank(
    trees: Sequence[TreebankTree],
    config: Optional[DIConfig] = None,
    words: Optional[Vocabulary] = None,
) -> SLModel:
    """
    Gather initial statistics from binarized, head-annotated trees.

    Raises:
        ValueError: empty tree list or a tree that is not binary/headed.
    """
    if not trees:
        raise ValueError("Cannot initialize an SLM from an empty treebank")
    config = config or DIConfig()
    words = words or Vocabulary.from_sentences(tree.words() for tree in trees)
    tags = Vocabulary((tag for tree in trees for tag in tree.tags()), reserved=())
    labels = Vocabulary((label for tree in trees for label in tree.labels()), reserved=())

    derivations = [derivation_from_tree(tree, words, tags, labels) for tree in trees]
    train_part, heldout_part = split_heldout(derivations, config.heldout_fraction)
    train_events = ComponentEvents()
    for derivation in train_part:
        train_events.extend(derivation_events(derivation, words.begin_id, words.end_id))
    heldout_events = ComponentEvents()
    for derivation in heldout_part:
        heldout_events.extend(derivation_events(derivation, words.begin_id, words.end_id))

    model = train_components(words, tags, labels, train_events, heldout_events, config)
    logger.info(
        "Initialized SLM from %d trees: |W|=%d |T|=%d |NT|=%d",
        len(trees), len(words), len(tags), len(labels),
    )
    return model


def trigram_equivalent(trigram: TrigramLM) -> SLModel:
    """
    SLM that scores exactly like ``trigram``.

    Tags and labels collapse to one symbol, the parser always takes Null, and
    the predictor is the trigram's tables re-keyed onto head contexts.
    """
    begin_id = trigram.vocab.begin_id

    def symbol(word: int) -> int:
        if word == begin_id:
            return SB_SYMBOL
        if word == BOUNDARY:
            return BOUNDARY
        return 0

    def mapper(context: Tuple[int, ...]) -> Tuple[int, ...]:
        out: List[int] = []
        for word in context:
            out.extend((word, symbol(word)))
        return tuple(out)

    single = Vocabulary(["X"], reserved=())
    predictor = trigram.model.remap_contexts(PREDICTOR_CHAIN, mapper)
    return SLModel(
        trigram.vocab,
        single,
        single,
        predictor,
        DegenerateModel(1),
        DegenerateModel(3, NULL),
    )

