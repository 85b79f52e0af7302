"""
Seeded synthetic data for the end-to-end pipeline.

A small hand-written grammar produces treebank trees in Treebank
tokenization ("do n't", "it 's"). The CSR corpus and references are the same
kind of sentences with the token map undone, and each lattice is a chain
over a reference sentence with confusable alternatives and skip links.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Sequence, Set

from src.lattice.lattice import Lattice, Link, write_lattice_file
from src.text.token_map import TokenMap, denormalize
from src.text.treebank import TreebankTree, read_treebank, write_treebank
from src.utils.storage import format_corpus, write_text_atomic

logger = logging.getLogger(__name__)

PRONOUNS = ("i", "you", "we", "they")
NOUNS = ("dog", "cat", "house", "car", "game", "team", "book")
ADJECTIVES = ("big", "old", "good", "new", "small")
VERBS = {"like": "likes", "see": "sees", "want": "wants", "need": "needs"}
PREPOSITIONS = ("in", "near", "with")
STATES = ("happy", "tired", "ready", "late")

# 'll only splits after these pronouns in the default token map
WILL_SUBJECTS = ("i", "you", "we")
BE_FORMS = {"i": "'m", "you": "'re", "we": "'re", "they": "'re"}


@dataclass
class ToyConfig:
    seed: int = 13
    n_trees: int = 200
    n_extra_sentences: int = 200
    n_test_sentences: int = 40
    n_lattices: int = 20
    alternative_prob: float = 0.7
    skip_prob: float = 0.25
    frame_seconds: float = 0.3


@dataclass
class ToyData:
    """Paths written by :func:`write_toy_data`."""

    treebank: Path
    corpus: Path
    test: Path
    refs: Path
    lattices: Path


class ToyGrammar:
    """Generator of bracketed sentences; all randomness goes through ``rng``."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def noun_phrase(self) -> str:
        noun = self.rng.choice(NOUNS)
        if self.rng.random() < 0.4:
            return f"(NP (DT the) (JJ {self.rng.choice(ADJECTIVES)}) (NN {noun}))"
        return f"(NP (DT the) (NN {noun}))"

    def object_phrase(self) -> str:
        if self.rng.random() < 0.15:
            return "(NP (PRP it))"
        return self.noun_phrase()

    def modifier(self) -> str:
        if self.rng.random() < 0.3:
            return f" (PP (IN {self.rng.choice(PREPOSITIONS)}) {self.noun_phrase()})"
        return ""

    def pronoun_clause(self, pronoun: str) -> str:
        verb = self.rng.choice(sorted(VERBS))
        choice = self.rng.randrange(5)
        if choice == 0:
            vp = f"(VP (VBP {verb}) {self.object_phrase()}{self.modifier()})"
        elif choice == 1:
            vp = f"(VP (VBP do) (RB n't) (VB {verb}) {self.object_phrase()})"
        elif choice == 2:
            vp = f"(VP (VBD did) (RB n't) (VB {verb}) {self.object_phrase()})"
        elif choice == 3 and pronoun in WILL_SUBJECTS:
            vp = f"(VP (MD 'll) (VP (VB {verb}) {self.object_phrase()}))"
        else:
            vp = f"(VP (VBP {BE_FORMS[pronoun]}) (ADJP (JJ {self.rng.choice(STATES)})))"
        return f"(S (NP (PRP {pronoun})) {vp})"

    def noun_clause(self) -> str:
        verb = self.rng.choice(sorted(VERBS))
        choice = self.rng.randrange(3)
        if choice == 0:
            vp = f"(VP (VBZ {VERBS[verb]}) {self.object_phrase()}{self.modifier()})"
        elif choice == 1:
            vp = f"(VP (VBZ does) (RB n't) (VB {verb}) {self.object_phrase()})"
        else:
            vp = f"(VP (VBD did) (RB n't) (VB {verb}) {self.object_phrase()})"
        return f"(S {self.noun_phrase()} {vp})"

    def sentence(self) -> str:
        roll = self.rng.random()
        if roll < 0.5:
            return self.pronoun_clause(self.rng.choice(PRONOUNS))
        if roll < 0.85:
            return self.noun_clause()
        if roll < 0.93:
            return f"(S (NP (PRP it)) (VP (VBZ 's) (ADJP (JJ {self.rng.choice(ADJECTIVES)}))))"
        return f"(S (NP (DT that)) (VP (VBZ 's) {self.noun_phrase()}))"

    def trees(self, n: int) -> List[TreebankTree]:
        return read_treebank("\n".join(self.sentence() for _ in range(n)))


def make_lattice(
    utterance: str,
    reference: Sequence[str],
    alternatives: Sequence[str],
    rng: random.Random,
    config: ToyConfig,
) -> Lattice:
    """Chain lattice over ``reference`` plus confusions and two-slot skip links."""
    n = len(reference)
    nodes = {i: round(i * config.frame_seconds, 6) for i in range(n + 1)}
    links: List[Link] = []

    def add(start: int, end: int, word: str, am_range: tuple) -> None:
        links.append(Link(len(links), start, end, word, -rng.uniform(*am_range), -rng.uniform(0.5, 4.0)))

    for i, word in enumerate(reference):
        add(i, i + 1, word, (2.0, 6.0))
        if rng.random() < config.alternative_prob:
            add(i, i + 1, rng.choice([w for w in alternatives if w != word]), (2.5, 7.0))
        if i + 2 <= n and rng.random() < config.skip_prob:
            add(i, i + 2, rng.choice(alternatives), (4.0, 10.0))
    return Lattice.from_links(nodes, links, utterance)


def generate(config: ToyConfig, token_map: TokenMap):
    """
    Build every toy artifact in memory.

    Returns:
        (trees, csr_corpus, csr_test, refs, lattices) where ``refs`` is a
        list of ``(utterance id, CSR tokens)``.
    """
    rng = random.Random(config.seed)
    grammar = ToyGrammar(rng)
    trees = grammar.trees(config.n_trees)
    extra = grammar.trees(config.n_extra_sentences)
    csr_corpus = [denormalize(t.words(), token_map) for t in trees + extra]
    known: Set[str] = {w for s in csr_corpus for w in s}

    def covered(n: int) -> List[List[str]]:
        out: List[List[str]] = []
        while len(out) < n:
            sentence = denormalize(grammar.trees(1)[0].words(), token_map)
            if known.issuperset(sentence):
                out.append(sentence)
        return out

    csr_test = covered(config.n_test_sentences)
    ref_sentences = covered(config.n_lattices)
    alternatives = sorted(known)
    refs = [(f"utt{i:03d}", s) for i, s in enumerate(ref_sentences)]
    lattices = [make_lattice(utt, s, alternatives, rng, config) for utt, s in refs]
    return trees, csr_corpus, csr_test, refs, lattices


def write_toy_data(
    out_dir: Path | str,
    config: ToyConfig | None = None,
    token_map: TokenMap | None = None,
    track: Callable[[Path], Path] | None = None,
) -> ToyData:
    """Generate and write the toy data; ``track`` sees every file path before it is written."""
    config = config or ToyConfig()
    token_map = token_map or TokenMap.default()
    track = track or (lambda path: path)
    out_dir = Path(out_dir)
    trees, corpus, test, refs, lattices = generate(config, token_map)
    data = ToyData(
        treebank=out_dir / "treebank.txt",
        corpus=out_dir / "corpus.txt",
        test=out_dir / "test.txt",
        refs=out_dir / "refs.txt",
        lattices=out_dir / "lattices",
    )
    write_text_atomic(track(data.treebank), write_treebank(trees))
    write_text_atomic(track(data.corpus), format_corpus(corpus))
    write_text_atomic(track(data.test), format_corpus(test))
    write_text_atomic(track(data.refs), "".join(f"{utt} {' '.join(s)}\n" for utt, s in refs))
    for lattice in lattices:
        path = track(data.lattices / f"{lattice.utterance}.lat")
        path.parent.mkdir(parents=True, exist_ok=True)
        write_lattice_file(lattice, path)
    logger.info(
        "Wrote toy data to %s: %d trees, %d corpus sentences, %d lattices",
        out_dir, len(trees), len(corpus), len(lattices),
    )
    return data
