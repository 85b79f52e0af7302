"""Shared fixtures and random data builders."""
import random
import sys
from pathlib import Path
from typing import List, Sequence

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.lattice.lattice import Lattice, Link
from src.models.deleted_interpolation import DIConfig
from src.models.slm import init_from_treebank
from src.text.token_map import TokenMap
from src.text.treebank import HeadRule, HeadRules, TreebankTree, binarize_and_headify, read_treebank

SMALL_TREEBANK = """
(S (NP (DT the) (NN cat)) (VP (VB sat)))
(S (NP (PRP i)) (VP (VBP do) (RB n't) (VB like) (NP (DT the) (NN dog))))
(S (NP (DT the) (JJ old) (NN dog)) (VP (VB sat)))
(S (NP (PRP it)) (VP (VBZ 's) (ADJP (JJ old))))
"""


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs over generated data")


@pytest.fixture
def token_map() -> TokenMap:
    return TokenMap.default()


@pytest.fixture
def head_rules() -> HeadRules:
    return HeadRules({
        "S": HeadRule("right", ("VP",)),
        "VP": HeadRule("left"),
        "NP": HeadRule("right"),
        "ADJP": HeadRule("right"),
    })


@pytest.fixture
def small_trees(head_rules) -> List[TreebankTree]:
    return [binarize_and_headify(tree, head_rules) for tree in read_treebank(SMALL_TREEBANK)]


# ── random builders ─────────────────────────────────────────────────────────

def random_headed_tree(
    rng: random.Random,
    n_words: int,
    words: Sequence[str] = ("a", "b", "c"),
    tags: Sequence[str] = ("T", "U"),
    labels: Sequence[str] = ("N", "M"),
) -> str:
    """Bracketed binary tree with @L/@R head marks over ``n_words`` random leaves."""
    if n_words == 1:
        return f"({rng.choice(tags)} {rng.choice(words)})"
    split = rng.randint(1, n_words - 1)
    label = rng.choice(labels) + rng.choice(("@L", "@R"))
    left = random_headed_tree(rng, split, words, tags, labels)
    right = random_headed_tree(rng, n_words - split, words, tags, labels)
    return f"({label} {left} {right})"


def random_slm(seed: int, n_trees: int = 12, max_len: int = 4, **kwargs):
    """Small SLM trained on random headed trees; every tag and label occurs."""
    rng = random.Random(seed)
    texts = [
        "(N@L (T a) (U b))",
        "(M@R (U c) (T a))",
    ]
    texts += [random_headed_tree(rng, rng.randint(1, max_len), **kwargs) for _ in range(n_trees)]
    trees = read_treebank("\n".join(texts))
    return init_from_treebank(trees, DIConfig(heldout_fraction=0.25))


def random_lattice(
    rng: random.Random,
    max_nodes: int = 12,
    max_links: int = 25,
    words: Sequence[str] = ("a", "b", "c", "d"),
) -> Lattice:
    """Random DAG over a chain 0 -> 1 -> ... -> n-1 plus forward shortcut links."""
    n_nodes = rng.randint(2, max_nodes)
    nodes = {i: float(i) for i in range(n_nodes)}
    pairs = [(i, i + 1) for i in range(n_nodes - 1)]
    extra = rng.randint(0, max(0, max_links - len(pairs)))
    for _ in range(extra):
        i = rng.randrange(n_nodes - 1)
        j = rng.randint(i + 1, n_nodes - 1)
        pairs.append((i, j))
    links = [
        Link(k, i, j, rng.choice(words), rng.uniform(-10.0, 0.0), rng.uniform(-5.0, 0.0))
        for k, (i, j) in enumerate(pairs)
    ]
    return Lattice.from_links(nodes, links, f"rand{rng.randrange(10**6)}")


@pytest.fixture
def lattice_factory():
    return random_lattice


@pytest.fixture
def slm_factory():
    return random_slm


@pytest.fixture
def headed_tree_factory():
    return random_headed_tree
