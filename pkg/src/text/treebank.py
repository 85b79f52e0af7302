"""Treebank reading, writing, binarization and head assignment.

Trees are s-expressions: ``(LABEL child child ...)`` for internal nodes and
``(TAG word)`` for preterminals. A head-annotated binary node is written with
its head direction as a label suffix, ``(NP@R (DT the) (NN cat))``.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from nltk.tokenize import SExprTokenizer
from nltk.tree import Tree

logger = logging.getLogger(__name__)

DEFAULT_HEAD_RULES = Path("data_files/head_rules.txt")

HEAD_SUFFIXES = {"@L": 0, "@R": 1}

# nltk reports positions as "at index N" (trees) or "at char N" (brackets)
_OFFSET_RE = re.compile(r"at (?:index|char) (\d+)")


class TreebankParseError(ValueError):
    """Malformed bracketed tree."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TreebankTree:
    """
    Parse tree node.

    Preterminals have ``word`` set and no children. After head assignment
    internal nodes carry ``headword`` and ``head_child`` (index of the child
    the head percolates from).
    """

    label: str
    children: Tuple["TreebankTree", ...] = ()
    word: Optional[str] = None
    headword: Optional[str] = None
    head_child: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    def leaves(self) -> List["TreebankTree"]:
        if self.is_leaf:
            return [self]
        out: List[TreebankTree] = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def words(self) -> List[str]:
        return [leaf.word for leaf in self.leaves()]  # type: ignore[misc]

    def tags(self) -> List[str]:
        return [leaf.label for leaf in self.leaves()]

    def internal_nodes(self) -> Iterator["TreebankTree"]:
        if self.is_leaf:
            return
        yield self
        for child in self.children:
            yield from child.internal_nodes()

    def labels(self) -> List[str]:
        return [node.label for node in self.internal_nodes()]

    @property
    def head(self) -> Optional[str]:
        """Headword of this subtree (the word itself for a leaf)."""
        return self.word if self.is_leaf else self.headword

    @property
    def is_binary(self) -> bool:
        if self.is_leaf:
            return True
        return len(self.children) == 2 and all(c.is_binary for c in self.children)

    def to_nltk(self) -> Tree:
        """nltk tree with head directions folded into the labels."""
        if self.is_leaf:
            return Tree(self.label, [self.word])
        label = self.label
        if self.head_child is not None and len(self.children) == 2:
            label += "@L" if self.head_child == 0 else "@R"
        return Tree(label, [child.to_nltk() for child in self.children])

    def to_bracketed(self) -> str:
        return self.to_nltk().pformat(margin=1e100)

    def __str__(self) -> str:
        return self.to_bracketed()


# ---------------------------------------------------------------------------
# Reading / writing
# ---------------------------------------------------------------------------

def _line_at(text: str, offset: int) -> int:
    return text.count("\n", 0, max(0, offset)) + 1


def _error_offset(exc: ValueError) -> Optional[int]:
    match = _OFFSET_RE.search(str(exc))
    return int(match.group(1)) if match else None


def _from_nltk(node: Tree, line: int) -> TreebankTree:
    label = node.label()
    if not label:
        raise TreebankParseError("node without a label", line)
    if len(node) == 0:
        raise TreebankParseError(f"empty tree {label}", line)
    atoms = [child for child in node if isinstance(child, str)]
    if atoms:
        if len(node) == 1:
            return TreebankTree(label=label, word=atoms[0])
        raise TreebankParseError(f"unexpected atom {atoms[-1]!r} under {label}", line)
    children = tuple(_from_nltk(child, line) for child in node)
    for suffix, index in HEAD_SUFFIXES.items():
        if label.endswith(suffix) and len(children) == 2:
            return TreebankTree(
                label=label[: -len(suffix)],
                children=children,
                headword=children[index].head,
                head_child=index,
            )
    return TreebankTree(label=label, children=children)


def read_treebank(text: str) -> List[TreebankTree]:
    """
    Parse every top-level s-expression in ``text``.

    Raises:
        TreebankParseError: unbalanced brackets, stray atoms or empty trees,
            with the line the offending tree starts on.
    """
    try:
        chunks = SExprTokenizer(strict=True).tokenize(text)
    except ValueError as exc:
        offset = _error_offset(exc)
        if "open paren" in str(exc):
            opened = f" (tree opened on line {_line_at(text, offset)})" if offset is not None else ""
            raise TreebankParseError(f"unexpected end of input{opened}", text.count("\n") + 1) from exc
        raise TreebankParseError("unmatched ')'", _line_at(text, offset or 0)) from exc

    trees: List[TreebankTree] = []
    cursor = 0
    for chunk in chunks:
        chunk = chunk.strip()
        if not chunk:
            continue
        start = text.find(chunk, cursor)
        cursor = start + len(chunk)
        line = _line_at(text, start)
        if not chunk.startswith("("):
            raise TreebankParseError(f"unexpected {chunk.split()[0]!r} at top level", line)
        try:
            node = Tree.fromstring(chunk)
        except ValueError as exc:
            offset = _error_offset(exc)
            where = line if offset is None else _line_at(text, start + offset)
            raise TreebankParseError(str(exc).splitlines()[0], where) from exc
        trees.append(_from_nltk(node, line))
    return trees


def read_treebank_file(path: Path | str) -> List[TreebankTree]:
    return read_treebank(Path(path).read_text(encoding="utf-8"))


def write_treebank(trees: Sequence[TreebankTree]) -> str:
    return "".join(tree.to_bracketed() + "\n" for tree in trees)


# ---------------------------------------------------------------------------
# Head rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeadRule:
    """``direction`` is 'left' or 'right'; ``priority`` lists preferred child labels."""

    direction: str = "right"
    priority: Tuple[str, ...] = ()

    def select(self, children: Sequence[TreebankTree]) -> int:
        order = range(len(children)) if self.direction == "left" else range(len(children) - 1, -1, -1)
        for wanted in self.priority:
            for i in order:
                if children[i].label == wanted:
                    return i
        return 0 if self.direction == "left" else len(children) - 1


class HeadRules:
    """
    Head-percolation table ``label -> leftmost | rightmost | priority list``.

    File lines::

        VP<TAB>leftmost
        NP<TAB>right: NN NNS NP
    """

    def __init__(self, rules: Optional[Dict[str, HeadRule]] = None, default: HeadRule = HeadRule("right")):
        self.rules = dict(rules or {})
        self.default = default
        self._warned: set = set()

    @classmethod
    def from_text(cls, text: str) -> "HeadRules":
        rules: Dict[str, HeadRule] = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"head rules line {line_no}: expected 'LABEL<TAB>rule'")
            label, spec = parts
            rules[label] = _parse_head_rule(spec, line_no)
        return cls(rules)

    @classmethod
    def from_file(cls, path: Path | str = DEFAULT_HEAD_RULES) -> "HeadRules":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def head_index(self, label: str, children: Sequence[TreebankTree]) -> int:
        rule = self.rules.get(label)
        if rule is None:
            if label not in self._warned:
                self._warned.add(label)
                logger.warning("No head rule for label %s; using rightmost child", label)
            rule = self.default
        return rule.select(children)


def _parse_head_rule(spec: str, line_no: int) -> HeadRule:
    spec = spec.strip()
    if spec == "leftmost":
        return HeadRule("left")
    if spec == "rightmost":
        return HeadRule("right")
    if ":" in spec:
        direction, labels = spec.split(":", 1)
        direction = direction.strip()
        if direction in ("left", "right"):
            return HeadRule(direction, tuple(labels.split()))
    raise ValueError(f"head rules line {line_no}: unknown rule {spec!r}")


# ---------------------------------------------------------------------------
# Binarization
# ---------------------------------------------------------------------------

def binarize_and_headify(tree: TreebankTree, rules: HeadRules) -> TreebankTree:
    """
    Binarize around the head child and annotate headwords.

    The head child is the pivot: right siblings attach first, nearest first,
    then left siblings, nearest first. Intermediate nodes reuse the parent
    label. Unary internal nodes collapse onto their child. Binary nodes that
    already carry a head direction keep it.
    """
    if tree.is_leaf:
        return tree
    children = [binarize_and_headify(child, rules) for child in tree.children]
    if len(children) == 1:
        return children[0]
    if len(children) == 2 and tree.head_child is not None:
        head = tree.head_child
    else:
        head = rules.head_index(tree.label, tree.children)
    node = children[head]
    for right in children[head + 1:]:
        node = TreebankTree(tree.label, (node, right), headword=node.head, head_child=0)
    for left in reversed(children[:head]):
        node = TreebankTree(tree.label, (left, node), headword=node.head, head_child=1)
    return node
