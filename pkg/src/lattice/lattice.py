"""
Word lattices: data model, validation, text I/O and link splitting.

Text format (one lattice per file, ``#`` comment lines ignored)::

    UTTERANCE=utt0001
    N=3 L=2
    I=0 t=0.0
    I=1 t=0.31
    I=2 t=0.58
    J=0 S=0 E=1 W=the a=-210.5 n=-2.3
    J=1 S=1 E=2 W=cat a=-190.0 n=-5.1

Files ending in ``.gz`` (or starting with the gzip magic) are read and
written compressed.
"""
from __future__ import annotations

import gzip
import heapq
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Tuple

from src.text.token_map import TokenMap

logger = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"


class LatticeValidationError(ValueError):
    """Lattice violates a structural invariant; ``element`` names the culprit."""

    def __init__(self, message: str, element: str):
        super().__init__(f"{element}: {message}")
        self.element = element


class Link(NamedTuple):
    """Word hypothesis between two nodes, scores in natural-log domain."""

    id: int
    start: int
    end: int
    word: str
    am: float
    lm: float


LinkPath = Tuple[int, ...]


@dataclass(frozen=True)
class Lattice:
    """
    Acyclic graph of timed nodes and scored word links.

    Construction validates the graph: no dangling links, no time regression,
    no cycles, exactly one start and one end node.
    """

    nodes: Mapping[int, float]
    links: Mapping[int, Link]
    utterance: str = ""
    start: int = field(init=False)
    end: int = field(init=False)
    _outgoing: Dict[int, Tuple[Link, ...]] = field(init=False, repr=False, compare=False)
    _incoming: Dict[int, Tuple[Link, ...]] = field(init=False, repr=False, compare=False)
    _topo: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.nodes:
            raise LatticeValidationError("lattice has no nodes", "lattice")
        outgoing: Dict[int, List[Link]] = defaultdict(list)
        incoming: Dict[int, List[Link]] = defaultdict(list)
        for link_id in sorted(self.links):
            link = self.links[link_id]
            if link.id != link_id:
                raise LatticeValidationError(f"stored under id {link_id}", f"link {link.id}")
            for node in (link.start, link.end):
                if node not in self.nodes:
                    raise LatticeValidationError(f"refers to missing node {node}", f"link {link.id}")
            if self.nodes[link.start] > self.nodes[link.end]:
                raise LatticeValidationError(
                    f"time goes backwards ({self.nodes[link.start]} > {self.nodes[link.end]})",
                    f"link {link.id}",
                )
            outgoing[link.start].append(link)
            incoming[link.end].append(link)
        for node, time in self.nodes.items():
            if time < 0:
                raise LatticeValidationError(f"negative time {time}", f"node {node}")

        topo = _topological_order(self.nodes, outgoing, incoming)
        starts = [n for n in sorted(self.nodes) if not incoming.get(n)]
        ends = [n for n in sorted(self.nodes) if not outgoing.get(n)]
        if len(starts) != 1:
            raise LatticeValidationError("multiple start nodes", "nodes " + ",".join(map(str, starts)))
        if len(ends) != 1:
            raise LatticeValidationError("multiple end nodes", "nodes " + ",".join(map(str, ends)))
        # With one source and one sink every node of a DAG lies on a start->end path.
        object.__setattr__(self, "start", starts[0])
        object.__setattr__(self, "end", ends[0])
        object.__setattr__(self, "_outgoing", {n: tuple(v) for n, v in outgoing.items()})
        object.__setattr__(self, "_incoming", {n: tuple(v) for n, v in incoming.items()})
        object.__setattr__(self, "_topo", topo)

    @classmethod
    def from_links(cls, nodes: Mapping[int, float], links: List[Link], utterance: str = "") -> "Lattice":
        return cls(dict(nodes), {link.id: link for link in links}, utterance)

    def outgoing(self, node: int) -> Tuple[Link, ...]:
        """Links leaving ``node`` in id order."""
        return self._outgoing.get(node, ())

    def incoming(self, node: int) -> Tuple[Link, ...]:
        return self._incoming.get(node, ())

    @property
    def topological_order(self) -> Tuple[int, ...]:
        return self._topo

    def paths(self) -> Iterator[LinkPath]:
        """Every start->end path as a tuple of link ids, in lexicographic link order."""
        def walk(node: int, prefix: LinkPath) -> Iterator[LinkPath]:
            if node == self.end:
                yield prefix
                return
            for link in self.outgoing(node):
                yield from walk(link.end, prefix + (link.id,))

        yield from walk(self.start, ())

    def count_paths(self) -> int:
        counts: Dict[int, int] = {self.end: 1}
        for node in reversed(self._topo):
            if node != self.end:
                counts[node] = sum(counts[link.end] for link in self.outgoing(node))
        return counts[self.start]

    def words(self, path: LinkPath) -> List[str]:
        return [self.links[i].word for i in path]

    def check_path(self, path: LinkPath) -> None:
        """
        Raises:
            ValueError: ``path`` does not start at the start node or is not connected.
        """
        node = self.start
        for link_id in path:
            link = self.links.get(link_id)
            if link is None or link.start != node:
                raise ValueError(f"Link {link_id} does not continue the path at node {node}")
            node = link.end

    def __len__(self) -> int:
        return len(self.links)


def _topological_order(nodes, outgoing, incoming) -> Tuple[int, ...]:
    """Kahn's algorithm with smallest-id-first tie-breaking."""
    indegree = {n: len(incoming.get(n, ())) for n in nodes}
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: List[int] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for link in outgoing.get(node, ()):
            indegree[link.end] -= 1
            if indegree[link.end] == 0:
                heapq.heappush(ready, link.end)
    if len(order) != len(nodes):
        stuck = sorted(n for n, d in indegree.items() if d > 0)
        raise LatticeValidationError("cycle detected", f"node {stuck[0]}")
    return tuple(order)


# ---------------------------------------------------------------------------
# Text I/O
# ---------------------------------------------------------------------------

def _fields(line: str, line_no: int) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for item in line.split():
        key, sep, value = item.partition("=")
        if not sep:
            raise LatticeValidationError(f"expected KEY=VALUE, got {item!r}", f"line {line_no}")
        out[key] = value
    return out


def read_lattice(text: str) -> Lattice:
    """
    Parse the lattice text format and validate the result.

    Raises:
        LatticeValidationError: malformed lines, header/count mismatch or any
            structural violation.
    """
    utterance = ""
    declared: Optional[Tuple[int, int]] = None
    nodes: Dict[int, float] = {}
    links: Dict[int, Link] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = _fields(line, line_no)
        try:
            if "UTTERANCE" in fields:
                utterance = fields["UTTERANCE"]
            elif "N" in fields:
                declared = (int(fields["N"]), int(fields["L"]))
            elif "I" in fields:
                node = int(fields["I"])
                if node in nodes:
                    raise LatticeValidationError("duplicate node id", f"node {node}")
                nodes[node] = float(fields["t"])
            elif "J" in fields:
                link_id = int(fields["J"])
                if link_id in links:
                    raise LatticeValidationError("duplicate link id", f"link {link_id}")
                links[link_id] = Link(
                    link_id,
                    int(fields["S"]),
                    int(fields["E"]),
                    fields["W"],
                    float(fields["a"]),
                    float(fields["n"]),
                )
            else:
                raise LatticeValidationError(f"unrecognized line {line!r}", f"line {line_no}")
        except KeyError as exc:
            raise LatticeValidationError(f"missing field {exc.args[0]}", f"line {line_no}") from exc
        except ValueError as exc:
            if isinstance(exc, LatticeValidationError):
                raise
            raise LatticeValidationError(str(exc), f"line {line_no}") from exc
    if declared is not None and declared != (len(nodes), len(links)):
        raise LatticeValidationError(
            f"declares N={declared[0]} L={declared[1]} but has {len(nodes)} nodes, {len(links)} links",
            "header",
        )
    return Lattice(nodes, links, utterance)


def write_lattice(lattice: Lattice) -> str:
    """Canonical text: nodes by id, links by id, floats in repr form."""
    lines: List[str] = []
    if lattice.utterance:
        lines.append(f"UTTERANCE={lattice.utterance}")
    lines.append(f"N={len(lattice.nodes)} L={len(lattice.links)}")
    for node in sorted(lattice.nodes):
        lines.append(f"I={node} t={lattice.nodes[node]!r}")
    for link_id in sorted(lattice.links):
        link = lattice.links[link_id]
        lines.append(f"J={link.id} S={link.start} E={link.end} W={link.word} a={link.am!r} n={link.lm!r}")
    return "\n".join(lines) + "\n"


def read_lattice_file(path: Path | str) -> Lattice:
    data = Path(path).read_bytes()
    if data[:2] == GZIP_MAGIC:
        data = gzip.decompress(data)
    lattice = read_lattice(data.decode("utf-8"))
    if not lattice.utterance:
        lattice = Lattice(lattice.nodes, lattice.links, Path(path).name.split(".")[0])
    return lattice


def write_lattice_file(lattice: Lattice, path: Path | str) -> None:
    path = Path(path)
    data = write_lattice(lattice).encode("utf-8")
    if path.suffix == ".gz":
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


# ---------------------------------------------------------------------------
# Tokenization transform
# ---------------------------------------------------------------------------

def split_links(lattice: Lattice, token_map: TokenMap) -> Lattice:
    """
    Cut every link whose word has a split rule into two links.

    The first link carries the first part with zero scores and keeps the
    original link id; the second carries the second part with the original
    scores. The new node sits at the time midpoint.
    """
    nodes = dict(lattice.nodes)
    links: Dict[int, Link] = {}
    next_node = max(nodes) + 1
    next_link = max(lattice.links, default=-1) + 1
    n_split = 0
    for link_id in sorted(lattice.links):
        link = lattice.links[link_id]
        pair = token_map.split(link.word)
        if pair is None:
            links[link_id] = link
            continue
        middle = next_node
        next_node += 1
        nodes[middle] = (nodes[link.start] + nodes[link.end]) / 2.0
        links[link_id] = Link(link_id, link.start, middle, pair[0], 0.0, 0.0)
        links[next_link] = Link(next_link, middle, link.end, pair[1], link.am, link.lm)
        next_link += 1
        n_split += 1
    if n_split == 0:
        return lattice
    logger.debug("Split %d links in lattice %s", n_split, lattice.utterance or "<unnamed>")
    return Lattice(nodes, links, lattice.utterance)
