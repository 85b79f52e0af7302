"""
A* search over the prefix tree of lattice paths.

Entries are ordered by g = f + h where f is the path score under the
rescoring LM and h the backward-pass lookahead of the path's last node.
Expansion adds every one-link continuation, then the stack is cut to
``stack_depth_threshold`` entries and to ``stack_logp_threshold`` below the
best g. The first complete path popped is the answer.

Ties on g prefer the longer prefix, then the lexicographically smaller
link-id sequence.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Set, Tuple

from src.decoder.config import SearchConfig
from src.decoder.rescoring import LatticeNgramLM, RescoringLM
from src.lattice.backward import BackwardTable, backward_pass
from src.lattice.lattice import Lattice, Link, LinkPath

logger = logging.getLogger(__name__)


@dataclass
class SearchStats:
    """Counters and stack snapshots from one search."""

    pops: int = 0
    inserts: int = 0
    prunes: int = 0
    max_stack: int = 0
    popped_g: List[float] = field(default_factory=list)
    pruned: Set[LinkPath] = field(default_factory=set)
    final_stack: List[LinkPath] = field(default_factory=list)

    def to_dict(self) -> Dict[str, int]:
        return {
            "pops": self.pops,
            "inserts": self.inserts,
            "prunes": self.prunes,
            "max_stack": self.max_stack,
            "final_stack": len(self.final_stack),
        }


class SearchFailureError(RuntimeError):
    """The stack emptied before a complete path was popped."""

    def __init__(self, message: str, stats: SearchStats):
        super().__init__(message)
        self.stats = stats


@dataclass(frozen=True)
class PartialPath:
    """Stack entry: a link prefix with its score and LM state."""

    links: LinkPath
    node: int
    f: float
    g: float
    complete: bool
    state: Any = field(default=None, compare=False, repr=False)

    def key(self) -> Tuple[float, int, LinkPath]:
        return (-self.g, -len(self.links), self.links)


@dataclass
class DecodeResult:
    utterance: str
    path: LinkPath
    words: List[str]
    score: float
    stats: SearchStats = field(default_factory=SearchStats)

    def line(self) -> str:
        """``<lattice-id> <score> <word sequence>``"""
        return f"{self.utterance} {self.score!r} {' '.join(self.words)}".rstrip()


@dataclass(frozen=True)
class ScoredPath:
    path: LinkPath
    words: Tuple[str, ...]
    score: float


def link_score(link: Link, logprob: float, config: SearchConfig) -> float:
    return link.am + config.lm_weight * logprob - config.log_p_ip


def f_score(lattice: Lattice, path: Sequence[int], lm: RescoringLM, config: SearchConfig) -> float:
    """
    Path score under ``lm``; 0 for the empty path.

    Raises:
        ValueError: the links do not form a connected path from the start node.
    """
    lattice.check_path(tuple(path))
    state = lm.start()
    total = 0.0
    for link_id in path:
        link = lattice.links[link_id]
        logprob, state = lm.score(state, link)
        total = total + link_score(link, logprob, config)
    return total


def _search(
    lattice: Lattice,
    lm: RescoringLM,
    config: SearchConfig,
    table: BackwardTable,
    stats: SearchStats,
) -> Iterator[PartialPath]:
    """Yield complete paths in pop order; leaves the live stack in ``stats.final_stack``."""
    root = PartialPath((), lattice.start, 0.0, table[lattice.start], lattice.start == lattice.end, lm.start())
    heap: List[Tuple[Tuple[float, int, LinkPath], PartialPath]] = [(root.key(), root)]
    stats.inserts += 1
    while heap:
        _, entry = heapq.heappop(heap)
        stats.pops += 1
        stats.popped_g.append(entry.g)
        if entry.complete:
            stats.final_stack = sorted(item[1].links for item in heap)
            yield entry
            continue
        for link in lattice.outgoing(entry.node):
            logprob, state = lm.score(entry.state, link)
            f = entry.f + link_score(link, logprob, config)
            child = PartialPath(
                entry.links + (link.id,),
                link.end,
                f,
                f + table[link.end],
                link.end == lattice.end,
                state,
            )
            heapq.heappush(heap, (child.key(), child))
            stats.inserts += 1
        stats.max_stack = max(stats.max_stack, len(heap))
        heap = _prune(heap, config, stats)
    stats.final_stack = []


def _prune(heap, config: SearchConfig, stats: SearchStats):
    if config.is_unbounded or not heap:
        return heap
    kept = heap
    if config.stack_depth_threshold is not None and len(kept) > config.stack_depth_threshold:
        kept = heapq.nsmallest(config.stack_depth_threshold, kept)
    if config.stack_logp_threshold is not None:
        best_g = min(kept)[1].g
        kept = [item for item in kept if item[1].g >= best_g - config.stack_logp_threshold]
    if len(kept) == len(heap):
        return heap
    survivors = {item[1].links for item in kept}
    for item in heap:
        if item[1].links not in survivors:
            stats.pruned.add(item[1].links)
            stats.prunes += 1
    heapq.heapify(kept)
    return kept


def astar_decode(
    lattice: Lattice,
    lm: RescoringLM,
    config: Optional[SearchConfig] = None,
    table: Optional[BackwardTable] = None,
) -> DecodeResult:
    """
    Best path by A* with the compensated n-gram lookahead.

    Raises:
        SearchFailureError: the stack emptied without a complete path.
    """
    config = config or SearchConfig()
    table = table or backward_pass(lattice, config)
    stats = SearchStats()
    for entry in _search(lattice, lm, config, table, stats):
        logger.debug(
            "A* %s: %d pops, %d inserts, %d prunes",
            lattice.utterance, stats.pops, stats.inserts, stats.prunes,
        )
        return DecodeResult(lattice.utterance, entry.links, lattice.words(entry.links), entry.f, stats)
    raise SearchFailureError(f"A* stack exhausted on lattice {lattice.utterance!r}", stats)


def exact_config(config: SearchConfig) -> SearchConfig:
    """Lookahead equal to the true n-gram continuation score, no stack limits."""
    return config.replace(log_p_comp=0.0, log_p_final=0.0, stack_depth_threshold=None, stack_logp_threshold=None)


def nbest(lattice: Lattice, config: Optional[SearchConfig], n: int) -> List[ScoredPath]:
    """
    Top ``n`` node-distinct paths under the lattice's own n-gram scores.

    Returns fewer entries when the lattice has fewer paths.
    """
    if n < 1:
        raise ValueError(f"N must be at least 1, got {n}")
    config = exact_config(config or SearchConfig())
    table = backward_pass(lattice, config)
    out: List[ScoredPath] = []
    for entry in _search(lattice, LatticeNgramLM(), config, table, SearchStats()):
        out.append(ScoredPath(entry.links, tuple(lattice.words(entry.links)), entry.f))
        if len(out) == n:
            break
    out.sort(key=lambda p: -p.score)
    return out


def viterbi_decode(lattice: Lattice, config: Optional[SearchConfig] = None) -> DecodeResult:
    """Best path under the lattice n-gram scores by a forward dynamic program."""
    config = config or SearchConfig()
    best: Dict[int, float] = {lattice.start: 0.0}
    back: Dict[int, Optional[Link]] = {lattice.start: None}
    for node in lattice.topological_order:
        if node == lattice.start:
            continue
        for link in lattice.incoming(node):
            score = best[link.start] + link_score(link, link.lm, config)
            if node not in best or score > best[node]:
                best[node] = score
                back[node] = link
    path: List[int] = []
    node = lattice.end
    while back[node] is not None:
        link = back[node]
        path.append(link.id)  # type: ignore[union-attr]
        node = link.start  # type: ignore[union-attr]
    path.reverse()
    return DecodeResult(lattice.utterance, tuple(path), lattice.words(tuple(path)), best[lattice.end])


def rescore_paths(
    lattice: Lattice,
    paths: Sequence[ScoredPath],
    lm: RescoringLM,
    config: SearchConfig,
) -> List[ScoredPath]:
    """Re-score ``paths`` with ``lm``; order preserved."""
    return [ScoredPath(p.path, p.words, f_score(lattice, p.path, lm, config)) for p in paths]


def rescore_nbest(
    lattice: Lattice,
    lm: RescoringLM,
    config: Optional[SearchConfig],
    n: int,
) -> ScoredPath:
    """Best of the n-gram N-best list after rescoring with ``lm``; ties keep N-best order."""
    config = config or SearchConfig()
    rescored = rescore_paths(lattice, nbest(lattice, config, n), lm, config)
    return max(rescored, key=lambda p: p.score)
