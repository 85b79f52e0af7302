"""
Viterbi backward pass: the A* lookahead for every lattice node.

For a link l the lookahead term is

    s(l) = am(l) + lm_weight * (lm(l) + log_p_comp) - log_p_ip

and B(v) is the best sum of s over v->end continuations. The lookahead h(v)
adds ``lm_weight * log_p_final``:

* ``as-printed``: only when the continuation has two or more links, so
  h(v) = max_l [s(l) + B(l.end) + F * (l.end != end)];
* ``inclusive``: for every non-empty continuation, h(v) = B(v) + F.

h(end) = 0 either way, so g = f exactly for complete paths.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Mapping

from src.lattice.lattice import Lattice, Link

if TYPE_CHECKING:
    from src.decoder.config import SearchConfig

logger = logging.getLogger(__name__)


def link_lookahead(link: Link, config: "SearchConfig") -> float:
    return link.am + config.lm_weight * (link.lm + config.log_p_comp) - config.log_p_ip


@dataclass(frozen=True)
class BackwardTable:
    """Per-node lookahead ``h`` and best uncompensated-final suffix ``B``."""

    lookahead: Mapping[int, float]
    best_suffix: Mapping[int, float]
    end: int

    def __getitem__(self, node: int) -> float:
        return self.lookahead[node]

    def __len__(self) -> int:
        return len(self.lookahead)


def backward_pass(lattice: Lattice, config: "SearchConfig") -> BackwardTable:
    """Fill the table in reverse topological order, one visit per link."""
    final = config.lm_weight * config.log_p_final
    best: Dict[int, float] = {lattice.end: 0.0}
    lookahead: Dict[int, float] = {lattice.end: 0.0}
    for node in reversed(lattice.topological_order):
        if node == lattice.end:
            continue
        b = -math.inf
        h = -math.inf
        for link in lattice.outgoing(node):
            through = link_lookahead(link, config) + best[link.end]
            b = max(b, through)
            if config.final_term_rule == "as-printed" and link.end != lattice.end:
                h = max(h, through + final)
            elif config.final_term_rule == "as-printed":
                h = max(h, through)
        best[node] = b
        lookahead[node] = b + final if config.final_term_rule == "inclusive" else h
    return BackwardTable(lookahead, best, lattice.end)
