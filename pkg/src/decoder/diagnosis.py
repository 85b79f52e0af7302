"""
Search-quality diagnosis for A* rescoring.

The n-gram N-best list is used as a sample of the path space. Each sampled
path is rescored with the same f as the A* search; the rank of the A* output
among the samples counts how many sampled paths beat it. Every path that does
is classified by what happened to it during the search:

* insufficient-compensation: one of its prefixes was still on the stack when
  A* returned, so the lookahead under-estimated it;
* fell-off-stack: its prefix had been pruned by the stack thresholds.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import pandas as pd

from src.decoder.astar import (
    DecodeResult,
    ScoredPath,
    astar_decode,
    nbest,
    rescore_paths,
)
from src.decoder.config import SearchConfig
from src.decoder.rescoring import RescoringLM
from src.lattice.backward import BackwardTable
from src.lattice.lattice import Lattice

logger = logging.getLogger(__name__)

INSUFFICIENT_COMPENSATION = "insufficient-compensation"
FELL_OFF_STACK = "fell-off-stack"


@dataclass
class OffendingPath:
    path: tuple
    words: List[str]
    score: float
    classification: str


@dataclass
class DiagnosisReport:
    """Diagnosis of one lattice."""

    utterance: str
    rank: int
    n_sampled: int
    astar: DecodeResult
    nbest_best: ScoredPath
    offending: List[OffendingPath] = field(default_factory=list)

    @property
    def is_offending(self) -> bool:
        return bool(self.offending)

    def to_text(self) -> str:
        """Key-value block."""
        lines = [
            f"utterance={self.utterance}",
            f"rank={self.rank}",
            f"sampled={self.n_sampled}",
            f"astar_score={self.astar.score!r}",
            f"astar_words={' '.join(self.astar.words)}",
            f"nbest_rescored_score={self.nbest_best.score!r}",
            f"nbest_rescored_words={' '.join(self.nbest_best.words)}",
        ]
        for key, value in self.astar.stats.to_dict().items():
            lines.append(f"{key}={value}")
        for i, path in enumerate(self.offending):
            lines.append(f"offending.{i}={path.classification} {path.score!r} {' '.join(path.words)}")
        return "\n".join(lines) + "\n"


@dataclass
class DiagnosisSummary:
    """Corpus-level aggregation of per-lattice reports."""

    reports: List[DiagnosisReport]

    @property
    def mean_rank(self) -> float:
        if not self.reports:
            return 0.0
        return sum(r.rank for r in self.reports) / len(self.reports)

    @property
    def offending_lattices(self) -> int:
        return sum(1 for r in self.reports if r.is_offending)

    @property
    def failure_counts(self) -> Dict[str, int]:
        counts: Counter = Counter({INSUFFICIENT_COMPENSATION: 0, FELL_OFF_STACK: 0})
        for report in self.reports:
            counts.update(path.classification for path in report.offending)
        return dict(counts)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {
                "utterance": r.utterance,
                "rank": r.rank,
                "sampled": r.n_sampled,
                "astar_score": r.astar.score,
                "nbest_rescored_score": r.nbest_best.score,
                "offending_paths": len(r.offending),
                "astar_words": " ".join(r.astar.words),
                "nbest_rescored_words": " ".join(r.nbest_best.words),
            }
            for r in self.reports
        ])

    def summary(self) -> str:
        counts = self.failure_counts
        return (
            f"lattices={len(self.reports)}\n"
            f"mean_rank={self.mean_rank:.4f}\n"
            f"offending_lattices={self.offending_lattices}\n"
            f"{INSUFFICIENT_COMPENSATION}={counts[INSUFFICIENT_COMPENSATION]}\n"
            f"{FELL_OFF_STACK}={counts[FELL_OFF_STACK]}\n"
        )


def diagnose(
    lattice: Lattice,
    lm: RescoringLM,
    config: Optional[SearchConfig],
    n: int,
    table: Optional[BackwardTable] = None,
) -> DiagnosisReport:
    """Rank the A* output among the rescored n-gram N-best paths."""
    config = config or SearchConfig()
    lm.reset()
    result = astar_decode(lattice, lm, config, table)
    samples = rescore_paths(lattice, nbest(lattice, config, n), lm, config)
    live = set(result.stats.final_stack)
    offending: List[OffendingPath] = []
    for sample in samples:
        if not sample.score > result.score:
            continue
        prefixes = {sample.path[:i] for i in range(len(sample.path) + 1)}
        kind = INSUFFICIENT_COMPENSATION if prefixes & live else FELL_OFF_STACK
        offending.append(OffendingPath(sample.path, list(sample.words), sample.score, kind))
    best_sample = max(samples, key=lambda p: p.score)
    if offending:
        logger.info("Lattice %s: A* output ranks %d of %d sampled paths", lattice.utterance, len(offending), len(samples))
    return DiagnosisReport(lattice.utterance, len(offending), len(samples), result, best_sample, offending)


def summarize(reports: Sequence[DiagnosisReport]) -> DiagnosisSummary:
    return DiagnosisSummary(list(reports))


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

@dataclass
class AdmissibilityReport:
    """Per-link check of  lm_ng + log_p_comp >= logP_LM  over a path sample."""

    paths_checked: int = 0
    links_checked: int = 0
    violations: int = 0
    max_violation: float = 0.0

    @property
    def admissible(self) -> bool:
        return self.violations == 0

    def merge(self, other: "AdmissibilityReport") -> "AdmissibilityReport":
        return AdmissibilityReport(
            self.paths_checked + other.paths_checked,
            self.links_checked + other.links_checked,
            self.violations + other.violations,
            max(self.max_violation, other.max_violation),
        )


def check_admissibility(
    lattice: Lattice,
    lm: RescoringLM,
    config: Optional[SearchConfig] = None,
    max_paths: int = 1000,
) -> AdmissibilityReport:
    """
    Count links where the rescoring LM beats the compensated n-gram score.

    All paths are checked when there are at most ``max_paths``; otherwise the
    n-gram ``max_paths``-best. ``max_violation`` is a lower bound on the
    compensation needed.
    """
    config = config or SearchConfig()
    if lattice.count_paths() <= max_paths:
        paths = list(lattice.paths())
    else:
        paths = [p.path for p in nbest(lattice, config, max_paths)]
    report = AdmissibilityReport()
    for path in paths:
        report.paths_checked += 1
        links = [lattice.links[i] for i in path]
        for link, logprob in zip(links, lm.path_logprobs(links)):
            report.links_checked += 1
            excess = logprob - (link.lm + config.log_p_comp)
            if excess > 0:
                report.violations += 1
                report.max_violation = max(report.max_violation, excess)
    return report
