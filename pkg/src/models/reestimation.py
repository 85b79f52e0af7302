"""N-best EM reestimation of the structured language model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from src.models.deleted_interpolation import DIConfig, split_heldout
from src.models.slm import ComponentEvents, SLModel, WordParsePrefix, derivation_events, replay, train_components
from src.models.slm_search import BeamConfig, SearchStarvationError, complete_parses

logger = logging.getLogger(__name__)

WeightedParses = List[Tuple[WordParsePrefix, float]]


@dataclass
class ReestimationReport:
    """E-step statistics of one reestimation pass (under the input model)."""

    iteration: int
    sentences: int
    skipped: int
    nbest_loglik: float
    skipped_indices: List[int] = field(default_factory=list)
    accepted: bool = True

    def summary(self) -> str:
        return (
            f"EM iteration {self.iteration}: {self.sentences - self.skipped}/{self.sentences} sentences, "
            f"N-best log-likelihood {self.nbest_loglik:.4f}, skipped {self.skipped}"
            + ("" if self.accepted else ", update rejected")
        )


def nbest_posteriors(parses: Sequence[WordParsePrefix], n_best: int) -> WeightedParses:
    """Top ``n_best`` parses with posteriors renormalized over that set."""
    top = list(parses[:n_best])
    logps = np.array([p.logprob for p in top])
    weights = np.exp(logps - logsumexp(logps))
    return list(zip(top, weights.tolist()))


def nbest_lists(
    model: SLModel,
    corpus: Sequence[Sequence[str]],
    n_best: int,
    beams: Optional[BeamConfig] = None,
    offset: int = 0,
) -> Tuple[List[WeightedParses], float, List[int]]:
    """
    Weighted N-best parses of every sentence that does not starve.

    Returns:
        (one list per parsed sentence, N-best log-likelihood, skipped indices)
    """
    lists: List[WeightedParses] = []
    loglik = 0.0
    skipped: List[int] = []
    for index, sentence in enumerate(corpus):
        try:
            parses = complete_parses(model, sentence, beams)
        except SearchStarvationError as exc:
            logger.warning("Skipping sentence %d in reestimation: %s", offset + index, exc)
            skipped.append(offset + index)
            continue
        top = parses[:n_best]
        loglik += float(logsumexp([p.logprob for p in top]))
        lists.append(nbest_posteriors(top, n_best))
    return lists, loglik, skipped


def _events(model: SLModel, lists: Sequence[WeightedParses]) -> ComponentEvents:
    events = ComponentEvents()
    begin_id, end_id = model.words.begin_id, model.words.end_id
    for weighted in lists:
        for parse, weight in weighted:
            events.extend(derivation_events(parse.derivation, begin_id, end_id, weight))
    return events


def collect_events(
    model: SLModel,
    corpus: Sequence[Sequence[str]],
    n_best: int,
    beams: Optional[BeamConfig] = None,
    offset: int = 0,
) -> Tuple[ComponentEvents, float, List[int]]:
    """
    Fractional events from the N-best parses of every sentence.

    Sentences are processed in corpus order so accumulation is reproducible.

    Returns:
        (events, N-best log-likelihood, indices of skipped sentences)
    """
    lists, loglik, skipped = nbest_lists(model, corpus, n_best, beams, offset)
    return _events(model, lists), loglik, skipped


def expected_loglik(model: SLModel, lists: Sequence[WeightedParses]) -> float:
    """Posterior-weighted log-probability of the collected parses under ``model``."""
    total = 0.0
    for weighted in lists:
        for parse, weight in weighted:
            if weight > 0:
                total += weight * replay(model, parse.derivation).logprob
    return total


def reestimate(
    model: SLModel,
    corpus: Sequence[Sequence[str]],
    n_best: int = 10,
    beams: Optional[BeamConfig] = None,
    config: Optional[DIConfig] = None,
    iteration: int = 1,
) -> Tuple[SLModel, ReestimationReport]:
    """
    One N-best EM pass.

    Every parsed sentence contributes the events of its top ``n_best``
    complete parses weighted by their renormalized posteriors. Counts come
    from the whole corpus; the trailing ``heldout_fraction`` of sentences
    also refits the interpolation weights. A retrained model that scores the
    weighted parses lower than the input model is rejected and the input
    model is returned unchanged, so with exhaustive search and ``n_best``
    covering every parse the corpus likelihood never decreases.

    Raises:
        ValueError: ``n_best < 1`` or no sentence could be parsed.
    """
    if n_best < 1:
        raise ValueError(f"n_best must be at least 1, got {n_best}")
    config = config or DIConfig()
    lists, loglik, skipped = nbest_lists(model, corpus, n_best, beams)
    if not lists:
        raise ValueError("No training sentence could be parsed; widen the beams")
    train_events = _events(model, lists)
    _, heldout_lists = split_heldout(lists, config.heldout_fraction)
    heldout_events = train_events if heldout_lists is lists else _events(model, heldout_lists)

    candidate = train_components(model.words, model.tags, model.labels, train_events, heldout_events, config)
    before = expected_loglik(model, lists)
    after = expected_loglik(candidate, lists)
    accepted = after >= before
    if not accepted:
        logger.warning(
            "Reestimated model lowers the expected log-likelihood (%.6f -> %.6f); keeping the current parameters",
            before, after,
        )
        candidate = model

    report = ReestimationReport(
        iteration=iteration,
        sentences=len(corpus),
        skipped=len(skipped),
        nbest_loglik=loglik,
        skipped_indices=skipped,
        accepted=accepted,
    )
    logger.info("%s", report.summary())
    return candidate, report


def run_em(
    model: SLModel,
    corpus: Sequence[Sequence[str]],
    iterations: int = 3,
    n_best: int = 10,
    beams: Optional[BeamConfig] = None,
    config: Optional[DIConfig] = None,
) -> Tuple[SLModel, List[ReestimationReport]]:
    """
    Several reestimation passes; logs any drop in the N-best likelihood.

    Only exhaustive search guarantees the likelihood does not decrease.
    """
    beams = beams or BeamConfig()
    reports: List[ReestimationReport] = []
    for iteration in range(1, iterations + 1):
        model, report = reestimate(model, corpus, n_best, beams, config, iteration)
        if reports and report.nbest_loglik < reports[-1].nbest_loglik - 1e-6:
            logger.warning(
                "N-best likelihood decreased at iteration %d (%.6f -> %.6f)%s",
                iteration, reports[-1].nbest_loglik, report.nbest_loglik,
                "" if beams.is_exhaustive else " under pruned search",
            )
        reports.append(report)
    return model, reports
