"""Model evaluation metrics: perplexity tables, word error rate and the sign test."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from src.models.slm import SLModel
from src.models.slm_search import BeamConfig, slm_sentence_ppl
from src.models.trigram import TrigramLM
from src.text.token_map import TokenMap, denormalize

logger = logging.getLogger(__name__)

TABLE_LAMBDAS = (0.0, 0.4, 1.0)

AlignedPair = Tuple[Optional[str], Optional[str]]


# ---------------------------------------------------------------------------
# Alignment / WER
# ---------------------------------------------------------------------------

@dataclass
class AlignmentResult:
    """Edit counts of one or more aligned utterances."""

    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    correct: int = 0
    pairs: List[AlignedPair] = field(default_factory=list)

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def ref_length(self) -> int:
        return self.substitutions + self.deletions + self.correct

    @property
    def hyp_length(self) -> int:
        return self.substitutions + self.insertions + self.correct

    def __add__(self, other: "AlignmentResult") -> "AlignmentResult":
        return AlignmentResult(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.correct + other.correct,
            self.pairs + other.pairs,
        )

    def aligned_text(self) -> str:
        """Two aligned rows (REF / HYP) with ``***`` for gaps."""
        refs, hyps = [], []
        for ref, hyp in self.pairs:
            r, h = ref or "***", hyp or "***"
            if ref is not None and hyp is not None and ref != hyp:
                r, h = r.upper(), h.upper()
            width = max(len(r), len(h))
            refs.append(r.ljust(width))
            hyps.append(h.ljust(width))
        return f"REF: {' '.join(refs)}\nHYP: {' '.join(hyps)}"


def align(ref: Sequence[str], hyp: Sequence[str]) -> AlignmentResult:
    """
    Minimum edit-distance alignment with unit costs.

    At equal cost the backtrace prefers a substitution (or match) over a
    deletion, and a deletion over an insertion.
    """
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diagonal = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i, j] = min(diagonal, cost[i - 1, j] + 1, cost[i, j - 1] + 1)

    result = AlignmentResult()
    pairs: List[AlignedPair] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] == hyp[j - 1]:
                result.correct += 1
            else:
                result.substitutions += 1
            pairs.append((ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            result.deletions += 1
            pairs.append((ref[i - 1], None))
            i -= 1
        else:
            result.insertions += 1
            pairs.append((None, hyp[j - 1]))
            j -= 1
    pairs.reverse()
    result.pairs = pairs
    return result


@dataclass
class WerResult:
    """Corpus WER with per-utterance alignments."""

    wer: float
    totals: AlignmentResult
    utterances: List[AlignmentResult]
    ids: List[str] = field(default_factory=list)

    @property
    def errors_per_utterance(self) -> List[int]:
        return [u.errors for u in self.utterances]

    def summary(self) -> str:
        t = self.totals
        return (
            f"utterances={len(self.utterances)}\n"
            f"ref_words={t.ref_length}\n"
            f"correct={t.correct}\n"
            f"substitutions={t.substitutions}\n"
            f"deletions={t.deletions}\n"
            f"insertions={t.insertions}\n"
            f"wer={self.wer:.2f}\n"
        )

    def aligned_report(self) -> str:
        ids = self.ids or [str(i) for i in range(len(self.utterances))]
        blocks = [f"id: {utt_id}  errors: {u.errors}\n{u.aligned_text()}" for utt_id, u in zip(ids, self.utterances)]
        return "\n\n".join(blocks) + "\n"


def wer(
    refs: Sequence[Sequence[str]],
    hyps: Sequence[Sequence[str]],
    token_map: Optional[TokenMap] = None,
    ids: Optional[Sequence[str]] = None,
) -> WerResult:
    """
    Word error rate in percent after undoing the token map on the hypotheses.

    References are scored as given.

    Raises:
        ValueError: different numbers of references and hypotheses.
    """
    if len(refs) != len(hyps):
        raise ValueError(f"Got {len(refs)} references but {len(hyps)} hypotheses")
    utterances: List[AlignmentResult] = []
    totals = AlignmentResult()
    for ref, hyp in zip(refs, hyps):
        hyp_tokens = denormalize(list(hyp), token_map) if token_map is not None else list(hyp)
        result = align(list(ref), hyp_tokens)
        utterances.append(result)
        totals = totals + result
    ref_words = totals.ref_length
    rate = 100.0 * totals.errors / ref_words if ref_words else (0.0 if totals.errors == 0 else math.inf)
    return WerResult(rate, totals, utterances, list(ids or []))


def read_transcripts(path: Path | str) -> Dict[str, List[str]]:
    """``<utt-id> <tokens...>`` per line; order preserved."""
    out: Dict[str, List[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if parts:
            out[parts[0]] = parts[1:]
    return out


# ---------------------------------------------------------------------------
# Significance
# ---------------------------------------------------------------------------

def sign_test(errors_a: Sequence[int], errors_b: Sequence[int]) -> float:
    """
    Two-sided sign test over utterances whose error counts differ.

    Returns:
        p-value; 1.0 (with a warning) when every utterance ties.
    """
    if len(errors_a) != len(errors_b):
        raise ValueError("Error count lists must have equal length")
    a = np.asarray(errors_a)
    b = np.asarray(errors_b)
    differing = int(np.sum(a != b))
    if differing == 0:
        logger.warning("Sign test: all %d utterances tie; returning p=1.0", len(a))
        return 1.0
    b_better = int(np.sum(a > b))
    return float(binomtest(b_better, differing, 0.5, alternative="two-sided").pvalue)


# ---------------------------------------------------------------------------
# Perplexity
# ---------------------------------------------------------------------------

def interpolate_logprob(logp_a: float, logp_b: float, lam: float) -> float:
    """log(lam * P_a + (1 - lam) * P_b); the endpoints return one side unchanged."""
    if lam == 1.0:
        return logp_a
    if lam == 0.0:
        return logp_b
    return float(np.logaddexp(math.log(lam) + logp_a, math.log1p(-lam) + logp_b))


def perplexity(logprobs: Sequence[float]) -> float:
    if not logprobs:
        raise ValueError("No tokens to compute perplexity over")
    return math.exp(-math.fsum(logprobs) / len(logprobs))


def interpolated_ppl(logprobs_a: Sequence[float], logprobs_b: Sequence[float], lam: float) -> float:
    """Perplexity of the per-token mixture of two models."""
    if len(logprobs_a) != len(logprobs_b):
        raise ValueError("Models scored different numbers of tokens")
    return perplexity([interpolate_logprob(a, b, lam) for a, b in zip(logprobs_a, logprobs_b)])


def token_logprobs_trigram(trigram: TrigramLM, corpus: Sequence[Sequence[str]]) -> List[float]:
    out: List[float] = []
    for sentence in corpus:
        out.extend(trigram.sentence_logprob(sentence)[1])
    return out


def token_logprobs_slm(model: SLModel, corpus: Sequence[Sequence[str]], beams: Optional[BeamConfig] = None) -> List[float]:
    out: List[float] = []
    for sentence in corpus:
        out.extend(slm_sentence_ppl(model, sentence, beams)[1])
    return out


def report_ppl(
    models: Sequence[Tuple[str, SLModel]],
    trigram: TrigramLM,
    corpus: Sequence[Sequence[str]],
    lambdas: Sequence[float] = TABLE_LAMBDAS,
    beams: Optional[BeamConfig] = None,
) -> pd.DataFrame:
    """
    Perplexity table: one row per SLM variant, one column per lambda.

    lambda weighs the trigram, so the 1.0 column is the trigram alone and the
    0.0 column the SLM alone.
    """
    trigram_lps = token_logprobs_trigram(trigram, corpus)
    rows = []
    for name, model in models:
        slm_lps = token_logprobs_slm(model, corpus, beams)
        row: Dict[str, object] = {"model": name}
        for lam in lambdas:
            row[f"{lam:.1f}"] = interpolated_ppl(trigram_lps, slm_lps, lam)
        rows.append(row)
        logger.info("PPL %s: %s", name, {k: round(v, 3) for k, v in row.items() if k != "model"})
    return pd.DataFrame(rows).set_index("model")


def estimate_compensation(
    trigram: TrigramLM,
    model: SLModel,
    corpus: Sequence[Sequence[str]],
    beams: Optional[BeamConfig] = None,
) -> float:
    """
    Mean per-token log-probability gain of the SLM over the trigram.

    Equals log(PPL_trigram / PPL_slm); a starting value for log_p_comp.
    """
    trigram_lps = token_logprobs_trigram(trigram, corpus)
    slm_lps = token_logprobs_slm(model, corpus, beams)
    return (math.fsum(slm_lps) - math.fsum(trigram_lps)) / len(trigram_lps)
