"""Tests for A* rescoring, N-best search and search diagnosis."""
import math
import random
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.decoder.astar import (
    SearchStats,
    astar_decode,
    f_score,
    link_score,
    nbest,
    rescore_nbest,
    viterbi_decode,
)
from src.decoder.config import SearchConfig
from src.decoder.diagnosis import (
    FELL_OFF_STACK,
    INSUFFICIENT_COMPENSATION,
    check_admissibility,
    diagnose,
    summarize,
)
from src.decoder.rescoring import (
    InterpolatedLM,
    LatticeNgramLM,
    RescoringLM,
    SLMRescorer,
    TrigramRescorer,
)
from src.lattice.lattice import Lattice, Link
from src.models.deleted_interpolation import DIConfig
from src.models.slm_search import BeamConfig, slm_sentence_ppl
from src.models.trigram import TrigramLM


class AlternatingLM(RescoringLM):
    """Lattice n-gram score minus 0.1 on every other word; never above the n-gram."""

    name = "alternating"

    def start(self):
        return 0

    def score(self, state, link):
        return link.lm - 0.1 * (state % 2), state + 1


class BoostedLM(RescoringLM):
    """Lattice n-gram score plus a constant; violates admissibility."""

    def __init__(self, boost):
        self.boost = boost

    def start(self):
        return None

    def score(self, state, link):
        return link.lm + self.boost, None


class TableLM(RescoringLM):
    """Context-free log-probabilities keyed by link id."""

    def __init__(self, table):
        self.table = table

    def start(self):
        return None

    def score(self, state, link):
        return self.table[link.id], None


def exact_search(**overrides):
    values = dict(lm_weight=3.0, log_p_ip=1.5, log_p_comp=0.0, log_p_final=0.0)
    values.update(overrides)
    return SearchConfig.exhaustive(**values)


def brute_force_best(lattice, lm, config):
    scored = [(f_score(lattice, p, lm, config), p) for p in lattice.paths()]
    return max(scored, key=lambda item: item[0])


def diamond():
    """Two two-link paths: a-c scores best under the n-gram, b-d under the table LM."""
    nodes = {0: 0.0, 1: 0.5, 2: 0.5, 3: 1.0}
    links = [
        Link(0, 0, 1, "a", 0.0, -1.0),
        Link(1, 0, 2, "b", 0.0, -2.0),
        Link(2, 1, 3, "c", 0.0, 0.0),
        Link(3, 2, 3, "d", 0.0, -1.0),
    ]
    return Lattice.from_links(nodes, links, "diamond")


def diamond_config(**overrides):
    values = dict(lm_weight=1.0, log_p_ip=0.0, log_p_comp=0.0, log_p_final=0.0)
    values.update(overrides)
    return SearchConfig(**values)


# ── A* ──────────────────────────────────────────────────────────────────────

class TestAStar:
    """Test suite for the A* lattice search."""

    @pytest.mark.parametrize("lm", [LatticeNgramLM(), AlternatingLM()], ids=["ngram", "alternating"])
    def test_admissible_search_finds_argmax(self, lattice_factory, lm):
        """With an admissible lookahead and no pruning A* returns the best path."""
        rng = random.Random(21)
        for _ in range(100):
            lattice = lattice_factory(rng)
            config = exact_search(lm_weight=rng.uniform(1.0, 12.0), log_p_ip=rng.uniform(0.0, 10.0))
            result = astar_decode(lattice, lm, config)
            best_score, _ = brute_force_best(lattice, lm, config)
            assert result.score == pytest.approx(best_score, rel=1e-9, abs=1e-9)
            assert result.score == pytest.approx(f_score(lattice, result.path, lm, config), rel=1e-9, abs=1e-9)

    def test_popped_g_non_increasing(self, lattice_factory):
        """A consistent lookahead pops entries in non-increasing g."""
        rng = random.Random(22)
        for _ in range(20):
            lattice = lattice_factory(rng)
            result = astar_decode(lattice, AlternatingLM(), exact_search())
            popped = result.stats.popped_g
            for before, after in zip(popped, popped[1:]):
                assert after <= before + 1e-9

    def test_zero_compensation_admissible(self, lattice_factory):
        """The alternating LM never beats the lattice n-gram scores."""
        rng = random.Random(23)
        for _ in range(100):
            report = check_admissibility(lattice_factory(rng), AlternatingLM(), exact_search())
            assert report.admissible
            assert report.links_checked > 0

    def test_violations_counted(self, lattice_factory):
        """An LM above the n-gram shows its excess."""
        rng = random.Random(24)
        report = check_admissibility(lattice_factory(rng), BoostedLM(0.5), exact_search(log_p_comp=0.2))
        assert report.violations == report.links_checked
        assert report.max_violation == pytest.approx(0.3)

    def test_decode_line_format(self):
        """Decode lines are '<id> <score> <words>'."""
        result = astar_decode(diamond(), LatticeNgramLM(), diamond_config())
        parts = result.line().split()
        assert parts[0] == "diamond"
        assert float(parts[1]) == pytest.approx(result.score)
        assert parts[2:] == result.words == ["a", "c"]

    def test_depth_threshold_prunes(self):
        """A depth-one stack drops the second-best prefix."""
        lm = TableLM({0: -1.0, 1: -2.0, 2: -3.0, 3: -1.0})
        result = astar_decode(diamond(), lm, diamond_config(stack_depth_threshold=1, stack_logp_threshold=None))
        assert result.words == ["a", "c"]
        assert (1,) in result.stats.pruned
        assert result.stats.to_dict()["prunes"] >= 1

    def test_logp_threshold_prunes(self):
        """Entries further than the threshold below the best g are dropped."""
        lm = TableLM({0: -1.0, 1: -2.0, 2: -3.0, 3: -1.0})
        config = diamond_config(stack_depth_threshold=None, stack_logp_threshold=1.5)
        result = astar_decode(diamond(), lm, config)
        assert (1,) in result.stats.pruned

    def test_f_score_checks_path(self):
        """Scoring a disconnected path is an error; the empty path scores 0."""
        lattice = diamond()
        config = diamond_config()
        assert f_score(lattice, (), LatticeNgramLM(), config) == 0.0
        with pytest.raises(ValueError):
            f_score(lattice, (0, 3), LatticeNgramLM(), config)

    def test_link_score(self):
        """am + lm_weight * logP - ip."""
        config = SearchConfig(lm_weight=2.0, log_p_ip=1.0)
        assert link_score(Link(0, 0, 1, "a", -4.0, 0.0), -0.5, config) == pytest.approx(-6.0)


class TestSearchConfig:
    """Test suite for search parameter validation."""

    def test_defaults(self):
        """Defaults are the tuned operating point."""
        config = SearchConfig()
        assert (config.lm_weight, config.log_p_ip, config.log_p_comp, config.log_p_final) == (12.0, 10.0, 0.5, 2.0)
        assert (config.stack_depth_threshold, config.stack_logp_threshold) == (30, 100.0)
        assert config.final_term_rule == "as-printed"

    @pytest.mark.parametrize("changes", [
        {"lm_weight": 0.0},
        {"log_p_ip": -1.0},
        {"log_p_comp": -0.1},
        {"stack_depth_threshold": 0},
        {"stack_logp_threshold": 0.0},
        {"final_term_rule": "sometimes"},
    ])
    def test_invalid_values(self, changes):
        """Out-of-range parameters are rejected."""
        with pytest.raises(ValueError):
            SearchConfig(**changes)

    def test_exhaustive(self):
        """Exhaustive configs drop both stack limits."""
        assert SearchConfig.exhaustive(lm_weight=2.0).is_unbounded


# ── N-best and Viterbi ──────────────────────────────────────────────────────

class TestNBest:
    """Test suite for n-gram N-best lists."""

    def test_top_n_matches_enumeration(self, lattice_factory):
        """The N-best list is the top of the sorted path scores."""
        rng = random.Random(31)
        lm = LatticeNgramLM()
        for _ in range(20):
            lattice = lattice_factory(rng)
            config = exact_search(lm_weight=rng.uniform(1.0, 12.0))
            expected = sorted((f_score(lattice, p, lm, config) for p in lattice.paths()), reverse=True)
            got = nbest(lattice, config, 5)
            assert len(got) == min(5, lattice.count_paths())
            assert [p.score for p in got] == pytest.approx(expected[: len(got)], rel=1e-9, abs=1e-9)

    def test_large_n_returns_every_path(self, lattice_factory):
        """Asking for more paths than exist returns each path once."""
        rng = random.Random(32)
        for _ in range(10):
            lattice = lattice_factory(rng, max_nodes=6, max_links=10)
            got = nbest(lattice, SearchConfig(), lattice.count_paths() + 5)
            assert sorted(p.path for p in got) == sorted(lattice.paths())

    def test_ignores_stack_limits(self, lattice_factory):
        """N-best runs without pruning whatever the config says."""
        rng = random.Random(33)
        lattice = lattice_factory(rng, max_nodes=8, max_links=14)
        tight = SearchConfig(stack_depth_threshold=1, stack_logp_threshold=0.1)
        n = lattice.count_paths()
        assert len(nbest(lattice, tight, n)) == n

    def test_n_must_be_positive(self):
        """N below one is rejected."""
        with pytest.raises(ValueError):
            nbest(diamond(), SearchConfig(), 0)

    def test_viterbi_equals_one_best(self, lattice_factory):
        """The forward dynamic program agrees with the 1-best."""
        rng = random.Random(34)
        for _ in range(20):
            lattice = lattice_factory(rng)
            config = SearchConfig(lm_weight=rng.uniform(1.0, 12.0), log_p_ip=rng.uniform(0.0, 5.0))
            viterbi = viterbi_decode(lattice, config)
            one_best = nbest(lattice, config, 1)[0]
            assert viterbi.score == pytest.approx(one_best.score, rel=1e-9, abs=1e-9)
            assert viterbi.words == list(one_best.words)

    def test_rescore_nbest(self):
        """The rescored winner can differ from the n-gram 1-best."""
        lm = TableLM({0: -1.0, 1: -2.0, 2: -3.0, 3: -1.0})
        best = rescore_nbest(diamond(), lm, diamond_config(), 2)
        assert best.words == ("b", "d")
        assert best.score == pytest.approx(-3.0)


# ── rescoring LMs ───────────────────────────────────────────────────────────

class TestRescoringLMs:
    """Test suite for the incremental LM adapters."""

    def test_slm_rescorer_matches_sentence_scores(self, slm_factory):
        """Scoring links one by one gives the SLM's per-word probabilities."""
        model = slm_factory(12)
        beams = BeamConfig(5, 10.0, 10.0)
        words = ["a", "b", "c", "a"]
        links = [Link(i, i, i + 1, w, 0.0, 0.0) for i, w in enumerate(words)]
        rescorer = SLMRescorer(model, beams)
        _, per_word = slm_sentence_ppl(model, words, beams)
        assert rescorer.path_logprobs(links) == per_word[:-1]

    def test_slm_rescorer_cache_survives_reset(self, slm_factory):
        """Reset drops cached stacks without changing scores."""
        model = slm_factory(12)
        rescorer = SLMRescorer(model, BeamConfig(5, 10.0, 10.0))
        before = rescorer.prefix_logprob(["a", "b"], "c")
        rescorer.reset()
        assert rescorer.prefix_logprob(["a", "b"], "c") == before

    def test_trigram_rescorer(self):
        """The incremental state is the last two word ids."""
        corpus = [["a", "b", "c"], ["b", "c"], ["a", "c"], ["c", "a", "b"]] * 5
        trigram = TrigramLM.train(corpus, config=DIConfig(heldout_fraction=0.1))
        rescorer = TrigramRescorer(trigram)
        vocab = trigram.vocab
        expected = trigram.logprob(vocab.encode("c"), vocab.encode("b"), vocab.encode("a"))
        assert rescorer.prefix_logprob(["a", "b"], "c") == expected

    def test_interpolation(self):
        """Mixtures happen in probability space; endpoints pick one model."""
        first = TableLM({0: math.log(0.2)})
        second = TableLM({0: math.log(0.6)})
        link = Link(0, 0, 1, "a", 0.0, 0.0)
        mixed = InterpolatedLM(first, second, 0.25)
        assert math.exp(mixed.score(mixed.start(), link)[0]) == pytest.approx(0.25 * 0.2 + 0.75 * 0.6)
        assert InterpolatedLM(first, second, 1.0).score((None, None), link)[0] == math.log(0.2)
        assert InterpolatedLM(first, second, 0.0).score((None, None), link)[0] == math.log(0.6)

    def test_interpolation_weight_range(self):
        """lam must lie in [0, 1]."""
        with pytest.raises(ValueError):
            InterpolatedLM(LatticeNgramLM(), LatticeNgramLM(), 1.5)

    def test_lattice_ngram_needs_links(self):
        """Lattice scores exist only on links."""
        with pytest.raises(TypeError):
            LatticeNgramLM().prefix_logprob(["a"], "b")


# ── diagnosis ───────────────────────────────────────────────────────────────

class TestDiagnosis:
    """Test suite for A* output ranking and failure classification."""

    def test_fell_off_stack(self):
        """A better path whose prefix was pruned is classified as fell-off-stack."""
        lm = TableLM({0: -1.0, 1: -2.0, 2: -3.0, 3: -1.0})
        config = diamond_config(stack_depth_threshold=1, stack_logp_threshold=None)
        report = diagnose(diamond(), lm, config, 2)
        assert report.astar.score == pytest.approx(-4.0)
        assert report.rank == 1
        assert report.offending[0].classification == FELL_OFF_STACK
        assert report.offending[0].words == ["b", "d"]

    def test_unbounded_search_ranks_first(self):
        """Without pruning the same lattice decodes to the best path."""
        lm = TableLM({0: -1.0, 1: -2.0, 2: -3.0, 3: -1.0})
        report = diagnose(diamond(), lm, SearchConfig.exhaustive(lm_weight=1.0, log_p_ip=0.0,
                                                                  log_p_comp=0.0, log_p_final=0.0), 2)
        assert report.rank == 0
        assert report.astar.score == pytest.approx(-3.0)
        assert not report.is_offending

    def test_insufficient_compensation(self):
        """A better path still on the stack points at the lookahead."""
        lm = TableLM({0: -1.0, 1: -0.5, 2: 0.0, 3: 0.0})
        config = SearchConfig.exhaustive(lm_weight=1.0, log_p_ip=0.0, log_p_comp=0.0, log_p_final=0.0)
        report = diagnose(diamond(), lm, config, 2)
        assert report.astar.words == ["a", "c"]
        assert report.rank == 1
        assert report.offending[0].classification == INSUFFICIENT_COMPENSATION

    def test_compensation_fixes_ranking(self):
        """Raising log_p_comp makes the same search exact."""
        lm = TableLM({0: -1.0, 1: -0.5, 2: 0.0, 3: 0.0})
        config = SearchConfig.exhaustive(lm_weight=1.0, log_p_ip=0.0, log_p_comp=1.5, log_p_final=0.0)
        assert diagnose(diamond(), lm, config, 2).rank == 0

    def test_summary_counts(self):
        """The corpus summary aggregates ranks and failure kinds."""
        pruned = diagnose(
            diamond(),
            TableLM({0: -1.0, 1: -2.0, 2: -3.0, 3: -1.0}),
            diamond_config(stack_depth_threshold=1, stack_logp_threshold=None),
            2,
        )
        live = diagnose(
            diamond(),
            TableLM({0: -1.0, 1: -0.5, 2: 0.0, 3: 0.0}),
            SearchConfig.exhaustive(lm_weight=1.0, log_p_ip=0.0, log_p_comp=0.0, log_p_final=0.0),
            2,
        )
        summary = summarize([pruned, live])
        assert summary.mean_rank == pytest.approx(1.0)
        assert summary.offending_lattices == 2
        assert summary.failure_counts == {INSUFFICIENT_COMPENSATION: 1, FELL_OFF_STACK: 1}
        frame = summary.to_frame()
        assert list(frame["rank"]) == [1, 1]
        assert "mean_rank=1.0000" in summary.summary()
        assert "offending.0=fell-off-stack" in pruned.to_text()

    def test_random_lattices_rank_zero_when_exact(self, lattice_factory):
        """Exact search never ranks below a sampled path."""
        rng = random.Random(41)
        for _ in range(10):
            report = diagnose(lattice_factory(rng), AlternatingLM(), exact_search(), 10)
            assert report.rank == 0
            assert np.isfinite(report.astar.score)

    def test_search_stats_dict(self):
        """Stats serialize to plain counters."""
        assert set(SearchStats().to_dict()) == {"pops", "inserts", "prunes", "max_stack", "final_stack"}
