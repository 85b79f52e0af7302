"""Tests for deleted interpolation and the trigram baseline."""
import math
import random
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.models.deleted_interpolation import (
    ContextChain,
    DIConfig,
    DIModel,
    Event,
    count_bucket,
    split_heldout,
)
from src.models.trigram import TrigramLM, trigram_ppl
from src.text.vocabulary import OutOfVocabularyError, Vocabulary


def random_events(seed, n, vocab_size=5, context_size=3):
    rng = random.Random(seed)
    return [
        Event((rng.randrange(context_size), rng.randrange(context_size)), rng.randrange(vocab_size))
        for _ in range(n)
    ]


def random_corpus(seed, n, words=("a", "b", "c", "d"), max_len=6):
    rng = random.Random(seed)
    return [[rng.choice(words) for _ in range(rng.randint(1, max_len))] for _ in range(n)]


# ── deleted interpolation ───────────────────────────────────────────────────

class TestDIModel:
    """Test suite for the interpolated conditional tables."""

    def setup_method(self):
        self.chain = ContextChain.trigram()
        self.model = DIModel.train(
            random_events(1, 300), self.chain, random_events(2, 60), vocab_size=5,
        )

    def test_distribution_normalized(self):
        """Every context, seen or not, gives a proper distribution."""
        for context in [(0, 0), (1, 2), (2, 9), (9, 9)]:
            total = float(np.exp(self.model.distribution(context)).sum())
            assert abs(total - 1.0) < 1e-9

    def test_em_history_non_decreasing(self):
        """Held-out log-likelihood never drops across EM iterations."""
        history = self.model.em_history
        assert len(history) >= 2
        for before, after in zip(history, history[1:]):
            assert after >= before - 1e-9

    def test_hand_computed_probability(self):
        """Three levels of 0.5-weighted mixing over counts 2:1 in V=3."""
        events = [Event((0, 0), 1), Event((0, 0), 1), Event((0, 0), 2)]
        model = DIModel.train(events, self.chain, events, vocab_size=3, config=DIConfig(max_iterations=0))
        # () : .5*2/3 + .5*1/3 = .5 ; (0,) : .5*2/3 + .5*.5 ; (0,0) : .5*2/3 + .5*that
        assert math.exp(model.logprob((0, 0), 1)) == pytest.approx(0.625, abs=1e-12)

    def test_unseen_context_passes_through(self):
        """A context never seen at the upper levels scores like the empty context."""
        level = len(self.chain) - 1
        total = self.model.totals[level][()]
        lam = self.model.lambdas[level, count_bucket(total, self.model.max_bucket)]
        for event in range(5):
            count = self.model.counts[level][()].get(event, 0.0)
            expected = lam * count / total + (1 - lam) / 5
            assert math.exp(self.model.logprob((9, 9), event)) == pytest.approx(expected, rel=1e-12)

    def test_lower_order_consistency(self):
        """Contexts that agree on the kept positions share the lower estimate."""
        assert self.model.logprob((1, 9), 3) == self.model.logprob((1, 8), 3)
        assert self.model.logprob((1, 9), 3) != self.model.logprob((9, 9), 3)
        assert self.model.logprob((9, 8), 3) == self.model.logprob((7, 6), 3)

    def test_lambdas_in_unit_interval(self):
        """Interpolation weights stay within [0, 1]."""
        assert np.all(self.model.lambdas >= 0)
        assert np.all(self.model.lambdas <= 1)

    def test_fractional_weights(self):
        """Fractional events count by their weight."""
        events = [Event((0,), 1, 0.25), Event((0,), 2, 0.75)]
        model = DIModel.train(events, ContextChain.drop_rightmost(1), events, vocab_size=3)
        assert model.context_count((0,)) == pytest.approx(1.0)
        assert model.counts[0][(0,)][2] == pytest.approx(0.75)

    def test_empty_stream_rejected(self):
        """No training events is an error."""
        with pytest.raises(ValueError, match="Empty training"):
            DIModel.train([], self.chain, random_events(3, 5), vocab_size=5)

    def test_empty_heldout_rejected(self):
        """No held-out events is an error."""
        with pytest.raises(ValueError, match="Held-out"):
            DIModel.train(random_events(3, 5), self.chain, [], vocab_size=5)

    def test_event_out_of_range(self):
        """Event ids must lie in the vocabulary."""
        with pytest.raises(ValueError, match="out of range"):
            DIModel.train([Event((0, 0), 7)], self.chain, [Event((0, 0), 1)], vocab_size=5)

    def test_bytes_round_trip(self, tmp_path):
        """Saved models score identically."""
        path = tmp_path / "di.bin"
        self.model.save(path)
        loaded = DIModel.load(path)
        for context in [(0, 0), (1, 2), (9, 9)]:
            assert loaded.logprob(context, 3) == self.model.logprob(context, 3)
        assert loaded.em_history == self.model.em_history

    def test_bad_magic(self):
        """Foreign bytes are rejected."""
        with pytest.raises(ValueError, match="magic"):
            DIModel.from_bytes(b"not a model")

    def test_with_vocab_size_only_grows(self):
        """The event vocabulary can be extended but not shrunk."""
        assert self.model.with_vocab_size(8).vocab_size == 8
        with pytest.raises(ValueError):
            self.model.with_vocab_size(2)

    def test_text_dump_deterministic(self):
        """The readable dump is stable."""
        assert self.model.to_text() == self.model.to_text()
        assert self.model.to_text().startswith("# DIModel v1")


class TestContextHelpers:
    """Test suite for chains, buckets and held-out splitting."""

    def test_chain_must_end_empty(self):
        """The last level is the empty context."""
        with pytest.raises(ValueError):
            ContextChain(((0, 1), (0,)))

    def test_chain_levels_must_shrink(self):
        """Each level drops positions from the one above."""
        with pytest.raises(ValueError):
            ContextChain(((0,), (1,), ()))

    @pytest.mark.parametrize("count,bucket", [(0, 0), (1, 1), (2, 2), (3, 2), (4, 3), (1000, 10), (10**9, 16)])
    def test_count_bucket(self, count, bucket):
        """Buckets grow geometrically and saturate."""
        assert count_bucket(count) == bucket

    def test_split_heldout_tail(self):
        """The held-out part is the tail of the list."""
        train, heldout = split_heldout(list(range(20)), 0.1)
        assert heldout == [18, 19]
        assert train == list(range(18))

    def test_split_heldout_degenerate(self):
        """Zero fraction or one item reuses the training data."""
        items = [1, 2, 3]
        assert split_heldout(items, 0.0) == (items, items)
        assert split_heldout([1], 0.5) == ([1], [1])

    def test_split_heldout_keeps_training(self):
        """At least one item is left for training."""
        train, heldout = split_heldout([1, 2], 0.9)
        assert train == [1]
        assert heldout == [2]


# ── trigram ─────────────────────────────────────────────────────────────────

class TestTrigramLM:
    """Test suite for the trigram baseline."""

    def setup_method(self):
        self.corpus = random_corpus(4, 60)
        self.model = TrigramLM.train(self.corpus, config=DIConfig(heldout_fraction=0.1))

    def test_per_word_includes_end(self):
        """Every word plus </s> is predicted."""
        total, per_word = self.model.sentence_logprob(["a", "b", "c"])
        assert len(per_word) == 4
        assert total == pytest.approx(sum(per_word))

    def test_conditional_normalized(self):
        """P(. | w-1, w-2) sums to one over the vocabulary."""
        prev1, prev2 = self.model.start_context()
        for context in [(prev1, prev2), (self.model.vocab.encode("a"), prev1)]:
            total = sum(math.exp(self.model.logprob(w, *context)) for w in range(len(self.model.vocab)))
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_ppl_matches_sentence_scores(self):
        """Perplexity counts every predicted token."""
        corpus = self.corpus[:5]
        scores = [self.model.sentence_logprob(s) for s in corpus]
        n_tokens = sum(len(p) for _, p in scores)
        expected = math.exp(-sum(t for t, _ in scores) / n_tokens)
        assert trigram_ppl(self.model, corpus) == pytest.approx(expected)

    def test_oov_raises(self):
        """Closed vocabularies reject unknown words."""
        with pytest.raises(OutOfVocabularyError):
            trigram_ppl(self.model, [["a", "zebra"]])

    def test_supplied_vocabulary(self):
        """An explicit vocabulary fixes the event space."""
        vocab = Vocabulary(["a", "b", "c", "d", "e"])
        model = TrigramLM.train(self.corpus, vocab)
        assert model.model.vocab_size == len(vocab)
        assert model.sentence_logprob(["e"])[0] < 0

    def test_empty_corpus(self):
        """Training needs at least one sentence."""
        with pytest.raises(ValueError):
            TrigramLM.train([])

    def test_save_load(self, tmp_path):
        """Round trip through the model file."""
        path = tmp_path / "trigram.bin"
        self.model.save(path)
        loaded = TrigramLM.load(path)
        assert loaded.vocab == self.model.vocab
        assert loaded.sentence_logprob(["a", "d"]) == self.model.sentence_logprob(["a", "d"])

    def test_load_rejects_other_files(self, tmp_path):
        """A file without the trigram header is an error."""
        path = tmp_path / "junk.bin"
        path.write_bytes(b"junk")
        with pytest.raises(ValueError):
            TrigramLM.load(path)
