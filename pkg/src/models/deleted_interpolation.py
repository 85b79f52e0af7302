"""
Deleted-interpolation conditional probability tables.

A DIModel estimates P(event | context) by recursively mixing relative
frequencies along a chain of progressively coarser contexts:

    P_k(e | c) = lambda_k(b) * f_k(e | c_k) + (1 - lambda_k(b)) * P_{k+1}(e | c)

ending in the uniform distribution over the event vocabulary. The weights
are tied by a geometric bucket b of the level-k context count and estimated
by EM on held-out events. A level whose context was never seen passes the
lower-level estimate through unchanged.

Usage:
    chain = ContextChain.trigram()
    model = DIModel.train(events, chain, heldout, vocab_size=len(vocab))
    model.logprob((w1, w2), w)
"""
from __future__ import annotations

import io
import logging
import math
import pickle
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Hashable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"DIMODEL\n"
FORMAT_VERSION = 1

Context = Tuple[Hashable, ...]


class Event(NamedTuple):
    """One (possibly fractional) training observation."""

    context: Context
    event: int
    weight: float = 1.0


@dataclass(frozen=True)
class ContextChain:
    """
    Backoff structure: each level keeps a subset of the full context positions.

    Levels go from most specific to the empty context; the uniform floor is
    implicit after the last level.
    """

    levels: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("ContextChain needs at least one level")
        if self.levels[-1] != ():
            raise ValueError("The last context level must be the empty context")
        for upper, lower in zip(self.levels, self.levels[1:]):
            if not set(lower) <= set(upper) or len(lower) >= len(upper):
                raise ValueError(f"Level {lower} is not a reduction of {upper}")

    @classmethod
    def drop_rightmost(cls, width: int) -> "ContextChain":
        """(c0..c_{n-1}) -> (c0..c_{n-2}) -> ... -> ()."""
        return cls(tuple(tuple(range(n)) for n in range(width, -1, -1)))

    @classmethod
    def trigram(cls) -> "ContextChain":
        """(w-1, w-2) -> (w-1) -> ()."""
        return cls.drop_rightmost(2)

    def reduce(self, context: Context, level: int) -> Context:
        return tuple(context[i] for i in self.levels[level])

    def __len__(self) -> int:
        return len(self.levels)


@dataclass
class DIConfig:
    """Training knobs for deleted interpolation."""

    heldout_fraction: float = 0.05
    max_iterations: int = 20
    tolerance: float = 1e-12
    max_bucket: int = 16
    initial_lambda: float = 0.5


def count_bucket(count: float, max_bucket: int = 16) -> int:
    """Geometric bucket of a context count: 0, 1, 2-3, 4-7, ..."""
    if count <= 0:
        return 0
    return min(int(count).bit_length() if count >= 1 else 1, max_bucket)


class DIModel:
    """
    Deleted-interpolation model over integer events ``0 .. vocab_size-1``.

    Immutable after training; safe to share across scoring workers.
    """

    def __init__(
        self,
        chain: ContextChain,
        vocab_size: int,
        counts: List[Dict[Context, Dict[int, float]]],
        totals: List[Dict[Context, float]],
        lambdas: np.ndarray,
        max_bucket: int = 16,
        em_history: Sequence[float] = (),
    ):
        if vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        self.chain = chain
        self.vocab_size = vocab_size
        self.counts = counts
        self.totals = totals
        self.lambdas = lambdas
        self.max_bucket = max_bucket
        self.em_history = tuple(em_history)
        self._log_uniform = -math.log(vocab_size)

    # ------------------------------------------------------------------
    # Training
    # ------------------------------------------------------------------

    @classmethod
    def train(
        cls,
        events: Iterable[Event | Tuple],
        chain: ContextChain,
        heldout: Iterable[Event | Tuple],
        vocab_size: int,
        config: Optional[DIConfig] = None,
    ) -> "DIModel":
        """
        Accumulate counts at every level and estimate lambdas by EM on held-out.

        Raises:
            ValueError: empty training or held-out stream, or an event id out
                of range.
        """
        config = config or DIConfig()
        counts: List[Dict[Context, Dict[int, float]]] = [
            defaultdict(lambda: defaultdict(float)) for _ in chain.levels
        ]
        totals: List[Dict[Context, float]] = [defaultdict(float) for _ in chain.levels]
        n_events = 0
        for item in events:
            ev = Event(*item)
            _check_event(ev.event, vocab_size)
            for level in range(len(chain)):
                key = chain.reduce(ev.context, level)
                counts[level][key][ev.event] += ev.weight
                totals[level][key] += ev.weight
            n_events += 1
        if n_events == 0:
            raise ValueError("Empty training event stream")

        frozen_counts = [{ctx: dict(table) for ctx, table in level.items()} for level in counts]
        frozen_totals = [dict(level) for level in totals]
        lambdas = np.full((len(chain), config.max_bucket + 1), config.initial_lambda)
        model = cls(chain, vocab_size, frozen_counts, frozen_totals, lambdas, config.max_bucket)

        heldout_events = [Event(*item) for item in heldout]
        if not heldout_events:
            raise ValueError("Held-out event stream is empty")
        for ev in heldout_events:
            _check_event(ev.event, vocab_size)
        model._estimate_lambdas(heldout_events, config)
        logger.debug(
            "Trained DI model: %d events, %d levels, V=%d, held-out LL %s",
            n_events, len(chain), vocab_size,
            f"{model.em_history[-1]:.4f}" if model.em_history else "n/a",
        )
        return model

    def _estimate_lambdas(self, heldout: List[Event], config: DIConfig) -> None:
        """Baum-Welch over the nested binary choices at each level."""
        n_levels = len(self.chain)
        history: List[float] = [self.heldout_loglik(heldout)]
        for iteration in range(config.max_iterations):
            use = np.zeros_like(self.lambdas)
            passed = np.zeros_like(self.lambdas)
            for ev in heldout:
                # Mixture components from the most specific level downwards.
                weights: List[Tuple[int, int, float]] = []
                reach = 1.0
                total = 0.0
                for level in range(n_levels):
                    key = self.chain.reduce(ev.context, level)
                    ctx_total = self.totals[level].get(key, 0.0)
                    if ctx_total <= 0:
                        continue
                    bucket = count_bucket(ctx_total, self.max_bucket)
                    lam = self.lambdas[level, bucket]
                    rel = self.counts[level][key].get(ev.event, 0.0) / ctx_total
                    weights.append((level, bucket, reach * lam * rel))
                    total += reach * lam * rel
                    reach *= 1.0 - lam
                floor = reach / self.vocab_size
                total += floor
                if total <= 0 or not weights:
                    continue
                # Posterior of each component; a level is "passed" by every
                # component strictly below it.
                tail = floor / total
                for level, bucket, mass in reversed(weights):
                    post = mass / total
                    use[level, bucket] += ev.weight * post
                    passed[level, bucket] += ev.weight * tail
                    tail += post
            seen = (use + passed) > 0
            updated = self.lambdas.copy()
            updated[seen] = use[seen] / (use[seen] + passed[seen])
            self.lambdas = updated
            history.append(self.heldout_loglik(heldout))
            if history[-1] - history[-2] < config.tolerance:
                break
        self.em_history = tuple(history)

    # ------------------------------------------------------------------
    # Scoring
    # ------------------------------------------------------------------

    def logprob(self, context: Context, event: int) -> float:
        """Natural-log probability of ``event`` given ``context``."""
        logp = self._log_uniform
        for level in range(len(self.chain) - 1, -1, -1):
            key = self.chain.reduce(context, level)
            ctx_total = self.totals[level].get(key, 0.0)
            if ctx_total <= 0:
                continue
            lam = self.lambdas[level, count_bucket(ctx_total, self.max_bucket)]
            count = self.counts[level][key].get(event, 0.0)
            top = math.log(lam) + math.log(count / ctx_total) if lam > 0 and count > 0 else -math.inf
            rest = math.log1p(-lam) + logp if lam < 1 else -math.inf
            logp = float(np.logaddexp(top, rest))
        return logp

    def distribution(self, context: Context) -> np.ndarray:
        """Log-probabilities of every event under ``context``."""
        return np.array([self.logprob(context, e) for e in range(self.vocab_size)])

    def heldout_loglik(self, events: Iterable[Event | Tuple]) -> float:
        total = 0.0
        for item in events:
            ev = Event(*item)
            total += ev.weight * self.logprob(ev.context, ev.event)
        return total

    def context_count(self, context: Context, level: int = 0) -> float:
        return self.totals[level].get(self.chain.reduce(context, level), 0.0)

    # ------------------------------------------------------------------
    # Derived models
    # ------------------------------------------------------------------

    def with_vocab_size(self, vocab_size: int) -> "DIModel":
        """Same counts and weights over a larger event vocabulary."""
        if vocab_size < self.vocab_size:
            raise ValueError("Event vocabulary can only grow")
        return DIModel(
            self.chain, vocab_size, self.counts, self.totals, self.lambdas,
            self.max_bucket, self.em_history,
        )

    def remap_contexts(self, chain: ContextChain, mapper: Callable[[Context], Context]) -> "DIModel":
        """
        Re-key every level through ``mapper`` under a new chain of equal depth.

        ``mapper`` must take a reduced context at level k of this chain to the
        reduced context at level k of ``chain``.
        """
        if len(chain) != len(self.chain):
            raise ValueError("Chains must have the same number of levels")
        counts = [{mapper(ctx): table for ctx, table in level.items()} for level in self.counts]
        totals = [{mapper(ctx): total for ctx, total in level.items()} for level in self.totals]
        return DIModel(chain, self.vocab_size, counts, totals, self.lambdas.copy(), self.max_bucket, self.em_history)

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "levels": self.chain.levels,
            "vocab_size": self.vocab_size,
            "counts": self.counts,
            "totals": self.totals,
            "lambdas": self.lambdas.tolist(),
            "max_bucket": self.max_bucket,
            "em_history": list(self.em_history),
        }

    @classmethod
    def from_state(cls, state: dict) -> "DIModel":
        return cls(
            ContextChain(tuple(tuple(level) for level in state["levels"])),
            state["vocab_size"],
            state["counts"],
            state["totals"],
            np.asarray(state["lambdas"], dtype=float),
            state["max_bucket"],
            state.get("em_history", ()),
        )

    def to_bytes(self) -> bytes:
        buffer = io.BytesIO()
        buffer.write(MAGIC)
        buffer.write(f"{FORMAT_VERSION}\n".encode("ascii"))
        pickle.dump(self.to_state(), buffer, protocol=pickle.HIGHEST_PROTOCOL)
        return buffer.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DIModel":
        if not data.startswith(MAGIC):
            raise ValueError("Not a DI model file (bad magic header)")
        rest = data[len(MAGIC):]
        version_line, _, payload = rest.partition(b"\n")
        if int(version_line) != FORMAT_VERSION:
            raise ValueError(f"Unsupported DI model version {version_line.decode()}")
        return cls.from_state(pickle.loads(payload))

    def save(self, path: Path | str) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Path | str) -> "DIModel":
        return cls.from_bytes(Path(path).read_bytes())

    def to_text(self) -> str:
        """Human-readable dump, deterministic for diffing."""
        lines = [
            f"# DIModel v{FORMAT_VERSION}",
            f"vocab_size {self.vocab_size}",
            f"levels {len(self.chain)}",
        ]
        for level, keep in enumerate(self.chain.levels):
            lines.append(f"\\level {level} keep={list(keep)}")
            lines.append("lambdas " + " ".join(f"{x:.6f}" for x in self.lambdas[level]))
            for ctx in sorted(self.counts[level], key=repr):
                table = self.counts[level][ctx]
                cells = " ".join(f"{e}:{c:g}" for e, c in sorted(table.items()))
                lines.append(f"{ctx!r}\t{self.totals[level][ctx]:g}\t{cells}")
        return "\n".join(lines) + "\n"


def _check_event(event: int, vocab_size: int) -> None:
    if not 0 <= event < vocab_size:
        raise ValueError(f"Event id {event} out of range for vocabulary of size {vocab_size}")


def split_heldout(items: Sequence, fraction: float) -> Tuple[Sequence, Sequence]:
    """
    Split off the last ``fraction`` of ``items`` as held-out data.

    At least one item is held out when ``fraction > 0``. With ``fraction == 0``
    or a single item, the held-out set is the training set itself.
    """
    if fraction <= 0 or len(items) < 2:
        return items, items
    n_heldout = max(1, int(math.ceil(len(items) * fraction)))
    n_heldout = min(n_heldout, len(items) - 1)
    return items[:-n_heldout], items[-n_heldout:]
