"""Lattice search parameters."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Dict, Optional

FINAL_TERM_RULES = ("as-printed", "inclusive")


@dataclass(frozen=True)
class SearchConfig:
    """
    Scoring weights and stack limits for A* lattice rescoring.

    Path score:  sum_i am_i + lm_weight * logP_LM(w_i | prefix) - log_p_ip
    Lookahead:   sum_j am_j + lm_weight * (lm_j + log_p_comp) - log_p_ip
                 + lm_weight * log_p_final (see ``final_term_rule``)

    ``final_term_rule`` selects when the final compensation applies:
    ``as-printed`` only for continuations of two or more links,
    ``inclusive`` for every non-empty continuation. A ``None`` stack
    threshold means unbounded.
    """

    lm_weight: float = 12.0
    log_p_ip: float = 10.0
    log_p_comp: float = 0.5
    log_p_final: float = 2.0
    stack_depth_threshold: Optional[int] = 30
    stack_logp_threshold: Optional[float] = 100.0
    final_term_rule: str = "as-printed"

    def __post_init__(self) -> None:
        if not self.lm_weight > 0:
            raise ValueError(f"lm_weight must be > 0, got {self.lm_weight}")
        for name in ("log_p_ip", "log_p_comp", "log_p_final"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.stack_depth_threshold is not None and (
            int(self.stack_depth_threshold) != self.stack_depth_threshold or self.stack_depth_threshold < 1
        ):
            raise ValueError(f"stack_depth_threshold must be a positive integer, got {self.stack_depth_threshold}")
        if self.stack_logp_threshold is not None and not self.stack_logp_threshold > 0:
            raise ValueError(f"stack_logp_threshold must be > 0, got {self.stack_logp_threshold}")
        if self.final_term_rule not in FINAL_TERM_RULES:
            raise ValueError(f"Unknown final_term_rule: {self.final_term_rule}")

    @classmethod
    def exhaustive(cls, **overrides: Any) -> "SearchConfig":
        """Config with both stack limits disabled."""
        overrides.setdefault("stack_depth_threshold", None)
        overrides.setdefault("stack_logp_threshold", None)
        return cls(**overrides)

    def replace(self, **changes: Any) -> "SearchConfig":
        return dataclasses.replace(self, **changes)

    @property
    def is_unbounded(self) -> bool:
        return self.stack_depth_threshold is None and self.stack_logp_threshold is None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)
