"""A* lattice rescoring."""
from .config import SearchConfig
from .rescoring import InterpolatedLM, LatticeNgramLM, RescoringLM, SLMRescorer, TrigramRescorer
from .astar import DecodeResult, SearchFailureError, astar_decode, f_score, nbest, viterbi_decode
from .diagnosis import DiagnosisReport, check_admissibility, diagnose

__all__ = [
    "SearchConfig",
    "InterpolatedLM",
    "LatticeNgramLM",
    "RescoringLM",
    "SLMRescorer",
    "TrigramRescorer",
    "DecodeResult",
    "SearchFailureError",
    "astar_decode",
    "f_score",
    "nbest",
    "viterbi_decode",
    "DiagnosisReport",
    "check_admissibility",
    "diagnose",
]
