"""Language models: deleted-interpolation trigram and the structured LM."""
from .deleted_interpolation import ContextChain, DIConfig, DIModel, Event
from .trigram import TrigramLM, trigram_ppl
from .slm import (
    IllegalActionError,
    ParserAction,
    SLModel,
    WordParsePrefix,
    apply_action,
    init_from_treebank,
    trigram_equivalent,
)
from .slm_search import (
    BeamConfig,
    SearchStarvationError,
    StackSet,
    best_parse,
    extend_with_word,
    slm_sentence_ppl,
    slm_word_prob,
)
from .reestimation import ReestimationReport, reestimate, run_em
from .evaluation import report_ppl, sign_test, wer

__all__ = [
    "ContextChain",
    "DIConfig",
    "DIModel",
    "Event",
    "TrigramLM",
    "trigram_ppl",
    "IllegalActionError",
    "ParserAction",
    "SLModel",
    "WordParsePrefix",
    "apply_action",
    "init_from_treebank",
    "trigram_equivalent",
    "BeamConfig",
    "SearchStarvationError",
    "StackSet",
    "best_parse",
    "extend_with_word",
    "slm_sentence_ppl",
    "slm_word_prob",
    "ReestimationReport",
    "reestimate",
    "run_em",
    "report_ppl",
    "sign_test",
    "wer",
]
