#!/usr/bin/env python3
"""
Structured language model toolkit: batch command line.

Typical toy run:

    python slm_pipeline.py make-toy-data --output-dir data_files/toy
    python slm_pipeline.py pipeline --work-dir runs/toy --data-dir data_files/toy
"""

import argparse
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from src.decoder.config import FINAL_TERM_RULES, SearchConfig
from src.models.deleted_interpolation import DIConfig
from src.models.evaluation import TABLE_LAMBDAS
from src.models.slm_search import BeamConfig
from src.pipeline.commands import LM_KINDS, run_command


def _limit(value) -> str:
    return "none" if value is None else str(value)


def _parents():
    """Shared option groups; flag defaults are None so config files can fill them."""
    search_defaults = SearchConfig()
    search = argparse.ArgumentParser(add_help=False)
    group = search.add_argument_group("lattice search")
    group.add_argument("--search-config", type=Path, help="key=value file with search parameters")
    group.add_argument("--lm-weight", type=float, help=f"LM weight (default: {search_defaults.lm_weight})")
    group.add_argument("--log-p-ip", type=float, help=f"insertion penalty logP_IP (default: {search_defaults.log_p_ip})")
    group.add_argument("--log-p-comp", type=float,
                       help=f"per-word compensation logP_COMP (default: {search_defaults.log_p_comp})")
    group.add_argument("--log-p-final", type=float,
                       help=f"suffix compensation logP_FINAL (default: {search_defaults.log_p_final})")
    group.add_argument("--stack-depth-threshold", type=str,
                       help=f"max A* stack entries, or 'none' (default: {_limit(search_defaults.stack_depth_threshold)})")
    group.add_argument("--stack-logp-threshold", type=str,
                       help=f"max g spread on the A* stack, or 'none' "
                            f"(default: {_limit(search_defaults.stack_logp_threshold)})")
    group.add_argument("--final-term-rule", choices=FINAL_TERM_RULES,
                       help=f"when logP_FINAL applies (default: {search_defaults.final_term_rule})")

    beam_defaults = BeamConfig()
    beams = argparse.ArgumentParser(add_help=False)
    group = beams.add_argument_group("SLM beams")
    group.add_argument("--beam-config", type=Path, help="key=value file with SLM beam parameters")
    group.add_argument("--beam-stack-depth-threshold", type=str,
                       help=f"max prefixes per SLM stack, or 'none' "
                            f"(default: {_limit(beam_defaults.stack_depth_threshold)})")
    group.add_argument("--beam-stack-logp-threshold", type=str,
                       help=f"max log-prob spread per SLM stack, or 'none' "
                            f"(default: {_limit(beam_defaults.stack_logp_threshold)})")
    group.add_argument("--phase-beam", type=str,
                       help=f"log-prob beam inside a parser phase, or 'none' (default: {_limit(beam_defaults.phase_beam)})")

    training = argparse.ArgumentParser(add_help=False)
    group = training.add_argument_group("training")
    group.add_argument("--heldout-fraction", type=float,
                       help=f"trailing share of sentences held out for interpolation weights "
                            f"(default: {DIConfig().heldout_fraction})")

    text = argparse.ArgumentParser(add_help=False)
    group = text.add_argument_group("text")
    group.add_argument("--token-map", type=Path, help="token map file (default: data_files/token_map.txt)")
    group.add_argument("--head-rules", type=Path, help="head percolation rules (default: data_files/head_rules.txt)")

    lm = argparse.ArgumentParser(add_help=False)
    group = lm.add_argument_group("rescoring LM")
    group.add_argument("--lm", choices=LM_KINDS, default="interpolated", help="rescoring LM (default: interpolated)")
    group.add_argument("--trigram", type=Path, help="trigram model file")
    group.add_argument("--slm", type=Path, help="SLM model file")
    group.add_argument("--lam", type=float, default=0.4, help="trigram weight in the mixture (default: 0.4)")
    group.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--manifest", type=Path, help="manifest path (default: <output>.manifest)")
    common.add_argument("--record-timing", action="store_true", help="add wall-clock fields to the manifest")
    return common, text, training, beams, search, lm


def build_parser() -> argparse.ArgumentParser:
    common, text, training, beams, search, lm = _parents()
    parser = argparse.ArgumentParser(description="Structured language model training and lattice rescoring")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", parents=[common, text], help="apply (or undo) the token map to a corpus")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--undo", action="store_true", help="merge split tokens back")

    p = sub.add_parser("train-ngram", parents=[common, training], help="train the deleted-interpolation trigram")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--vocab-corpus", type=Path, nargs="*", help="extra corpora whose words join the vocabulary")
    p.add_argument("--text-dump", type=Path, help="also write a readable dump of the model")

    p = sub.add_parser("train-slm", parents=[common, text, training], help="initialize an SLM from a treebank")
    p.add_argument("--treebank", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--vocab-corpus", type=Path, nargs="*", help="extra corpora whose words join the vocabulary")

    p = sub.add_parser("parse-transfer", parents=[common, beams], help="best-parse a corpus into a treebank")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--union-vocab", action="store_true",
                   help="extend the model vocabulary with the corpus vocabulary before parsing")

    p = sub.add_parser("reestimate", parents=[common, beams, training], help="N-best EM reestimation")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--n-best", type=int, default=10, help="parses per sentence (default: 10)")
    p.add_argument("--iterations", type=int, default=1, help="EM passes (default: 1)")

    p = sub.add_parser("split-lattice", parents=[common, text], help="split contraction links")
    p.add_argument("--input", type=Path, required=True, help="lattice file or directory")
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("rescore", parents=[common, search, beams, lm], help="A* lattice rescoring")
    p.add_argument("--lattices", type=Path, required=True, help="lattice file or directory")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--stats", type=Path, help="sidecar search statistics")

    p = sub.add_parser("nbest", parents=[common, search], help="n-gram N-best paths")
    p.add_argument("--lattices", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--n", type=int, default=25, help="paths per lattice (default: 25)")

    p = sub.add_parser("viterbi", parents=[common, search], help="best path under the lattice n-gram scores")
    p.add_argument("--lattices", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("diagnose", parents=[common, search, beams, lm], help="rank A* output among N-best paths")
    p.add_argument("--lattices", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--n", type=int, default=25, help="N-best sample size (default: 25)")
    p.add_argument("--nbest-output", type=Path, help="transcripts of the rescored N-best winners")
    p.add_argument("--table", type=Path, help="per-lattice CSV table")
    p.add_argument("--check-admissibility", action="store_true")

    p = sub.add_parser("ppl", parents=[common, beams], help="perplexity table")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--trigram", type=Path, required=True)
    p.add_argument("--slm", nargs="*", default=[], help="SLM models as name=path")
    p.add_argument("--lambdas", type=float, nargs="+", default=list(TABLE_LAMBDAS),
                   help="trigram weights (default: 0.0 0.4 1.0)")
    p.add_argument("--output", type=Path, help="CSV table")
    p.add_argument("--compensation", action="store_true", help="estimate logP_COMP from the last SLM")

    p = sub.add_parser("wer", parents=[common, text], help="word error rate with tokenization undo")
    p.add_argument("--refs", type=Path, required=True)
    p.add_argument("--hyps", type=Path, required=True, help="decode output: <id> <score> <words>")
    p.add_argument("--compare", type=Path, help="second decode output for a sign test")
    p.add_argument("--output", type=Path)
    p.add_argument("--alignment", type=Path, help="aligned REF/HYP report")

    p = sub.add_parser("make-toy-data", parents=[common, text], help="write the synthetic toy data set")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--n-trees", type=int, default=200)
    p.add_argument("--n-lattices", type=int, default=20)

    p = sub.add_parser("pipeline", parents=[common, text, training, beams, search],
                       help="init -> parse-transfer -> retrain -> split -> rescore -> wer")
    p.add_argument("--work-dir", type=Path, required=True)
    p.add_argument("--data-dir", type=Path, help="existing toy data (default: generate into <work-dir>/toy)")
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--lam", type=float, default=0.4)
    p.add_argument("--lambdas", type=float, nargs="+", default=list(TABLE_LAMBDAS))
    p.add_argument("--em-iterations", type=int, default=1)
    p.add_argument("--n-best", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
