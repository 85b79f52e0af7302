"""
Batch subcommands.

Each ``cmd_*`` function adapts one library operation to files: it reads its
inputs, calls the operation and writes outputs through a :class:`RunContext`,
which records digests in the run manifest and removes anything it wrote if
the command fails.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd

from src.decoder.astar import SearchFailureError, astar_decode, nbest, viterbi_decode
from src.decoder.config import SearchConfig
from src.decoder.diagnosis import DiagnosisReport, check_admissibility, diagnose, summarize
from src.decoder.rescoring import InterpolatedLM, LatticeNgramLM, RescoringLM, SLMRescorer, TrigramRescorer
from src.lattice.lattice import read_lattice_file, split_links, write_lattice_file
from src.models.deleted_interpolation import DIConfig
from src.models.evaluation import estimate_compensation, report_ppl, sign_test, wer
from src.models.reestimation import run_em
from src.models.slm import SLModel, init_from_treebank
from src.models.slm_search import BeamConfig, SearchStarvationError, parse_corpus
from src.models.trigram import TrigramLM, trigram_ppl
from src.pipeline.manifest import RunManifest, manifest_path
from src.pipeline.toy_data import ToyConfig, write_toy_data
from src.text.token_map import DEFAULT_TOKEN_MAP, TokenMap, denormalize, normalize
from src.text.treebank import DEFAULT_HEAD_RULES, HeadRules, binarize_and_headify, read_treebank_file, write_treebank
from src.text.vocabulary import OutOfVocabularyError, Vocabulary
from src.utils.config import build_config, read_key_values
from src.utils.storage import (
    format_corpus,
    read_corpus,
    read_id_corpus,
    remove_empty_dirs,
    remove_outputs,
    write_text_atomic,
)

logger = logging.getLogger(__name__)

LM_KINDS = ("ngram", "trigram", "slm", "interpolated")

# flag dest -> BeamConfig field
BEAM_FLAGS = {
    "beam_stack_depth_threshold": "stack_depth_threshold",
    "beam_stack_logp_threshold": "stack_logp_threshold",
    "phase_beam": "phase_beam",
}
SEARCH_FLAGS = (
    "lm_weight",
    "log_p_ip",
    "log_p_comp",
    "log_p_final",
    "stack_depth_threshold",
    "stack_logp_threshold",
    "final_term_rule",
)


class RunContext:
    """Output bookkeeping for one subcommand run."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self.written: List[Path] = []
        self.created_dirs: List[Path] = []
        self.named: Dict[str, Path] = {}

    def track(self, name: Optional[str], path: Path | str) -> Path:
        """Register an output file for rollback; named outputs get a manifest digest."""
        path = Path(path)
        self.make_dir(path.parent)
        self.written.append(path)
        if name is not None:
            self.named[name] = path
        return path

    def make_dir(self, path: Path | str, name: Optional[str] = None) -> Path:
        """Create ``path`` and its missing parents; only those are removed on rollback."""
        path = Path(path)
        missing: List[Path] = []
        current = path
        while not current.exists():
            missing.append(current)
            current = current.parent
        path.mkdir(parents=True, exist_ok=True)
        self.created_dirs.extend(reversed(missing))
        if name is not None:
            self.named[name] = path
        return path

    def write_text(self, name: str, path: Path | str, text: str) -> Path:
        path = self.track(name, path)
        write_text_atomic(path, text)
        return path

    def merge(self, other: "RunContext") -> None:
        self.written.extend(other.written)
        self.created_dirs.extend(other.created_dirs)

    def finalize(self) -> None:
        self.manifest.add_outputs(self.named)

    def rollback(self) -> int:
        """Remove written files, then the directories this run created if they are empty."""
        removed = remove_outputs(self.written)
        remove_empty_dirs(self.created_dirs)
        return removed


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def resolve_search_config(args: argparse.Namespace) -> SearchConfig:
    """Flags > ``--search-config`` file > defaults."""
    file_values = read_key_values(args.search_config) if getattr(args, "search_config", None) else {}
    flags = {name: getattr(args, name, None) for name in SEARCH_FLAGS}
    return build_config(SearchConfig, file_values, flags)


def resolve_beam_config(args: argparse.Namespace) -> BeamConfig:
    """Flags > ``--beam-config`` file > defaults."""
    file_values = read_key_values(args.beam_config) if getattr(args, "beam_config", None) else {}
    flags = {field: getattr(args, dest, None) for dest, field in BEAM_FLAGS.items()}
    return build_config(BeamConfig, file_values, flags)


def resolve_di_config(args: argparse.Namespace) -> DIConfig:
    flags = {"heldout_fraction": getattr(args, "heldout_fraction", None)}
    return build_config(DIConfig, {}, flags)


def load_token_map(args: argparse.Namespace) -> TokenMap:
    path = getattr(args, "token_map", None)
    if path is None and DEFAULT_TOKEN_MAP.exists():
        path = DEFAULT_TOKEN_MAP
    return TokenMap.from_file(path) if path is not None else TokenMap.default()


def load_head_rules(args: argparse.Namespace) -> HeadRules:
    path = getattr(args, "head_rules", None)
    if path is None and DEFAULT_HEAD_RULES.exists():
        path = DEFAULT_HEAD_RULES
    return HeadRules.from_file(path) if path is not None else HeadRules()


def lattice_files(path: Path | str) -> List[Path]:
    """A single lattice file, or every ``*.lat`` / ``*.lat.gz`` in a directory by name."""
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.name.endswith((".lat", ".lat.gz")))
    return [path]


# ---------------------------------------------------------------------------
# Rescoring LMs and the worker pool
# ---------------------------------------------------------------------------

def build_rescoring_lm(
    kind: str,
    trigram_path: Optional[Path | str] = None,
    slm_path: Optional[Path | str] = None,
    lam: float = 0.4,
    beams: Optional[BeamConfig] = None,
) -> RescoringLM:
    """
    ``lam`` weighs the trigram in the interpolated model.

    Raises:
        ValueError: unknown kind or a missing model path.
    """
    if kind not in LM_KINDS:
        raise ValueError(f"Unknown LM kind: {kind}")
    if kind == "ngram":
        return LatticeNgramLM()
    if kind in ("trigram", "interpolated") and trigram_path is None:
        raise ValueError(f"--trigram is required for --lm {kind}")
    if kind in ("slm", "interpolated") and slm_path is None:
        raise ValueError(f"--slm is required for --lm {kind}")
    if kind == "trigram":
        return TrigramRescorer(TrigramLM.load(trigram_path))  # type: ignore[arg-type]
    slm = SLMRescorer(SLModel.load(slm_path), beams)  # type: ignore[arg-type]
    if kind == "slm":
        return slm
    return InterpolatedLM(TrigramRescorer(TrigramLM.load(trigram_path)), slm, lam)  # type: ignore[arg-type]


_WORKER: Dict[str, Any] = {}


def _init_worker(lm_spec: Dict[str, Any], config: SearchConfig) -> None:
    _WORKER["lm"] = build_rescoring_lm(**lm_spec)
    _WORKER["config"] = config


def _decode_task(task: Tuple[str, str]) -> Tuple[str, Any]:
    """Run one lattice in the worker; failures come back as values."""
    mode, path = task
    lm: RescoringLM = _WORKER["lm"]
    config: SearchConfig = _WORKER["config"]
    lattice = read_lattice_file(path)
    lm.reset()
    try:
        if mode == "astar":
            return "ok", astar_decode(lattice, lm, config)
        return "ok", diagnose(lattice, lm, config, _WORKER.get("n", 25))
    except (SearchFailureError, SearchStarvationError, OutOfVocabularyError) as exc:
        return "failed", f"{lattice.utterance}: {type(exc).__name__}: {exc}"


def _init_diagnose_worker(lm_spec: Dict[str, Any], config: SearchConfig, n: int) -> None:
    _init_worker(lm_spec, config)
    _WORKER["n"] = n


def run_pool(
    tasks: Sequence[Any],
    func: Callable[[Any], Any],
    jobs: int,
    initializer: Callable[..., None],
    initargs: tuple,
) -> List[Any]:
    """Map ``func`` over ``tasks`` in order; ``jobs == 1`` runs in-process."""
    if jobs <= 1:
        initializer(*initargs)
        return [func(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(func, tasks))


def _lm_spec(args: argparse.Namespace, beams: BeamConfig) -> Dict[str, Any]:
    return {
        "kind": args.lm,
        "trigram_path": args.trigram,
        "slm_path": args.slm,
        "lam": args.lam,
        "beams": beams,
    }


# ---------------------------------------------------------------------------
# Corpus / model commands
# ---------------------------------------------------------------------------

def cmd_normalize(args: argparse.Namespace, ctx: RunContext) -> None:
    token_map = load_token_map(args)
    sentences = read_corpus(args.input)
    convert = denormalize if args.undo else normalize
    out = [convert(s, token_map) for s in sentences]
    ctx.manifest.add_inputs({"input": args.input})
    ctx.write_text("output", args.output, format_corpus(out))
    logger.info("%s %d sentences -> %s", "Denormalized" if args.undo else "Normalized", len(out), args.output)


def cmd_train_ngram(args: argparse.Namespace, ctx: RunContext) -> None:
    config = resolve_di_config(args)
    ctx.manifest.config.update({f"di.{k}": v for k, v in vars(config).items()})
    sentences = read_corpus(args.corpus)
    vocab = None
    if args.vocab_corpus:
        vocab = Vocabulary.from_sentences(sentences + [s for p in args.vocab_corpus for s in read_corpus(p)])
    model = TrigramLM.train(sentences, vocab, config)
    ctx.manifest.add_inputs({"corpus": args.corpus})
    model.save(ctx.track("model", args.output))
    if args.text_dump:
        ctx.write_text("text_dump", args.text_dump, model.model.to_text())


def _binarized_trees(path: Path | str, rules: HeadRules):
    return [binarize_and_headify(tree, rules) for tree in read_treebank_file(path)]


def cmd_train_slm(args: argparse.Namespace, ctx: RunContext) -> None:
    config = resolve_di_config(args)
    ctx.manifest.config.update({f"di.{k}": v for k, v in vars(config).items()})
    trees = _binarized_trees(args.treebank, load_head_rules(args))
    words = None
    if args.vocab_corpus:
        extra = [s for p in args.vocab_corpus for s in read_corpus(p)]
        words = Vocabulary.from_sentences([t.words() for t in trees] + extra)
    model = init_from_treebank(trees, config, words)
    ctx.manifest.add_inputs({"treebank": args.treebank, "head_rules": args.head_rules})
    model.save(ctx.track("model", args.output))


def cmd_parse_transfer(args: argparse.Namespace, ctx: RunContext) -> None:
    beams = resolve_beam_config(args)
    ctx.manifest.config.update({f"beam.{k}": v for k, v in vars(beams).items()})
    model = SLModel.load(args.model)
    corpus = read_corpus(args.corpus)
    if args.union_vocab:
        model = model.with_word_vocabulary(model.words.union(Vocabulary.from_sentences(corpus)))
        logger.info("Word vocabulary extended to %d entries", len(model.words))
    trees, failures = parse_corpus(model, corpus, beams)
    ctx.manifest.add_inputs({"model": args.model, "corpus": args.corpus})
    ctx.manifest.config["parse_failures"] = len(failures)
    ctx.write_text("treebank", args.output, write_treebank(trees))
    logger.info("Transferred %d/%d parses to %s", len(trees), len(corpus), args.output)


def cmd_reestimate(args: argparse.Namespace, ctx: RunContext) -> None:
    beams = resolve_beam_config(args)
    config = resolve_di_config(args)
    ctx.manifest.config.update({f"beam.{k}": v for k, v in vars(beams).items()})
    ctx.manifest.config.update({"n_best": args.n_best, "iterations": args.iterations})
    model = SLModel.load(args.model)
    corpus = read_corpus(args.corpus)
    model, reports = run_em(model, corpus, args.iterations, args.n_best, beams, config)
    ctx.manifest.add_inputs({"model": args.model, "corpus": args.corpus})
    for report in reports:
        ctx.manifest.config[f"em.{report.iteration}.nbest_loglik"] = report.nbest_loglik
        ctx.manifest.config[f"em.{report.iteration}.skipped"] = report.skipped
    model.save(ctx.track("model", args.output))


# ---------------------------------------------------------------------------
# Lattice commands
# ---------------------------------------------------------------------------

def cmd_split_lattice(args: argparse.Namespace, ctx: RunContext) -> None:
    token_map = load_token_map(args)
    sources = lattice_files(args.input)
    out = Path(args.output)
    to_dir = Path(args.input).is_dir()
    if to_dir:
        ctx.make_dir(out, "lattices")
    for source in sources:
        target = out / source.name if to_dir else out
        target = ctx.track(None if to_dir else "lattices", target)
        write_lattice_file(split_links(read_lattice_file(source), token_map), target)
    ctx.manifest.add_inputs({"lattices": args.input})
    logger.info("Split %d lattices into %s", len(sources), out)


def _decode_lines(results: Iterable[Tuple[str, Any]]) -> Tuple[List[str], List[str]]:
    lines, failures = [], []
    for status, value in results:
        if status == "ok":
            lines.append(value.line() + "\n")
        else:
            logger.warning("Decode failed: %s", value)
            failures.append(value)
    return lines, failures


def cmd_rescore(args: argparse.Namespace, ctx: RunContext) -> None:
    config = resolve_search_config(args)
    beams = resolve_beam_config(args)
    ctx.manifest.config.update(config.to_dict())
    ctx.manifest.config.update({f"beam.{k}": v for k, v in vars(beams).items()})
    ctx.manifest.config.update({"lm": args.lm, "lam": args.lam, "jobs": args.jobs})
    files = lattice_files(args.lattices)
    results = run_pool(
        [("astar", str(f)) for f in files], _decode_task, args.jobs,
        _init_worker, (_lm_spec(args, beams), config),
    )
    lines, failures = _decode_lines(results)
    ctx.manifest.add_inputs({"lattices": args.lattices, "trigram": args.trigram, "slm": args.slm})
    ctx.manifest.config["failures"] = len(failures)
    ctx.write_text("hyps", args.output, "".join(lines))
    if args.stats:
        blocks = []
        for status, value in results:
            if status == "ok":
                stats = "\n".join(f"{k}={v}" for k, v in value.stats.to_dict().items())
                blocks.append(f"utterance={value.utterance}\n{stats}\n")
        ctx.write_text("stats", args.stats, "\n".join(blocks))


def cmd_nbest(args: argparse.Namespace, ctx: RunContext) -> None:
    config = resolve_search_config(args)
    ctx.manifest.config.update(config.to_dict())
    ctx.manifest.config["n"] = args.n
    lines = []
    for path in lattice_files(args.lattices):
        lattice = read_lattice_file(path)
        for rank, scored in enumerate(nbest(lattice, config, args.n)):
            lines.append(f"{lattice.utterance} {rank} {scored.score!r} {' '.join(scored.words)}".rstrip() + "\n")
    ctx.manifest.add_inputs({"lattices": args.lattices})
    ctx.write_text("nbest", args.output, "".join(lines))


def cmd_viterbi(args: argparse.Namespace, ctx: RunContext) -> None:
    config = resolve_search_config(args)
    ctx.manifest.config.update(config.to_dict())
    lines = [viterbi_decode(read_lattice_file(p), config).line() + "\n" for p in lattice_files(args.lattices)]
    ctx.manifest.add_inputs({"lattices": args.lattices})
    ctx.write_text("hyps", args.output, "".join(lines))


def cmd_diagnose(args: argparse.Namespace, ctx: RunContext) -> None:
    config = resolve_search_config(args)
    beams = resolve_beam_config(args)
    ctx.manifest.config.update(config.to_dict())
    ctx.manifest.config.update({"lm": args.lm, "lam": args.lam, "n": args.n})
    files = lattice_files(args.lattices)
    results = run_pool(
        [("diagnose", str(f)) for f in files], _decode_task, args.jobs,
        _init_diagnose_worker, (_lm_spec(args, beams), config, args.n),
    )
    reports: List[DiagnosisReport] = []
    failures = 0
    for status, value in results:
        if status == "ok":
            reports.append(value)
        else:
            logger.warning("Diagnosis failed: %s", value)
            failures += 1
    ctx.manifest.config["failures"] = failures
    summary = summarize(reports)
    ctx.manifest.add_inputs({"lattices": args.lattices, "trigram": args.trigram, "slm": args.slm})
    ctx.write_text("report", args.output, "\n".join(r.to_text() for r in reports) + "\n" + summary.summary())
    if args.nbest_output:
        lines = [
            f"{r.utterance} {r.nbest_best.score!r} {' '.join(r.nbest_best.words)}".rstrip() + "\n"
            for r in reports
        ]
        ctx.write_text("nbest_hyps", args.nbest_output, "".join(lines))
    if args.table:
        ctx.write_text("table", args.table, summary.to_frame().to_csv(index=False))
    if args.check_admissibility:
        lm = build_rescoring_lm(**_lm_spec(args, beams))
        totals = None
        for path in files:
            try:
                report = check_admissibility(read_lattice_file(path), lm, config)
            except OutOfVocabularyError as exc:
                logger.warning("Skipping %s in the admissibility check: %s", path.name, exc)
                continue
            totals = report if totals is None else totals.merge(report)
        if totals is not None:
            ctx.manifest.config["admissibility.violations"] = totals.violations
            ctx.manifest.config["admissibility.max_violation"] = totals.max_violation
    print(summary.summary(), end="")


# ---------------------------------------------------------------------------
# Scoring commands
# ---------------------------------------------------------------------------

def _named_models(specs: Sequence[str]) -> List[Tuple[str, SLModel]]:
    """``name=path`` pairs; a bare path is named after its file stem."""
    models = []
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        models.append((name, SLModel.load(path)))
    return models


def cmd_ppl(args: argparse.Namespace, ctx: RunContext) -> None:
    beams = resolve_beam_config(args)
    ctx.manifest.config.update({f"beam.{k}": v for k, v in vars(beams).items()})
    ctx.manifest.config["lambdas"] = list(args.lambdas)
    trigram = TrigramLM.load(args.trigram)
    corpus = read_corpus(args.corpus)
    ctx.manifest.add_inputs({"corpus": args.corpus, "trigram": args.trigram})
    if args.slm:
        table = report_ppl(_named_models(args.slm), trigram, corpus, args.lambdas, beams)
        if args.compensation:
            name, model = _named_models(args.slm[-1:])[0]
            ctx.manifest.config[f"compensation.{name}"] = estimate_compensation(trigram, model, corpus, beams)
    else:
        table = pd.DataFrame([{"model": "trigram", "1.0": trigram_ppl(trigram, corpus)}]).set_index("model")
    if args.output:
        ctx.write_text("table", args.output, table.to_csv(float_format="%.6f"))
    print(table.to_string(float_format=lambda v: f"{v:.3f}"))


def read_decode_output(path: Path | str) -> Dict[str, List[str]]:
    """``<id> <score> <words...>`` per line."""
    out: Dict[str, List[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if parts:
            float(parts[1])
            out[parts[0]] = parts[2:]
    return out


def _aligned_hyps(ref_ids: Sequence[str], hyps: Dict[str, List[str]], path: Path | str) -> List[List[str]]:
    missing = [utt for utt in ref_ids if utt not in hyps]
    if missing:
        raise ValueError(f"{path}: no hypothesis for {len(missing)} utterances (first: {missing[0]})")
    return [hyps[utt] for utt in ref_ids]


def cmd_wer(args: argparse.Namespace, ctx: RunContext) -> None:
    token_map = load_token_map(args)
    ref_ids, refs = read_id_corpus(args.refs)
    hyps = _aligned_hyps(ref_ids, read_decode_output(args.hyps), args.hyps)
    result = wer(refs, hyps, token_map, ref_ids)
    ctx.manifest.add_inputs({"refs": args.refs, "hyps": args.hyps})
    text = result.summary()
    if args.compare:
        other = wer(refs, _aligned_hyps(ref_ids, read_decode_output(args.compare), args.compare), token_map, ref_ids)
        p_value = sign_test(result.errors_per_utterance, other.errors_per_utterance)
        text += f"compare_wer={other.wer:.2f}\nsign_test_p={p_value!r}\n"
        ctx.manifest.add_inputs({"compare": args.compare})
    ctx.manifest.config["wer"] = round(result.wer, 4)
    if args.output:
        ctx.write_text("summary", args.output, text)
    if args.alignment:
        ctx.write_text("alignment", args.alignment, result.aligned_report())
    print(text, end="")


# ---------------------------------------------------------------------------
# Toy data and the full pipeline
# ---------------------------------------------------------------------------

def cmd_make_toy_data(args: argparse.Namespace, ctx: RunContext) -> None:
    config = ToyConfig(seed=args.seed, n_lattices=args.n_lattices, n_trees=args.n_trees)
    ctx.manifest.seed = args.seed
    ctx.manifest.config.update(vars(config))
    token_map = load_token_map(args)
    out_dir = ctx.make_dir(args.output_dir)
    data = write_toy_data(out_dir, config, token_map, track=lambda path: ctx.track(None, path))
    ctx.manifest.add_outputs(vars(data))


def _stage(name: str, func: Callable[[argparse.Namespace, RunContext], None], ctx: RunContext, **values: Any) -> None:
    logger.info("Pipeline stage: %s", name)
    stage_ctx = RunContext(RunManifest(name))
    try:
        func(argparse.Namespace(**values), stage_ctx)
    finally:
        ctx.merge(stage_ctx)
    stage_ctx.finalize()
    for key, value in stage_ctx.manifest.outputs.items():
        ctx.manifest.outputs[f"{name}.{key}"] = value


def cmd_pipeline(args: argparse.Namespace, ctx: RunContext) -> None:
    """
    init -> parse-transfer -> retrain -> (EM) -> split -> rescore -> wer, plus the PPL table.

    Every intermediate file lands in ``--work-dir``.
    """
    work = ctx.make_dir(args.work_dir)
    ctx.manifest.seed = args.seed
    search = resolve_search_config(args)
    beams = resolve_beam_config(args)
    ctx.manifest.config.update(search.to_dict())
    ctx.manifest.config.update({f"beam.{k}": v for k, v in vars(beams).items()})
    ctx.manifest.config.update({"lam": args.lam, "em_iterations": args.em_iterations, "n_best": args.n_best})
    common = {
        "token_map": args.token_map,
        "head_rules": args.head_rules,
        "heldout_fraction": args.heldout_fraction,
        "beam_config": args.beam_config,
        **{dest: getattr(args, dest) for dest in BEAM_FLAGS},
    }
    search_flags = {"search_config": args.search_config, **{name: getattr(args, name) for name in SEARCH_FLAGS}}

    data_dir = Path(args.data_dir) if args.data_dir else work / "toy"
    if not args.data_dir:
        _stage("make-toy-data", cmd_make_toy_data, ctx, output_dir=data_dir, seed=args.seed,
               n_lattices=ToyConfig.n_lattices, n_trees=ToyConfig.n_trees, token_map=args.token_map)
    ctx.manifest.add_inputs({"data": data_dir})

    corpus = work / "corpus.norm.txt"
    test = work / "test.norm.txt"
    _stage("normalize", cmd_normalize, ctx, input=data_dir / "corpus.txt", output=corpus, undo=False, **common)
    _stage("normalize-test", cmd_normalize, ctx, input=data_dir / "test.txt", output=test, undo=False, **common)
    _stage("train-ngram", cmd_train_ngram, ctx, corpus=corpus, output=work / "trigram.bin",
           vocab_corpus=None, text_dump=None, **common)
    _stage("init", cmd_train_slm, ctx, treebank=data_dir / "treebank.txt", output=work / "slm.init.bin",
           vocab_corpus=None, **common)
    _stage("parse-transfer", cmd_parse_transfer, ctx, model=work / "slm.init.bin", corpus=corpus,
           output=work / "transfer.trees", union_vocab=True, **common)
    _stage("retrain", cmd_train_slm, ctx, treebank=work / "transfer.trees", output=work / "slm.retrain.bin",
           vocab_corpus=[corpus], **common)
    final_model = work / "slm.retrain.bin"
    if args.em_iterations > 0:
        _stage("reestimate", cmd_reestimate, ctx, model=final_model, corpus=corpus, output=work / "slm.em.bin",
               n_best=args.n_best, iterations=args.em_iterations, **common)
        final_model = work / "slm.em.bin"
    ppl_models = [f"initial={work / 'slm.retrain.bin'}"]
    if final_model != work / "slm.retrain.bin":
        ppl_models.append(f"reestimated={final_model}")
    _stage("split-lattice", cmd_split_lattice, ctx, input=data_dir / "lattices", output=work / "lattices.split",
           **common)
    _stage("rescore", cmd_rescore, ctx, lattices=work / "lattices.split", output=work / "hyps.astar.txt",
           stats=work / "hyps.astar.stats", lm="interpolated", trigram=work / "trigram.bin", slm=final_model,
           lam=args.lam, jobs=args.jobs, **common, **search_flags)
    _stage("viterbi", cmd_viterbi, ctx, lattices=work / "lattices.split", output=work / "hyps.viterbi.txt",
           **common, **search_flags)
    _stage("wer", cmd_wer, ctx, refs=data_dir / "refs.txt", hyps=work / "hyps.astar.txt",
           compare=work / "hyps.viterbi.txt", output=work / "wer.txt", alignment=work / "wer.align.txt", **common)
    _stage("ppl", cmd_ppl, ctx, corpus=test, trigram=work / "trigram.bin",
           slm=ppl_models,
           lambdas=list(args.lambdas), output=work / "ppl.csv", compensation=False, **common)


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunContext], None]] = {
    "normalize": cmd_normalize,
    "train-ngram": cmd_train_ngram,
    "train-slm": cmd_train_slm,
    "parse-transfer": cmd_parse_transfer,
    "reestimate": cmd_reestimate,
    "split-lattice": cmd_split_lattice,
    "rescore": cmd_rescore,
    "nbest": cmd_nbest,
    "viterbi": cmd_viterbi,
    "diagnose": cmd_diagnose,
    "ppl": cmd_ppl,
    "wer": cmd_wer,
    "make-toy-data": cmd_make_toy_data,
    "pipeline": cmd_pipeline,
}


def run_command(args: argparse.Namespace) -> int:
    """
    Run ``args.command`` and write its manifest.

    Returns:
        0 on success, 1 after printing ``error: <Type>: <message>`` to stderr.
    """
    manifest = RunManifest(args.command, deterministic=not getattr(args, "record_timing", False)).start()
    ctx = RunContext(manifest)
    try:
        COMMANDS[args.command](args, ctx)
    except Exception as exc:
        removed = ctx.rollback()
        logger.debug("Command %s failed; removed %d partial outputs", args.command, removed, exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    ctx.finalize()
    manifest.finish()
    target = Path(args.manifest) if getattr(args, "manifest", None) else manifest_path(
        [getattr(args, name, None) for name in ("output", "output_dir", "work_dir")], args.command
    )
    manifest.write(target)
    return 0

