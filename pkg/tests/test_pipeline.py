"""Tests for configuration, manifests, toy data and the command line."""
import sys
from pathlib import Path

import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from slm_pipeline import main
from src.decoder.config import SearchConfig
from src.models.deleted_interpolation import DIConfig
from src.models.slm_search import BeamConfig
from src.models.trigram import TrigramLM, trigram_ppl
from src.pipeline.commands import RunContext
from src.pipeline.manifest import RunManifest, manifest_path, read_manifest
from src.pipeline.toy_data import ToyConfig, generate, write_toy_data
from src.text.token_map import normalize
from src.text.treebank import write_treebank
from src.utils.config import build_config, normalize_key, read_key_values
from src.utils.storage import atomic_output, file_digest, read_corpus

DATA = Path(__file__).parent.parent / "data_files"

CHAIN_LATTICE = (
    "I=0 t=0.0\n"
    "I=1 t=0.5\n"
    "I=2 t=1.0\n"
    "J=0 S=0 E=1 W=hello a=-1.0 n=-1.0\n"
    "J=1 S=1 E=2 W=world a=-1.0 n=-1.0\n"
)


# ── configuration ───────────────────────────────────────────────────────────

class TestConfig:
    """Test suite for key=value files and precedence."""

    def test_key_normalization(self):
        """Dashes and case fold to field names."""
        assert normalize_key(" stack-logP-threshold ") == "stack_logp_threshold"

    def test_shipped_files_match_defaults(self):
        """The sample config files restate the built-in defaults."""
        assert build_config(SearchConfig, read_key_values(DATA / "search.conf")) == SearchConfig()
        assert build_config(BeamConfig, read_key_values(DATA / "beams.conf")) == BeamConfig()

    def test_flags_override_file(self):
        """Flags beat file values, which beat defaults."""
        config = build_config(SearchConfig, {"lm_weight": "5", "log_p_ip": "3"}, {"lm_weight": 7.0, "log_p_ip": None})
        assert config.lm_weight == 7.0
        assert config.log_p_ip == 3.0
        assert config.log_p_comp == SearchConfig().log_p_comp

    def test_none_is_unbounded(self):
        """'none' disables a limit."""
        config = build_config(SearchConfig, {"stack-depth-threshold": "none"}, {"stack_logp_threshold": "none"})
        assert config.is_unbounded

    def test_string_flags_coerced(self):
        """Limit flags arrive as strings."""
        config = build_config(BeamConfig, {}, {"stack_depth_threshold": "7", "phase_beam": "2.5"})
        assert config.stack_depth_threshold == 7
        assert config.phase_beam == 2.5

    def test_unknown_keys_ignored(self):
        """One file may hold keys for several configs."""
        assert build_config(DIConfig, {"lm_weight": "3"}) == DIConfig()

    def test_malformed_line(self, tmp_path):
        """Lines without '=' name their position."""
        path = tmp_path / "bad.conf"
        path.write_text("# fine\nlm-weight=3\noops\n")
        with pytest.raises(ValueError, match=":3:"):
            read_key_values(path)

    def test_invalid_value_rejected(self):
        """Values still pass the dataclass checks."""
        with pytest.raises(ValueError):
            build_config(SearchConfig, {"lm_weight": "0"})


# ── manifests and storage ───────────────────────────────────────────────────

class TestManifest:
    """Test suite for run manifests."""

    def test_deterministic_text(self):
        """Without timing the text depends only on the recorded values."""
        manifest = RunManifest("train-ngram", config={"b": None, "a": 1.5, "c": [0.0, 1.0]}, seed=3).start().finish()
        assert manifest.to_text() == (
            "subcommand=train-ngram\nseed=3\nconfig.a=1.5\nconfig.b=none\nconfig.c=0.0,1.0\n"
        )

    def test_timing_recorded_on_request(self):
        """Non-deterministic manifests carry wall-clock fields."""
        manifest = RunManifest("x", deterministic=False).start().finish()
        assert "started_at=" in manifest.to_text()
        assert "elapsed_seconds=" in manifest.to_text()

    def test_digests_name_files(self, tmp_path):
        """Inputs are recorded by file name and content hash."""
        path = tmp_path / "corpus.txt"
        path.write_text("a b\n")
        manifest = RunManifest("x")
        manifest.add_inputs({"corpus": path, "missing": tmp_path / "nope", "unset": None})
        assert manifest.inputs == {"corpus": f"corpus.txt sha256:{file_digest(path)}"}

    def test_write_and_read(self, tmp_path):
        """Written manifests read back as a flat mapping."""
        target = tmp_path / "out.manifest"
        RunManifest("wer", config={"wer": 12.5}).write(target)
        assert read_manifest(target) == {"subcommand": "wer", "config.wer": "12.5"}

    def test_manifest_path(self):
        """Next to the first output, else named after the command."""
        assert manifest_path([None, Path("runs/a")], "pipeline") == Path("runs/a.manifest")
        assert manifest_path([None], "ppl") == Path("ppl.manifest")


class TestStorage:
    """Test suite for atomic writes and digests."""

    def test_atomic_output_rollback(self, tmp_path):
        """A failed write leaves neither the target nor the temporary file."""
        target = tmp_path / "out.txt"
        with pytest.raises(RuntimeError):
            with atomic_output(target) as handle:
                handle.write("partial")
                raise RuntimeError("boom")
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_atomic_output_keeps_old_file(self, tmp_path):
        """The previous content survives a failed rewrite."""
        target = tmp_path / "out.txt"
        target.write_text("old")
        with pytest.raises(RuntimeError):
            with atomic_output(target) as handle:
                handle.write("new")
                raise RuntimeError("boom")
        assert target.read_text() == "old"

    def test_directory_digest(self, tmp_path):
        """Directory digests cover file names and contents."""
        (tmp_path / "d").mkdir()
        (tmp_path / "d" / "a.lat").write_text("x")
        before = file_digest(tmp_path / "d")
        (tmp_path / "d" / "a.lat").rename(tmp_path / "d" / "b.lat")
        assert file_digest(tmp_path / "d") != before

    def test_run_context_rollback(self, tmp_path):
        """Tracked outputs are removed on failure."""
        ctx = RunContext(RunManifest("x"))
        ctx.write_text("a", tmp_path / "a.txt", "a\n")
        ctx.write_text("b", tmp_path / "b.txt", "b\n")
        assert ctx.rollback() == 2
        assert list(tmp_path.iterdir()) == []

    def test_rollback_removes_only_created_dirs(self, tmp_path):
        """Directories made by the run go; directories that already existed stay."""
        existing = tmp_path / "existing"
        existing.mkdir()
        (existing / "keep.txt").write_text("keep\n")
        ctx = RunContext(RunManifest("x"))
        ctx.make_dir(existing)
        ctx.write_text("a", existing / "a.txt", "a\n")
        ctx.write_text("b", tmp_path / "new" / "deeper" / "b.txt", "b\n")
        assert ctx.rollback() == 2
        assert sorted(p.name for p in existing.iterdir()) == ["keep.txt"]
        assert not (tmp_path / "new").exists()


# ── toy data ────────────────────────────────────────────────────────────────

class TestToyData:
    """Test suite for the synthetic data set."""

    def setup_method(self):
        self.config = ToyConfig(seed=5, n_trees=20, n_extra_sentences=10, n_test_sentences=4, n_lattices=3)

    def test_same_seed_same_data(self, token_map):
        """Generation is a pure function of the config."""
        first = generate(self.config, token_map)
        second = generate(self.config, token_map)
        assert write_treebank(first[0]) == write_treebank(second[0])
        assert first[1:] == second[1:]

    def test_references_are_lattice_paths(self, token_map):
        """Every reference is one of its lattice's paths."""
        _, corpus, test, refs, lattices = generate(self.config, token_map)
        known = {w for s in corpus for w in s}
        for (utt, words), lattice in zip(refs, lattices):
            assert lattice.utterance == utt
            assert known.issuperset(words)
            assert words in [lattice.words(p) for p in lattice.paths()]
        assert all(known.issuperset(s) for s in test)

    def test_written_layout(self, tmp_path, token_map):
        """Files land under the output directory."""
        data = write_toy_data(tmp_path / "toy", self.config, token_map)
        assert len(read_corpus(data.corpus)) == 30
        assert len(list(data.lattices.glob("*.lat"))) == 3
        assert data.refs.read_text().startswith("utt000 ")


# ── command line ────────────────────────────────────────────────────────────

class TestCommandLine:
    """Test suite for slm_pipeline.py subcommands."""

    def test_search_flags_documented(self, capsys):
        """rescore --help lists every search flag with its default."""
        with pytest.raises(SystemExit):
            main(["rescore", "--help"])
        text = "".join(capsys.readouterr().out.split())
        for flag, default in [
            ("--lm-weight", "12.0"),
            ("--log-p-ip", "10.0"),
            ("--log-p-comp", "0.5"),
            ("--log-p-final", "2.0"),
            ("--stack-depth-threshold", "30"),
            ("--stack-logp-threshold", "100.0"),
            ("--final-term-rule", "as-printed"),
        ]:
            assert flag in text
            assert f"(default:{default})" in text

    def test_failure_reports_and_rolls_back(self, tmp_path, capsys):
        """A missing input exits 1 with a typed message and no output."""
        out = tmp_path / "trigram.bin"
        code = main(["train-ngram", "--corpus", str(tmp_path / "missing.txt"), "--output", str(out)])
        assert code == 1
        assert "error: FileNotFoundError" in capsys.readouterr().err
        assert not out.exists()
        assert not Path(f"{out}.manifest").exists()

    def test_failure_keeps_existing_output_dir(self, tmp_path, capsys):
        """A failing make-toy-data leaves a pre-existing directory and its files alone."""
        out_dir = tmp_path / "mine"
        out_dir.mkdir()
        (out_dir / "notes.txt").write_text("notes\n")
        bad_map = tmp_path / "bad_map.txt"
        bad_map.write_text("no tab here\n")
        code = main(["make-toy-data", "--output-dir", str(out_dir), "--token-map", str(bad_map)])
        assert code == 1
        assert "error: TokenMapError" in capsys.readouterr().err
        assert [p.name for p in out_dir.iterdir()] == ["notes.txt"]

    def test_failure_removes_created_output_dir(self, tmp_path, monkeypatch):
        """A run that fails midway removes the files and directories it created."""
        import src.pipeline.toy_data as toy_data

        def broken(lattice, path):
            raise OSError("disk full")

        monkeypatch.setattr(toy_data, "write_lattice_file", broken)
        out_dir = tmp_path / "fresh"
        assert main(["make-toy-data", "--output-dir", str(out_dir), "--n-lattices", "2"]) == 1
        assert not out_dir.exists()

    def test_normalize_round_trip(self, tmp_path, token_map):
        """normalize then --undo restores the corpus."""
        source = tmp_path / "csr.txt"
        source.write_text("i don't like it\nwe'll see\n")
        split = tmp_path / "norm.txt"
        back = tmp_path / "back.txt"
        assert main(["normalize", "--input", str(source), "--output", str(split)]) == 0
        assert main(["normalize", "--undo", "--input", str(split), "--output", str(back)]) == 0
        assert read_corpus(split)[0] == normalize(["i", "don't", "like", "it"], token_map)
        assert back.read_text() == source.read_text()

    def test_rescore_chain_lattice(self, tmp_path):
        """A one-path lattice decodes to its words and writes a manifest."""
        lattice = tmp_path / "utt7.lat"
        lattice.write_text(CHAIN_LATTICE)
        out = tmp_path / "hyps.txt"
        assert main(["rescore", "--lm", "ngram", "--lattices", str(lattice), "--output", str(out)]) == 0
        utt, score, *words = out.read_text().split()
        assert (utt, words) == ("utt7", ["hello", "world"])
        float(score)
        manifest = read_manifest(f"{out}.manifest")
        assert manifest["subcommand"] == "rescore"
        assert manifest["output.hyps"].startswith("hyps.txt sha256:")
        assert manifest["config.lm_weight"] == "12.0"

    def test_rescore_flag_beats_config_file(self, tmp_path):
        """Search flags override --search-config values in the manifest."""
        lattice = tmp_path / "utt7.lat"
        lattice.write_text(CHAIN_LATTICE)
        conf = tmp_path / "search.conf"
        conf.write_text("lm-weight=3\nlog-p-ip=1\n")
        out = tmp_path / "hyps.txt"
        code = main([
            "rescore", "--lm", "ngram", "--lattices", str(lattice), "--output", str(out),
            "--search-config", str(conf), "--lm-weight", "4",
        ])
        assert code == 0
        manifest = read_manifest(f"{out}.manifest")
        assert manifest["config.lm_weight"] == "4.0"
        assert manifest["config.log_p_ip"] == "1.0"

    def test_rescore_skips_out_of_vocabulary_lattice(self, tmp_path):
        """A lattice word outside the trigram vocabulary fails that lattice only."""
        TrigramLM.train([["hello", "world"]] * 4, config=DIConfig(heldout_fraction=0.25)).save(tmp_path / "tri.bin")
        lattices = tmp_path / "lattices"
        lattices.mkdir()
        (lattices / "utt1.lat").write_text(CHAIN_LATTICE)
        (lattices / "utt2.lat").write_text(CHAIN_LATTICE.replace("W=world", "W=zebra"))
        out = tmp_path / "hyps.txt"
        code = main([
            "rescore", "--lm", "trigram", "--trigram", str(tmp_path / "tri.bin"),
            "--lattices", str(lattices), "--output", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].split()[2:] == ["hello", "world"]
        assert read_manifest(f"{out}.manifest")["config.failures"] == "1"

    def test_ppl_trigram_column(self, tmp_path, slm_factory):
        """The lambda = 1 column is the trigram perplexity."""
        corpus = [["a", "b"], ["c", "a", "b"], ["b", "c"], ["a"]]
        corpus_path = tmp_path / "test.txt"
        corpus_path.write_text("".join(" ".join(s) + "\n" for s in corpus))
        trigram = TrigramLM.train(corpus * 3, config=DIConfig(heldout_fraction=0.25))
        trigram.save(tmp_path / "trigram.bin")
        slm_factory(13).save(tmp_path / "slm.bin")
        table = tmp_path / "ppl.csv"
        code = main([
            "ppl", "--corpus", str(corpus_path), "--trigram", str(tmp_path / "trigram.bin"),
            "--slm", f"toy={tmp_path / 'slm.bin'}", "--lambdas", "1.0", "0.0",
            "--beam-stack-depth-threshold", "5", "--output", str(table),
        ])
        assert code == 0
        frame = pd.read_csv(table, index_col=0)
        assert list(frame.index) == ["toy"]
        assert frame.loc["toy", "1.0"] == pytest.approx(trigram_ppl(trigram, corpus), rel=1e-6)

    def test_wer_with_sign_test(self, tmp_path):
        """wer reads decode output and compares two systems."""
        refs = tmp_path / "refs.txt"
        refs.write_text("u1 i don't know\nu2 a b\n")
        hyps = tmp_path / "a.txt"
        hyps.write_text("u2 -3.0 a b\nu1 -5.5 i do n't know\n")
        other = tmp_path / "b.txt"
        other.write_text("u1 -1.0 i know\nu2 -2.0 a c\n")
        out = tmp_path / "wer.txt"
        assert main(["wer", "--refs", str(refs), "--hyps", str(hyps), "--compare", str(other), "--output", str(out)]) == 0
        text = out.read_text()
        assert "wer=0.00" in text
        assert "compare_wer=40.00" in text
        assert "sign_test_p=" in text

    def test_wer_missing_hypothesis(self, tmp_path, capsys):
        """Every reference id needs a hypothesis."""
        refs = tmp_path / "refs.txt"
        refs.write_text("u1 a\nu2 b\n")
        hyps = tmp_path / "hyps.txt"
        hyps.write_text("u1 -1.0 a\n")
        assert main(["wer", "--refs", str(refs), "--hyps", str(hyps)]) == 1
        assert "no hypothesis" in capsys.readouterr().err


@pytest.mark.slow
class TestEndToEnd:
    """Test suite for the full toy pipeline."""

    def test_pipeline_reproducible(self, tmp_path, token_map):
        """Two runs over the same data give byte-identical results."""
        data = tmp_path / "data"
        config = ToyConfig(n_trees=30, n_extra_sentences=20, n_test_sentences=5, n_lattices=3)
        write_toy_data(data, config, token_map)
        for run in ("a", "b"):
            code = main([
                "pipeline", "--work-dir", str(tmp_path / run), "--data-dir", str(data),
                "--em-iterations", "0",
                "--beam-stack-depth-threshold", "5", "--phase-beam", "5",
                "--stack-depth-threshold", "10",
                "--token-map", str(DATA / "token_map.txt"), "--head-rules", str(DATA / "head_rules.txt"),
            ])
            assert code == 0
        for name in ("hyps.astar.txt", "hyps.viterbi.txt", "wer.txt", "ppl.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a.manifest").read_text() == (tmp_path / "b.manifest").read_text()
        assert len((tmp_path / "a" / "hyps.astar.txt").read_text().splitlines()) == 3
        assert "wer=" in (tmp_path / "a" / "wer.txt").read_text()
        assert list(pd.read_csv(tmp_path / "a" / "ppl.csv", index_col=0).index) == ["initial"]
