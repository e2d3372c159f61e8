"""Config parsing, stage orchestration, and artifact layout tests."""

from __future__ import annotations

import json

import pytest

from tweetslots import metrics, pipeline, serialize
from tweetslots.corpus import CorpusError
from tweetslots.features import StrategyKind
from tweetslots.pipeline import (
    ConfigError,
    PipelineError,
    config_fingerprint,
    load_config,
    parse_config_text,
    run_pipeline,
)

from conftest import tree_bytes


class TestParseConfigText:
    def test_basic(self):
        raw = parse_config_text("a = 1\nb=two words\n")
        assert raw == {"a": "1", "b": "two words"}

    def test_comments_and_blanks_skipped(self):
        raw = parse_config_text("# header\n\n  # indented comment\nseed = 4\n")
        assert raw == {"seed": "4"}

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("a = 1\na = 2\n")

    def test_missing_separator(self):
        with pytest.raises(ConfigError, match="expected"):
            parse_config_text("just a line\n")

    def test_empty_value(self):
        with pytest.raises(ConfigError):
            parse_config_text("a =\n")

    def test_empty_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("= 1\n")

    def test_reports_line_number(self):
        with pytest.raises(ConfigError, match="cfg:3"):
            parse_config_text("a = 1\n# two\nbad\n", path="cfg")


class TestLoadConfig:
    def test_defaults(self, ws):
        cfg = load_config(ws / "config.ini")
        assert cfg.corpus_path == ws / "corpus.jsonl"
        assert cfg.subtasks_path == ws / "subtasks.txt"
        assert cfg.gazetteer_dir is None
        assert cfg.clean_enabled is True
        assert cfg.train_fraction == 0.8
        assert cfg.feature_strategy is StrategyKind.LAST
        assert cfg.train.pos_weight == 10.0
        assert cfg.train.neg_weight == 1.0
        assert cfg.train.clip_norm == 5.0
        assert cfg.ensemble_k == 3
        assert cfg.ensemble_strategies == (StrategyKind.LAST, StrategyKind.SUM4)
        assert cfg.ensemble_seeds == (0, 1, 2)
        assert len(cfg.pool) == 6

    def test_seed_flows_to_encoder_and_train(self, ws):
        cfg = load_config(ws / "config.ini")
        assert cfg.seed == cfg.encoder.seed == cfg.train.seed == 1

    def test_seed_override(self, ws):
        cfg = load_config(ws / "config.ini", seed_override=9)
        assert cfg.seed == cfg.encoder.seed == cfg.train.seed == 9

    def test_no_clean_override(self, ws):
        assert load_config(ws / "config.ini", no_clean=True).clean_enabled is False

    def test_relative_paths_resolve_against_config_dir(self, ws, tmp_path, monkeypatch):
        # cwd elsewhere must not affect resolution
        monkeypatch.chdir(tmp_path)
        cfg = load_config(ws / "config.ini")
        assert cfg.corpus_path.is_absolute()
        assert cfg.corpus_path.read_text().startswith("{")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.ini")

    def test_unknown_key(self, ws, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text(f"data.corpus = {ws / 'corpus.jsonl'}\ntrain.lr = 0.1\n")
        with pytest.raises(ConfigError, match="unknown config key.*train.lr"):
            load_config(p)

    def test_missing_corpus_key(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("seed = 1\n")
        with pytest.raises(ConfigError, match="data.corpus"):
            load_config(p)

    def test_nonexistent_data_path(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("data.corpus = missing.jsonl\n")
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(p)

    @pytest.mark.parametrize(
        "line, pat",
        [
            ("clean.enabled = maybe", "true/false"),
            ("train.epochs = many", "train.epochs"),
            ("split.train_fraction = 1.5", "train_fraction"),
            ("split.train_fraction = 0", "train_fraction"),
            ("ensemble.k = 4", "odd"),
            ("ensemble.k = -1", "odd"),
            ("feature_strategy = mean4", "strategy"),
        ],
    )
    def test_invalid_values(self, ws, tmp_path, line, pat):
        p = tmp_path / "c.ini"
        p.write_text(f"data.corpus = {ws / 'corpus.jsonl'}\n{line}\n")
        with pytest.raises(ConfigError, match=pat):
            load_config(p)

    def test_pool_must_cover_k(self, ws, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text(
            f"data.corpus = {ws / 'corpus.jsonl'}\n"
            "ensemble.strategies = last\nensemble.seeds = 0\nensemble.k = 3\n"
        )
        with pytest.raises(ConfigError, match="pool"):
            load_config(p)

    def test_fingerprint_stability(self, ws):
        a = config_fingerprint(load_config(ws / "config.ini"))
        b = config_fingerprint(load_config(ws / "config.ini"))
        c = config_fingerprint(load_config(ws / "config.ini", seed_override=9))
        assert a == b
        assert a != c


@pytest.fixture(scope="module")
def run_dir(ws, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = load_config(ws / "config.ini")
    run_pipeline(cfg, out)
    return out


EXPECTED_FILES = {
    "split_manifest.json",
    "train_instances.jsonl",
    "val_instances.jsonl",
    "ensemble_manifest.jsonl",
    "predictions.jsonl",
    "predictions_filtered.jsonl",
    "report_unfiltered.json",
    "report_filtered.json",
    "table_unfiltered.txt",
    "table_filtered.txt",
    "ablation.txt",
    "ablation.json",
    "run_manifest.json",
}


class TestRunPipeline:
    def test_artifact_files_exist(self, run_dir):
        present = {p.name for p in run_dir.iterdir() if p.is_file()}
        assert EXPECTED_FILES <= present
        for kind in ("last", "sum4"):
            for seed in (0, 1, 2):
                assert (run_dir / "models" / f"{kind}-s{seed}.bin").is_file()
                assert (run_dir / "logs" / f"{kind}-s{seed}.csv").is_file()

    def test_lock_released(self, run_dir):
        assert not (run_dir / ".lock").exists()

    def test_manifest_hashes_match_files(self, run_dir):
        obj = json.loads((run_dir / "run_manifest.json").read_text())
        assert obj["status"] == "ok"
        assert obj["seed"] == 1
        assert "partial" not in obj
        assert len(obj["artifacts"]) == 24
        for name, entry in obj["artifacts"].items():
            path = run_dir / entry["path"]
            assert path.is_file(), name
            assert serialize.file_sha256(path) == entry["sha256"], name

    def test_split_manifest_partitions_corpus(self, ws, run_dir):
        obj = json.loads((run_dir / "split_manifest.json").read_text())
        ids = obj["train_ids"] + obj["val_ids"]
        assert len(ids) == 16
        assert len(set(ids)) == 16
        assert len(obj["train_ids"]) == 13  # round(0.8 * 16)

    def test_reports_joinable(self, run_dir):
        rep = metrics.load_report(run_dir / "report_unfiltered.json")
        rep_f = metrics.load_report(run_dir / "report_filtered.json")
        assert rep.corpus_id == rep_f.corpus_id
        assert rep.corpus_id.endswith("/val")
        assert len(rep.counts) == 3
        assert 0.0 <= rep.micro_f1 <= 1.0

    def test_ablation_references_both_reports(self, run_dir):
        obj = json.loads((run_dir / "ablation.json").read_text())
        assert obj["label_a"] == "unfiltered"
        assert obj["label_b"] == "filtered"
        text = (run_dir / "ablation.txt").read_text()
        assert "unfiltered" in text and "filtered" in text

    def test_predictions_cover_val_instances(self, run_dir):
        n_val = len(serialize.load_instances(run_dir / "val_instances.jsonl"))
        records = serialize.load_predictions(run_dir / "predictions.jsonl")
        assert len(records) == n_val > 0


class TestStageComposition:
    def test_staged_sequence_matches_run(self, ws, run_dir, tmp_path):
        cfg = load_config(ws / "config.ini")
        staged = tmp_path / "staged"
        staged.mkdir()
        pipeline.stage_preprocess(cfg, staged)
        pipeline.stage_train_pool(cfg, staged)
        pipeline.stage_ensemble(cfg, staged)
        pipeline.stage_postprocess(cfg, staged)
        pipeline.stage_evaluate(cfg, staged)
        pipeline.stage_evaluate_filtered(cfg, staged)
        pipeline.stage_ablate(cfg, staged)
        a = tree_bytes(run_dir, skip=frozenset({".lock", "run_manifest.json"}))
        b = tree_bytes(staged)
        assert set(a) == set(b)
        for rel in a:
            assert a[rel] == b[rel], rel

    def test_repeat_run_is_byte_identical(self, ws, run_dir, tmp_path):
        cfg = load_config(ws / "config.ini")
        again = tmp_path / "again"
        run_pipeline(cfg, again)
        a = tree_bytes(run_dir)
        b = tree_bytes(again)
        assert set(a) == set(b)
        for rel in a:
            assert a[rel] == b[rel], rel


class TestFailureHandling:
    def test_locked_output_rejected(self, ws, tmp_path):
        cfg = load_config(ws / "config.ini")
        out = tmp_path / "busy"
        out.mkdir()
        (out / ".lock").write_text("12345\n")
        with pytest.raises(PipelineError, match="locked"):
            run_pipeline(cfg, out)
        # a lock we did not take stays in place
        assert (out / ".lock").read_text() == "12345\n"

    def test_failed_stage_writes_partial_manifest(self, ws, tmp_path):
        corpus = tmp_path / "bad.jsonl"
        corpus.write_text("{not json\n")
        conf = tmp_path / "c.ini"
        conf.write_text(f"data.corpus = {corpus}\n")
        cfg = load_config(conf)
        out = tmp_path / "out"
        with pytest.raises((PipelineError, CorpusError)):
            run_pipeline(cfg, out)
        obj = json.loads((out / "run_manifest.json").read_text())
        assert obj["status"] == "failed"
        assert obj["failed_stage"] == "preprocess"
        assert obj["partial"] is True
        assert not (out / ".lock").exists()

    def test_best_val_score(self):
        from tweetslots.multitask import TrainLogEntry

        logs = [TrainLogEntry(1, 0.9, 0.2), TrainLogEntry(2, 0.5, 0.7), TrainLogEntry(3, 0.4, 0.6)]
        assert pipeline.best_val_score(logs) == 0.7
