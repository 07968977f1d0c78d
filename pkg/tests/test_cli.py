import json
import shutil

import pytest

from moodradio import cli
from moodradio.artifacts import PRODUCERS
from moodradio.forests import load_forests

RERUN_STEPS = [
    ["train-embeddings", "--dimension", "16", "--epochs", "4", "--seed", "11"],
    ["train-moods", "--trees", "20", "--max-depth", "8", "--seed", "11"],
    ["score-catalog"],
    ["build-index", "--cells", "16", "--seed", "11"],
    ["build-fallback"],
]

REBUILT_FILES = [
    "embeddings.snap",
    "forests.snap",
    "scores.csv",
    "index.snap",
    "fallback.json",
]


@pytest.fixture
def snap_copy(pipeline_dir, tmp_path):
    dst = tmp_path / "snap"
    shutil.copytree(pipeline_dir, dst)
    return dst


class TestDependencyErrors:
    def test_missing_forest_names_its_producer(self, pipeline_dir, tmp_path, capsys):
        partial = tmp_path / "partial"
        partial.mkdir()
        for name in ("manifest.json", "catalog.jsonl"):
            shutil.copy(pipeline_dir / name, partial / name)
        code = cli.main(["score-catalog", "--snapshot-dir", str(partial)])
        assert code == 1
        err = capsys.readouterr().err
        assert "forests.snap" in err
        assert "run `moodradio train-moods` first" in err

    def test_training_before_ingest_fails(self, tmp_path, capsys):
        code = cli.main(["train-embeddings", "--snapshot-dir", str(tmp_path / "empty")])
        assert code == 1
        assert "ingest" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path, capsys):
        code = cli.main([
            "ingest", "--snapshot-dir", str(tmp_path / "s"),
            "--catalog", str(tmp_path / "nope.jsonl"),
            "--interactions", str(tmp_path / "nope.csv"),
            "--labels", str(tmp_path / "nope2.csv"),
        ])
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_no_snapshot_dir_anywhere(self, monkeypatch, capsys):
        monkeypatch.delenv(cli.SNAPSHOT_DIR_ENV, raising=False)
        code = cli.main(["eval"])
        assert code == 1
        assert "no snapshot directory" in capsys.readouterr().err

    def test_world_too_small_for_labels(self, tmp_path, capsys):
        code = cli.main([
            "generate-world", "--out-dir", str(tmp_path / "w"),
            "--users", "5", "--songs", "100", "--artists", "5",
        ])
        assert code == 1
        assert "cannot carry" in capsys.readouterr().err


class TestPipelineArtifacts:
    def test_full_build_leaves_every_artifact(self, pipeline_dir):
        for name in PRODUCERS:
            assert (pipeline_dir / name).exists(), name

    def test_rebuild_is_byte_identical(self, snap_copy):
        before = {name: (snap_copy / name).read_bytes() for name in REBUILT_FILES}
        for step in RERUN_STEPS:
            code = cli.main([step[0], "--snapshot-dir", str(snap_copy), *step[1:]])
            assert code == 0, step
        for name in REBUILT_FILES:
            assert (snap_copy / name).read_bytes() == before[name], name


class TestSimulateAndReport:
    def test_simulate_deterministic(self, pipeline_dir, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            code = cli.main([
                "simulate", "--snapshot-dir", str(pipeline_dir),
                "--days", "2", "--seed", "7", "--out", str(out),
            ])
            assert code == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "timestamp,user_id,song_id,mood,session_id"

    def test_report_reads_the_log(self, pipeline_dir, tmp_path, capsys):
        log = tmp_path / "log.csv"
        assert cli.main([
            "simulate", "--snapshot-dir", str(pipeline_dir),
            "--days", "2", "--seed", "7", "--out", str(log),
        ]) == 0
        capsys.readouterr()
        dist = tmp_path / "dist.csv"
        code = cli.main(["report", "--log", str(log), "--out", str(dist)])
        assert code == 0
        out = capsys.readouterr().out
        assert "day   0" in out
        assert dist.read_text().splitlines()[0] == "day,mood,share"

    def test_report_without_log_flag(self, capsys):
        assert cli.main(["report"]) == 1
        assert "--log" in capsys.readouterr().err

    def test_report_missing_log_file(self, tmp_path, capsys):
        assert cli.main(["report", "--log", str(tmp_path / "gone.csv")]) == 1
        assert "not found" in capsys.readouterr().err


class TestEval:
    def test_prints_per_mood_metrics(self, pipeline_dir, capsys):
        code = cli.main(["eval", "--snapshot-dir", str(pipeline_dir)])
        assert code == 0
        out = capsys.readouterr().out
        assert "auc=" in out
        assert "worst holdout auc:" in out

    def test_snapshot_dir_from_environment(self, pipeline_dir, monkeypatch, capsys):
        monkeypatch.setenv(cli.SNAPSHOT_DIR_ENV, str(pipeline_dir))
        assert cli.main(["eval"]) == 0
        assert "worst holdout auc:" in capsys.readouterr().out


class TestConfigFile:
    def write_config(self, tmp_path, payload):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload))
        return path

    def test_config_file_supplies_values(self, snap_copy, tmp_path):
        cfg = self.write_config(tmp_path, {"train-moods": {"trees": 7, "max-depth": 4}})
        code = cli.main([
            "train-moods", "--snapshot-dir", str(snap_copy), "--config", str(cfg),
        ])
        assert code == 0
        forests, _ = load_forests(snap_copy / "forests.snap")
        any_forest = next(iter(forests.values()))
        assert any_forest.config.n_trees == 7
        assert any_forest.config.max_depth == 4

    def test_flag_beats_config_file(self, snap_copy, tmp_path):
        cfg = self.write_config(tmp_path, {"train-moods": {"trees": 7}})
        code = cli.main([
            "train-moods", "--snapshot-dir", str(snap_copy),
            "--config", str(cfg), "--trees", "9",
        ])
        assert code == 0
        forests, _ = load_forests(snap_copy / "forests.snap")
        assert next(iter(forests.values())).config.n_trees == 9

    def test_bad_config_file_rejected(self, snap_copy, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        code = cli.main([
            "train-moods", "--snapshot-dir", str(snap_copy), "--config", str(path),
        ])
        assert code == 1
        assert "JSON object" in capsys.readouterr().err

    def test_missing_config_file_rejected(self, snap_copy, tmp_path, capsys):
        code = cli.main([
            "train-moods", "--snapshot-dir", str(snap_copy),
            "--config", str(tmp_path / "gone.json"),
        ])
        assert code == 1
        assert "config file not found" in capsys.readouterr().err
