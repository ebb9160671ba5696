import json
import os

import pytest

from karyogate import cli


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Small end-to-end corpus driven entirely through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run([
        "generate", "--out-dir", str(data), "--seed", "13",
        "--classes", "6", "--n-per-class", "12",
        "--split-fractions", "0.6,0.4,0.0",
    ]) == 0
    assert run([
        "extract", "--manifest", str(data / "manifest.tsv"),
        "--images-dir", str(data / "images"),
        "--out", str(root / "features.tsv"),
    ]) == 0
    return root


class TestEndToEnd:
    def test_generate_outputs_exist(self, workspace):
        assert (workspace / "data" / "manifest.tsv").exists()
        images = os.listdir(workspace / "data" / "images")
        assert len(images) == 72

    def test_train_calibrate_evaluate(self, workspace):
        data = workspace / "data"
        assert run([
            "train", "--manifest", str(data / "manifest.tsv"),
            "--features-file", str(workspace / "features.tsv"),
            "--out", str(workspace / "knn.tsv"),
            "--classifier", "knn", "--k", "5",
        ]) == 0
        assert run([
            "calibrate", "--manifest", str(data / "manifest.tsv"),
            "--features-file", str(workspace / "features.tsv"),
            "--model", str(workspace / "knn.tsv"),
            "--out", str(workspace / "thresholds.tsv"),
            "--metric", "III", "--recall-cutoff", "0.5",
        ]) == 0
        assert run([
            "evaluate", "--manifest", str(data / "manifest.tsv"),
            "--features-file", str(workspace / "features.tsv"),
            "--model", str(workspace / "knn.tsv"),
            "--thresholds", str(workspace / "thresholds.tsv"),
            "--out", str(workspace / "report.tsv"),
        ]) == 0
        text = (workspace / "report.tsv").read_text()
        assert "rejection_rate" in text
        payload = json.loads((workspace / "report.tsv.json").read_text())
        assert payload["metric"] == "III"

    def test_reduce_round(self, workspace):
        data = workspace / "data"
        assert run([
            "reduce", "--manifest", str(data / "manifest.tsv"),
            "--features-file", str(workspace / "features.tsv"),
            "--out", str(workspace / "reduced.tsv"),
            "--model-out", str(workspace / "dr.tsv"),
            "--dr-mid", "20", "--dr-out", "5",
        ]) == 0
        header = (workspace / "reduced.tsv").read_text().splitlines()[0]
        assert len(header.split("\t")) == 5

    def test_compare_metrics(self, workspace):
        data = workspace / "data"
        assert run([
            "compare-metrics", "--manifest", str(data / "manifest.tsv"),
            "--features-file", str(workspace / "features.tsv"),
            "--model", str(workspace / "knn.tsv"),
            "--out", str(workspace / "comparison.tsv"),
        ]) == 0
        lines = (workspace / "comparison.tsv").read_text().splitlines()
        assert len(lines) == 6  # header + one row per metric

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        data = tmp_path / "data"
        for _ in range(2):
            assert run([
                "generate", "--out-dir", str(data), "--seed", "13",
                "--classes", "3", "--n-per-class", "5",
                "--split-fractions", "0.6,0.4,0.0",
            ]) == 0
            if not (tmp_path / "first.tsv").exists():
                os.rename(data / "manifest.tsv", tmp_path / "first.tsv")
        first = (tmp_path / "first.tsv").read_bytes()
        second = (data / "manifest.tsv").read_bytes()
        assert first == second

    def test_descriptor_extraction(self, workspace, tmp_path):
        data = workspace / "data"
        out = tmp_path / "desc.tsv"
        assert run([
            "extract", "--manifest", str(data / "manifest.tsv"),
            "--images-dir", str(data / "images"),
            "--out", str(out), "--features", "descriptor",
            "--keypoints", "5", "--orientations", "32",
        ]) == 0
        header = out.read_text().split("\n", 1)[0]
        assert len(header.split("\t")) == 5 * 32


class TestExitCodes:
    def test_missing_manifest_exits_2(self, tmp_path):
        code = run([
            "extract", "--manifest", str(tmp_path / "nope.tsv"),
            "--images-dir", str(tmp_path), "--out", str(tmp_path / "x.tsv"),
        ])
        assert code == 2

    def test_corrupt_manifest_exits_3(self, tmp_path):
        bad = tmp_path / "manifest.tsv"
        bad.write_text("garbage header\n")
        code = run([
            "extract", "--manifest", str(bad),
            "--images-dir", str(tmp_path), "--out", str(tmp_path / "x.tsv"),
        ])
        assert code == 3

    def test_unknown_config_key_exits_4(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"not_a_real_flag": 1}')
        code = run([
            "--config", str(cfg), "generate",
            "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 4

    def test_malformed_config_exits_3(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{broken")
        code = run([
            "--config", str(cfg), "generate",
            "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 3

    def test_config_defaults_are_applied(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"classes": 3, "n_per_class": 4, '
                       '"split_fractions": "0.6,0.4,0.0"}')
        out = tmp_path / "out"
        assert run(["--config", str(cfg), "generate",
                    "--out-dir", str(out), "--seed", "1"]) == 0
        manifest = (out / "manifest.tsv").read_text().strip().splitlines()
        assert len(manifest) == 1 + 12

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"classes": 3, "split_fractions": "0.6,0.4,0.0"}')
        out = tmp_path / "out"
        assert run(["--config", str(cfg), "generate",
                    "--out-dir", str(out), "--seed", "1",
                    "--n-per-class", "2", "--classes", "4"]) == 0
        manifest = (out / "manifest.tsv").read_text().strip().splitlines()
        assert len(manifest) == 1 + 8
