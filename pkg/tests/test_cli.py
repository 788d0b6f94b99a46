import json
import shutil

import numpy as np
import pytest
from PIL import Image

from synthwords.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "pool"), "--per-class", "12", "--seed", "5"]) == 0
    assert main(["compose", "--pool", str(root / "pool"), "--out", str(root / "ds"),
                 "--n-images", "20", "--seed", "9", "--workers", "1"]) == 0
    assert main(["detect", "--manifest", str(root / "ds"), "--templates", str(root / "pool"),
                 "--out", str(root / "pred"), "--workers", "1"]) == 0
    return root


def _letter_tree(root, blank=False):
    rng = np.random.default_rng(0)
    for name in ("Normal", "Reversal", "Corrected"):
        (root / name).mkdir(parents=True)
        for i in range(2):
            img = np.full((40, 30), 255, np.uint8)
            img[5 + i:30, 8:12 + i] = rng.integers(0, 40)
            Image.fromarray(img).save(root / name / f"a{i}_{i}.png")
    if blank:
        Image.fromarray(np.full((20, 20), 255, np.uint8)).save(root / "Normal" / "blank_0.png")
        (root / "Normal" / "junk_0.png").write_bytes(b"not an image")


class TestPrep:
    def test_counts(self, tmp_path, capsys):
        _letter_tree(tmp_path / "in", blank=True)
        code, out, _ = run(capsys, "prep", tmp_path / "in", tmp_path / "out")
        assert code == 0
        assert "Normal: 2" in out and "Reversal: 2" in out and "skipped: 2" in out
        files = sorted(p.name for p in (tmp_path / "out" / "Normal").iterdir())
        assert len(files) == 2
        assert Image.open(tmp_path / "out" / "Normal" / files[0]).size == (32, 32)

    def test_missing_folder(self, tmp_path, capsys):
        _letter_tree(tmp_path / "in")
        shutil.rmtree(tmp_path / "in" / "Corrected")
        code, _, err = run(capsys, "prep", tmp_path / "in", tmp_path / "out")
        assert code == 2 and "Corrected" in err


class TestConfigErrors:
    def test_unknown_section(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bogus": {}}))
        code, _, err = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "p")
        assert code == 2 and "bogus" in err

    def test_unknown_field(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"synth": {"colour": 1}}))
        code, _, err = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "p")
        assert code == 2 and "colour" in err

    def test_symmetric_alphabet_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"synth": {"alphabet": ["o", "b"]}}))
        code, _, _ = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "p")
        assert code == 2
        assert not (tmp_path / "p").exists()

    def test_canvas_too_small(self, tmp_path, capsys, pipeline):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"compose": {"canvas_size": 200}}))
        code, _, err = run(capsys, "compose", "--config", cfg, "--pool", pipeline / "pool",
                           "--out", tmp_path / "ds", "--n-images", 2)
        assert code == 2 and "canvas" in err

    def test_bad_json(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{nope")
        code, _, _ = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "p")
        assert code == 2

    def test_missing_manifest(self, tmp_path, capsys):
        code, _, _ = run(capsys, "eval", "--manifest", tmp_path / "none", "--predictions", tmp_path)
        assert code == 2


class TestPipeline:
    def test_synth_outputs(self, pipeline):
        cfg = json.loads((pipeline / "pool" / "synth_config.json").read_text())
        assert cfg["per_class_count"] == 12 and cfg["rng_seed"] == 5
        assert len(list((pipeline / "pool" / "Reversal").glob("*.png"))) == 12

    def test_manifest(self, pipeline):
        m = json.loads((pipeline / "ds" / "manifest.json").read_text())
        assert m["master_seed"] == 9 and m["image_size"] == 640
        assert len(m["splits"]["train"]) + len(m["splits"]["val"]) == 20

    def test_eval_perfect(self, pipeline, tmp_path, capsys):
        code, out, _ = run(capsys, "eval", "--manifest", pipeline / "ds",
                           "--predictions", pipeline / "pred", "--out", tmp_path / "r.json")
        assert code == 0
        rep = json.loads((tmp_path / "r.json").read_text())
        assert rep["aggregate"]["map_50"] == 1.0 and rep["aggregate"]["map_50_95"] == 1.0
        for entry in rep["classes"].values():
            if entry["gt_count"]:
                assert entry["fixed"]["precision"] == entry["fixed"]["recall"] == 1.0
        code, again, _ = run(capsys, "report", tmp_path / "r.json")
        assert code == 0 and again.strip() in out

    def test_eval_shifted(self, pipeline, tmp_path, capsys):
        from synthwords.annotation_io import read_predictions, write_predictions

        for src in (pipeline / "pred" / "val").glob("*.txt"):
            dets = [d.__class__(d.box.shifted(16), d.cls, d.confidence, d.image_id)
                    for d in read_predictions(src, 640)]
            write_predictions(dets, tmp_path / "shift" / "val" / src.name, 640)
        code, _, _ = run(capsys, "eval", "--manifest", pipeline / "ds",
                         "--predictions", tmp_path / "shift", "--out", tmp_path / "r.json")
        assert code == 0
        agg = json.loads((tmp_path / "r.json").read_text())["aggregate"]
        assert agg["map_50"] == 1.0
        assert abs(agg["map_50_95"] - 0.3) <= 1e-9

    def test_report_bad_file(self, tmp_path, capsys):
        code, _, _ = run(capsys, "report", tmp_path / "missing.json")
        assert code == 2
