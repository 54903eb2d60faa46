import json
import subprocess
import sys

import numpy as np
import pytest

from attackgen import cli, fileio, models
from attackgen import taxonomy as tx


@pytest.fixture(scope="module")
def weights(tmp_path_factory, seg_model, cnn_model):
    d = tmp_path_factory.mktemp("weights")
    models.save_weights(seg_model, d / "seg.agt")
    models.save_weights(cnn_model, d / "cnn.agt")
    return d


def run(argv, capsys=None):
    return cli.main([str(a) for a in argv])


def test_train_is_byte_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run(["train", "--arch", "linear", "--data", "blobs", "--seed", 0, "--epochs", 20,
                    "--out", tmp_path / sub]) == 0
    assert (tmp_path / "a" / "model.agt").read_bytes() == (tmp_path / "b" / "model.agt").read_bytes()
    m = json.loads((tmp_path / "a" / "train_metrics.json").read_text())
    assert m["arch"] == "linear" and "accuracy" in m


def test_train_segmenter_reports_pixel_accuracy(tmp_path):
    assert run(["train", "--arch", "conv-segmenter", "--data", "shapes:n=20", "--epochs", 1, "--out", tmp_path]) == 0
    m = json.loads((tmp_path / "train_metrics.json").read_text())
    assert 0.0 <= m["pixel_accuracy"] <= 1.0


def test_bad_flags_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["train"])
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        cli.main(["attack", "--spec", "preset:pgd", "--epsilon", "lots"])
    assert e.value.code == 2
    assert cli.main(["attack", "--spec", "preset:nonexistent"]) == 2


def test_divergence_exit_3(tmp_path, capsys):
    code = run(["train", "--arch", "mlp", "--data", "blobs", "--epochs", 5, "--lr", 1e6, "--out", tmp_path])
    assert code == 3
    assert "diverged" in capsys.readouterr().err


def test_invalid_spec_exit_4(tmp_path, weights, capsys):
    spec = tx.preset("pgd", model=weights / "cnn.agt").to_dict()
    spec["tags"]["model_knowledge"] = "LabelOnly"
    (tmp_path / "bad.json").write_text(json.dumps(spec))
    assert run(["attack", "--spec", tmp_path / "bad.json", "--out", tmp_path / "o"]) == 4
    err = capsys.readouterr().err
    assert "violation:" in err and "LabelOnly" in err
    assert not (tmp_path / "o").exists()


def test_runtime_error_exit_5(tmp_path, weights):
    assert run(["attack", "--spec", "preset:pgd", "--model", tmp_path / "missing.agt", "--out", tmp_path]) == 5


def _seg_attack(out, weights, seed=0):
    return run(["attack", "--spec", "preset:metzen-dynamic", "--model", weights / "seg.agt",
                "--data", "shapes:n=12,seed=1", "--seed", seed, "--samples", 2, "--out", out])


def test_attack_metzen_dynamic_end_to_end(tmp_path, weights):
    assert _seg_attack(tmp_path / "a", weights) == 0
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    adv = rep["adversarial"]
    assert sum(adv["target_pixels_after"]) < sum(adv["target_pixels_before"])
    assert rep["target_class"] == tx.PEDESTRIAN
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["perturbation.agt", "report.json", "sample_000_adv.ppm", "sample_000_triptych.ppm",
                     "sample_001_adv.ppm", "sample_001_triptych.ppm"]
    img = fileio.read_pnm(tmp_path / "a" / "sample_000_triptych.ppm")
    assert img.shape == (16, 3 * 16 + 2, 3)  # three panels, 1-px gaps

    assert _seg_attack(tmp_path / "b", weights) == 0
    rep_b = json.loads((tmp_path / "b" / "report.json").read_text())
    rep.pop("wall_time"), rep_b.pop("wall_time")
    assert rep == rep_b
    assert (tmp_path / "a" / "perturbation.agt").read_bytes() == (tmp_path / "b" / "perturbation.agt").read_bytes()

    # self-evaluation reproduces the attack's own per-pixel success
    assert run(["evaluate", "--perturbation", tmp_path / "a" / "perturbation.agt", "--model", weights / "seg.agt",
                "--data", "shapes:n=12,seed=1", "--spec", "preset:metzen-dynamic", "--out", tmp_path / "e"]) == 0
    ev = json.loads((tmp_path / "e" / "evaluation.json").read_text())
    assert ev["transfer_success_rate"] == pytest.approx(rep["adversarial"]["success_rate"], abs=1e-12)
    assert ev["target_pixels_after"] == rep["adversarial"]["target_pixels_after"]


def test_report_matches_schema(tmp_path, weights):
    from test_taxonomy import schema_validator
    assert run(["attack", "--spec", "preset:fgsm", "--model", weights / "cnn.agt", "--out", tmp_path]) == 0
    schema_validator("report.schema.json").validate(json.loads((tmp_path / "report.json").read_text()))


def test_flow_attack_writes_flow_planes(tmp_path, weights):
    spec = tx.preset("flow-dynamic", model=weights / "seg.agt").to_dict()
    spec["optimizer"]["iters"] = 5
    (tmp_path / "flow.json").write_text(json.dumps(spec))
    assert run(["attack", "--spec", tmp_path / "flow.json", "--samples", 1, "--gamma", 0.01, "--out", tmp_path]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["spec"]["form"]["gamma"] == 0.01 and rep["perturbation"]["representation"] == "flow"
    assert len(list(tmp_path.glob("flow*.pgm"))) == 2


def test_evaluate_zero_perturbation_and_shape_mismatch(tmp_path, weights, cnn_model, patterns):
    fileio.write_perturbation(tmp_path / "zero.agt", np.zeros(cnn_model.input_shape), "additive", (0.0, 1.0))
    assert run(["evaluate", "--perturbation", tmp_path / "zero.agt", "--model", weights / "cnn.agt",
                "--data", "patterns", "--out", tmp_path]) == 0
    ev = json.loads((tmp_path / "evaluation.json").read_text())
    assert "transfer_success_rate" in ev
    assert ev["transfer_success_rate"] == ev["clean_error_rate"]
    fileio.write_perturbation(tmp_path / "small.agt", np.zeros((4, 4, 1)), "additive", (0.0, 1.0))
    assert run(["evaluate", "--perturbation", tmp_path / "small.agt", "--model", weights / "cnn.agt",
                "--data", "patterns", "--out", tmp_path]) == 6


def test_cross_seed_evaluation_emits_transfer_rate(tmp_path, weights):
    assert run(["train", "--arch", "cnn-classifier", "--seed", 3, "--epochs", 3, "--out", tmp_path / "v"]) == 0
    assert run(["attack", "--spec", "preset:pgd", "--model", weights / "cnn.agt", "--out", tmp_path / "a"]) == 0
    assert run(["evaluate", "--perturbation", tmp_path / "a" / "perturbation.agt", "--model", tmp_path / "v" / "model.agt",
                "--data", "patterns:seed=5", "--out", tmp_path / "e"]) == 0
    ev = json.loads((tmp_path / "e" / "evaluation.json").read_text())
    assert 0.0 <= ev["transfer_success_rate"] <= 1.0


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "attackgen.cli", "attack", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for flag in ("--spec", "--model", "--data", "--out", "--seed", "--samples", "--epsilon", "--gamma"):
        assert flag in r.stdout
