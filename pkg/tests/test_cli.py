import hashlib
import json

import numpy as np

from pixelmeta.cli import main
from pixelmeta.tensorio import load_tensor


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


SMALL_SYNTH = [
    "--classes", "4", "--base-classes", "2", "--height", "16", "--width", "16",
    "--per-class", "6",
]


def test_synth_writes_dataset(tmp_path, capsys):
    out = tmp_path / "ds"
    code = main(["synth", *SMALL_SYNTH, "--seed", "5", "--out", str(out)])
    assert code == 0
    assert (out / "manifest.json").exists()
    assert (out / "config_echo.json").exists()
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["command"] == "synth"
    assert echo["config"]["seed"] == 5


def test_synth_byte_identical_across_runs(tmp_path):
    main(["synth", *SMALL_SYNTH, "--seed", "5", "--out", str(tmp_path / "a")])
    main(["synth", *SMALL_SYNTH, "--seed", "5", "--out", str(tmp_path / "b")])
    files_a = sorted((tmp_path / "a").rglob("*.pxt"))
    files_b = sorted((tmp_path / "b").rglob("*.pxt"))
    assert [digest(p) for p in files_a] == [digest(p) for p in files_b]


def test_missing_required_flag_exits_one(capsys):
    assert main(["eval"]) == 1
    err = capsys.readouterr().err
    assert "--manifest" in err


def test_unknown_subcommand_exits_one(capsys):
    assert main(["frobnicate"]) == 1


def test_missing_manifest_file_is_io_error(tmp_path, capsys):
    code = main(["eval", "--manifest", str(tmp_path / "nope.json"),
                 "--no-encoder", "--out", str(tmp_path / "r.json")])
    assert code == 2


def test_validation_error_exits_one(tmp_path, capsys):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"classes": {}}))
    code = main(["eval", "--manifest", str(bad), "--no-encoder",
                 "--out", str(tmp_path / "r.json")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_full_pipeline_chain(tmp_path, capsys):
    ds = tmp_path / "ds"
    assert main(["synth", *SMALL_SYNTH, "--seed", "7", "--out", str(ds)]) == 0
    manifest = str(ds / "manifest.json")

    pseudo = tmp_path / "pseudo"
    assert main(["pseudo-gen", "--manifest", manifest, "--out", str(pseudo)]) == 0
    summary = json.loads((pseudo / "summary.json").read_text())
    assert len(summary["samples"]) == 24
    assert all("precision" in s for s in summary["samples"])
    mask = load_tensor(pseudo / f"{summary['samples'][0]['id']}_pseudo.pxt")
    assert mask.dtype == np.uint16

    ckpt = tmp_path / "ckpt"
    assert main([
        "train", "--manifest", manifest, "--episodes", "25", "--seed", "3",
        "--out", str(ckpt),
    ]) == 0
    assert (ckpt / "config.json").exists()
    report = json.loads((ckpt / "train_report.json").read_text())
    assert len(report["losses"]) == 25

    seg = tmp_path / "seg"
    assert main([
        "segment", "--manifest", manifest, "--checkpoint", str(ckpt),
        "--episode-seed", "4", "--out", str(seg),
    ]) == 0
    seg_summary = json.loads((seg / "summary.json").read_text())
    assert seg_summary["queries"][0]["mean_iou"] >= 0.0

    rep = tmp_path / "report.json"
    assert main([
        "eval", "--manifest", manifest, "--checkpoint", str(ckpt),
        "--runs", "2", "--episodes", "3", "--seed", "9", "--out", str(rep),
    ]) == 0
    doc = json.loads(rep.read_text())
    assert len(doc["run_mean_iou"]) == 2
    assert doc["config"]["use_encoder"] is True


def test_segment_requires_checkpoint_or_ablation(tmp_path, small_synth_dir):
    code = main([
        "segment", "--manifest", str(small_synth_dir / "manifest.json"),
        "--episode-seed", "1", "--out", str(tmp_path / "o"),
    ])
    assert code == 1


def test_no_encoder_eval_runs(tmp_path, small_synth_dir):
    rep = tmp_path / "r.json"
    code = main([
        "eval", "--manifest", str(small_synth_dir / "manifest.json"),
        "--no-encoder", "--runs", "1", "--episodes", "3", "--seed", "2",
        "--out", str(rep),
    ])
    assert code == 0
    doc = json.loads(rep.read_text())
    assert doc["config"]["use_encoder"] is False
