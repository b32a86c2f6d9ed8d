import csv
import json

import numpy as np
import pytest
import torch

from talkingface import facegeom as fg
from talkingface.cli import main
from talkingface.data import read_bank, read_png
from talkingface.trainer import load_generator


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    subj = root / "subj0"
    assert main(["prepare-bank", "--demo", "--out", str(subj), "--size", "64", "--bank-size", "5",
                 "--demo-clips", "2", "--demo-frames", "10", "--seed", "3"]) == 0
    return root, subj


@pytest.fixture(scope="module")
def trained(demo, tmp_path_factory):
    root, _ = demo
    out = tmp_path_factory.mktemp("run")
    cfg = out / "train.cfg"
    cfg.write_text("batch = 2\nclips_per_batch = 2\nsteps = 17  # 17 * 6 = 102 updates\nseed = 0\n")
    assert main(["train", "--config", str(cfg), "--data", str(root), "--out", str(out / "a")]) == 0
    return out, cfg


def test_prepare_bank_demo(demo):
    _, subj = demo
    manifest = json.loads((subj / "bank" / "manifest.json").read_text())
    assert len(list((subj / "bank").glob("bank_*.png"))) == 5
    assert manifest["openness"] == sorted(manifest["openness"])
    bank = read_bank(subj / "bank")
    assert bank.images.shape == (5, 64, 64, 3)
    assert len(fg.load_landmarks(subj / "targets.jsonl")) == 10


def test_prepare_bank_from_frames(demo, tmp_path):
    _, subj = demo
    raw = subj / "raw" / "source"
    assert main(["prepare-bank", "--frames", str(raw), "--landmarks", str(raw / "landmarks.jsonl"),
                 "--bank-size", "1", "--mode", "eye-corners", "--size", "48", "--out", str(tmp_path)]) == 0
    assert read_bank(tmp_path / "bank").images.shape == (1, 48, 48, 3)


def test_prepare_bank_is_idempotent(demo, tmp_path):
    _, subj = demo
    raw = subj / "raw" / "source"
    args = ["prepare-bank", "--frames", str(raw), "--landmarks", str(raw / "landmarks.jsonl"), "--size", "32"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    for name in ("bank_00.png", "bank_04.png", "manifest.json", "landmarks.jsonl"):
        assert (tmp_path / "a" / "bank" / name).read_bytes() == (tmp_path / "b" / "bank" / name).read_bytes()


def test_prepare_bank_insufficient_frames(demo, tmp_path, capsys):
    _, subj = demo
    raw = subj / "raw" / "source"
    code = main(["prepare-bank", "--frames", str(raw), "--landmarks", str(raw / "landmarks.jsonl"),
                 "--bank-size", "11", "--out", str(tmp_path)])
    assert code == 2 and "insufficient frames" in capsys.readouterr().err


def test_prepare_bank_missing_inputs(tmp_path, capsys):
    assert main(["prepare-bank", "--out", str(tmp_path)]) == 2
    assert main(["prepare-bank", "--frames", str(tmp_path / "nope"), "--landmarks", "x", "--out",
                 str(tmp_path)]) == 2
    bad = tmp_path / "lm.jsonl"
    bad.write_text("{not json\n")
    (tmp_path / "f").mkdir()
    assert main(["prepare-bank", "--frames", str(tmp_path / "f"), "--landmarks", str(bad), "--out",
                 str(tmp_path)]) == 2


def test_train_writes_checkpoint_and_log(trained):
    out, _ = trained
    run = out / "a"
    assert (run / "last.ckpt").exists()
    rows = list(csv.DictReader(open(run / "train_log.csv")))
    assert len(rows) == 102
    _, manifest = load_generator(run / "last.ckpt")
    assert manifest["iteration"] == 102


def test_train_resume_matches(demo, trained, tmp_path):
    root, _ = demo
    out, cfg = trained
    half = tmp_path / "half.cfg"
    half.write_text(cfg.read_text().replace("steps = 17", "steps = 9"))
    assert main(["train", "--config", str(half), "--data", str(root), "--out", str(tmp_path / "h")]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(root), "--out", str(tmp_path / "r"),
                 "--resume", str(tmp_path / "h" / "last.ckpt")]) == 0
    a, _ = load_generator(out / "a" / "last.ckpt")
    b, _ = load_generator(tmp_path / "r" / "last.ckpt")
    sa, sb = a.state_dict(), b.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)


def test_train_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("batch = 2\nwarp_strength = 3\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "warp_strength" in capsys.readouterr().err


def synth(trained, demo, out, *extra):
    _, subj = demo
    lms = out.parent / "seven.jsonl"
    fg.save_landmarks(lms, fg.load_landmarks(subj / "targets.jsonl")[:7])
    return main(["synth", "--ckpt", str(trained[0] / "a" / "last.ckpt"), "--bank", str(subj / "bank"),
                 "--landmarks", str(lms), "--out", str(out), *extra])


def test_synth_frame_count(trained, demo, tmp_path):
    assert synth(trained, demo, tmp_path / "o") == 0
    assert len(list((tmp_path / "o").glob("frame_*.png"))) == 7


def test_synth_variant_a_equals_appearance(trained, demo, tmp_path):
    assert synth(trained, demo, tmp_path / "aw") == 0
    assert synth(trained, demo, tmp_path / "a", "--variant", "A", "--no-diagnostics") == 0
    for i in range(7):
        got = read_png(tmp_path / "a" / f"frame_{i:05d}.png")
        want = read_png(tmp_path / "aw" / "diagnostics" / f"frame_{i:05d}_appearance.png")
        assert np.array_equal(got, want)


def test_synth_bank_mismatch(trained, demo, tmp_path):
    _, subj = demo
    small = tmp_path / "small"
    raw = subj / "raw" / "source"
    main(["prepare-bank", "--frames", str(raw), "--landmarks", str(raw / "landmarks.jsonl"),
          "--bank-size", "3", "--size", "64", "--out", str(small)])
    code = main(["synth", "--ckpt", str(trained[0] / "a" / "last.ckpt"), "--bank", str(small / "bank"),
                 "--landmarks", str(subj / "targets.jsonl"), "--out", str(tmp_path / "o")])
    assert code == 2


def test_eval_identical_dirs(trained, demo, tmp_path):
    synth(trained, demo, tmp_path / "o", "--no-diagnostics")
    d = str(tmp_path / "o")
    assert main(["eval", "--pred", d, "--gt", d, "--metric", "l1", "--report", str(tmp_path / "l1.csv")]) == 0
    assert main(["eval", "--pred", d, "--gt", d, "--metric", "fid", "--report", str(tmp_path / "fid.csv")]) == 0
    l1 = next(csv.DictReader(open(tmp_path / "l1.csv")))
    fid = next(csv.DictReader(open(tmp_path / "fid.csv")))
    assert float(l1["value"]) == 0.0
    assert float(fid["value"]) < 1e-3 and fid["extractor"] == "stub"


def test_eval_against_ground_truth(trained, demo, tmp_path):
    _, subj = demo
    synth(trained, demo, tmp_path / "o", "--no-diagnostics")
    assert main(["eval", "--pred", str(tmp_path / "o"), "--gt", str(subj / "clips" / "clip_00"),
                 "--metric", "l1"]) == 2  # 7 predictions vs 10 frames
    gt = tmp_path / "gt"
    gt.mkdir()
    for i in range(7):
        (gt / f"frame_{i:05d}.png").write_bytes((subj / "clips" / "clip_00" / f"frame_{i:05d}.png").read_bytes())
    assert main(["eval", "--pred", str(tmp_path / "o"), "--gt", str(gt), "--metric", "l1"]) == 0
    value = float(next(csv.DictReader(open(tmp_path / "o" / "eval_l1.csv")))["value"])
    assert 0 < value < 255


def test_eval_mismatched_counts(tmp_path, capsys):
    (tmp_path / "p").mkdir()
    (tmp_path / "g").mkdir()
    img = np.zeros((8, 8, 3), np.uint8)
    from talkingface.data import write_png
    write_png(tmp_path / "p" / "a.png", img)
    write_png(tmp_path / "g" / "a.png", img)
    write_png(tmp_path / "g" / "b.png", img)
    assert main(["eval", "--pred", str(tmp_path / "p"), "--gt", str(tmp_path / "g")]) == 2
    assert "mismatched counts" in capsys.readouterr().err


def test_usage_errors_exit_2():
    assert main([]) == 2
    assert main(["synth", "--ckpt", "x"]) == 2
