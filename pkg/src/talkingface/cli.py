"""Command-line entry point: ``talkingface {prepare-bank,train,synth,eval}``.

Exit codes: 0 on success, 2 on usage or data errors, 1 on internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, evalkit
from . import facegeom as fg
from . import synthetic as syn

log = logging.getLogger("talkingface")


class UsageError(Exception):
    pass


# -- prepare-bank ---------------------------------------------------------------

def _crop_all(frames, landmarks, mode, size):
    """Crop every frame with one shared window side (the median per-frame side)."""
    sides = [fg.crop_transform(p, mode, size)[1][2] for p in landmarks]
    side = float(np.median(sides))
    out_frames, out_lms = [], []
    for img, pts in zip(frames, landmarks):
        c, p = fg.crop_center(img, pts, mode, size, side=side)
        out_frames.append(c)
        out_lms.append(p)
    return out_frames, out_lms, side


def _demo_subject(out: Path, size: int, seed: int, clips: int, frames_per_clip: int, source_frames: int):
    """Render a raw (uncropped) synthetic subject under ``out/raw``."""
    rng = np.random.default_rng(seed)
    ident = syn.Identity.random(rng)
    raw = size + size // 4
    src_frames, src_lms, _ = syn.talking_clip(ident, source_frames, raw, rng)
    data.write_clip(out / "raw" / "source", src_frames, src_lms)
    for k in range(clips):
        f, p, _ = syn.talking_clip(ident, frames_per_clip, raw, rng)
        data.write_clip(out / "raw" / f"clip_{k:02d}", f, p)
    return out / "raw" / "source", out / "raw" / "source" / "landmarks.jsonl"


def cmd_prepare_bank(args) -> int:
    out = Path(args.out)
    if args.demo:
        frames_dir, lm_file = _demo_subject(out, args.size, args.seed, args.demo_clips, args.demo_frames,
                                            max(args.demo_frames, args.bank_size))
    else:
        if not args.frames or not args.landmarks:
            raise UsageError("--frames and --landmarks are required unless --demo is given")
        frames_dir, lm_file = Path(args.frames), Path(args.landmarks)
        if not frames_dir.is_dir():
            raise UsageError(f"frames directory {frames_dir} does not exist")
    frames = data.read_frame_dir(frames_dir)
    landmarks = fg.load_landmarks(lm_file)
    if len(frames) != len(landmarks):
        raise UsageError(f"{len(frames)} frames but {len(landmarks)} landmark records")
    if len(frames) < args.bank_size:
        raise UsageError(f"insufficient frames: need {args.bank_size}, got {len(frames)}")

    cropped, cropped_lms, side = _crop_all(frames, landmarks, args.mode, args.size)
    chosen = fg.select_bank_indices(cropped_lms, args.bank_size)
    bank = fg.SourceBank.from_frames([cropped[i] for i in chosen], [cropped_lms[i] for i in chosen])
    # every bank landmark should land inside the crop for the difference fields to be complete
    inside = [int(np.count_nonzero(np.any(fg.difference_field(p, p + 1.0, args.size, args.size), axis=-1)))
              for p in bank.landmarks]
    data.write_bank(out / "bank", bank, {
        "mode": args.mode, "crop_side": side, "source_frames": chosen, "landmarks_in_frame": inside,
    })

    if args.demo:
        for clip_dir in sorted((out / "raw").glob("clip_*")):
            c = data.read_frame_dir(clip_dir)
            p = fg.load_landmarks(clip_dir / "landmarks.jsonl")
            cf, cp, _ = _crop_all(c, p, args.mode, args.size)
            data.write_clip(out / "clips" / clip_dir.name, cf, cp)
        # a ready-made driving sequence with its ground truth for synth/eval
        first = out / "clips" / "clip_00"
        fg.save_landmarks(out / "targets.jsonl", fg.load_landmarks(first / "landmarks.jsonl"))

    print(json.dumps({"bank": str(out / "bank"), "openness": [round(float(o), 4) for o in bank.openness]}))
    return 0


# -- train ---------------------------------------------------------------------

def cmd_train(args) -> int:
    from .trainer import TrainConfig, Trainer

    try:
        config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.data:
        corpus = data.load_corpus(args.data)
    else:
        corpus = data.synthetic_corpus(config.demo_subjects, 64, config.n_sources, config.demo_clips,
                                       config.demo_frames, seed=config.seed)
    h, w = corpus.image_size
    if h % 16 or w % 16:
        raise UsageError(f"training images must be divisible by 16, got {h}x{w}")
    (out / "config.txt").write_text(config.to_text())
    trainer = Trainer(config, corpus, log_path=out / "train_log.csv")
    if args.resume:
        trainer.load(args.resume)
        log.info("resumed from %s at update %d", args.resume, trainer.iteration)
    trainer.train(checkpoint_dir=out, progress_every=max(1, config.steps // 10))
    print(json.dumps({"checkpoint": str(out / "last.ckpt"), "updates": trainer.iteration,
                      "g_updates": trainer.g_updates}))
    return 0


# -- synth ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import Pipeline, write_frames
    from .trainer import load_generator

    gen, manifest = load_generator(args.ckpt)
    bank = data.read_bank(args.bank)
    try:
        pipe = Pipeline(gen, args.variant, args.warp_margin)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if bank.size < pipe.variant.n_sources:
        raise UsageError(f"profile mismatch: checkpoint expects a bank of {pipe.variant.n_sources} images, "
                         f"bank has {bank.size}")
    seq = fg.load_landmarks(args.landmarks)
    if not seq:
        raise UsageError("landmark file has no records")
    results = pipe.sequence(bank, seq)
    write_frames(args.out, results, diagnostics=not args.no_diagnostics)
    print(json.dumps({"frames": len(results), "out": str(args.out)}))
    return 0


# -- eval ----------------------------------------------------------------------

def _extractor(spec: str):
    from .losses import StubExtractor, VGG16Extractor

    if spec == "stub":
        return StubExtractor()
    if not Path(spec).exists():
        raise UsageError(f"extractor weights {spec} not found")
    return VGG16Extractor(spec)


def cmd_eval(args) -> int:
    names = evalkit.paired_files(args.pred, args.gt)
    pred = [data.read_png(Path(args.pred) / n) for n in names]
    gt = [data.read_png(Path(args.gt) / n) for n in names]
    row = {"metric": args.metric, "n_pred": len(pred), "n_gt": len(gt)}
    if args.metric == "l1":
        row["value"] = evalkit.l1_metric(pred, gt)
    else:
        ext = _extractor(args.extractor)
        row["value"] = evalkit.fid_metric(evalkit.extract_features(pred, ext), evalkit.extract_features(gt, ext))
        row["extractor"] = ext.ident
    report = Path(args.report) if args.report else Path(args.pred) / f"eval_{args.metric}.csv"
    evalkit.write_report(report, [row])
    print(report.read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="talkingface", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pb = sub.add_parser("prepare-bank", help="crop frames and select a source bank by mouth openness")
    pb.add_argument("--frames", help="directory of PNG frames (sorted by name)")
    pb.add_argument("--landmarks", help="JSON-lines landmark file, one record per frame")
    pb.add_argument("--bank-size", type=int, default=5)
    pb.add_argument("--mode", choices=["nose-tip", "eye-corners"], default="nose-tip")
    pb.add_argument("--size", type=int, default=224, help="output crop size in pixels")
    pb.add_argument("--out", required=True)
    pb.add_argument("--demo", action="store_true", help="render a synthetic subject instead of reading frames")
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--demo-clips", type=int, default=3)
    pb.add_argument("--demo-frames", type=int, default=12)
    pb.set_defaults(func=cmd_prepare_bank)

    pt = sub.add_parser("train", help="adversarial training")
    pt.add_argument("--config", help="key = value config file")
    pt.add_argument("--data", help="corpus directory; omitted -> synthetic corpus")
    pt.add_argument("--out", required=True)
    pt.add_argument("--resume", help="checkpoint to resume from")
    pt.set_defaults(func=cmd_train)

    ps = sub.add_parser("synth", help="synthesize frames from a landmark sequence")
    ps.add_argument("--ckpt", required=True)
    ps.add_argument("--bank", required=True)
    ps.add_argument("--landmarks", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--warp-margin", type=float, default=40.0)
    ps.add_argument("--variant", default="AW", choices=["1B", "3B", "5B", "A", "W", "AW"])
    ps.add_argument("--no-diagnostics", action="store_true")
    ps.set_defaults(func=cmd_synth)

    pe = sub.add_parser("eval", help="L1 / FID between paired frame directories")
    pe.add_argument("--pred", required=True)
    pe.add_argument("--gt", required=True)
    pe.add_argument("--metric", choices=["l1", "fid"], default="l1")
    pe.add_argument("--extractor", default="stub", help="'stub' or a VGG16 features state-dict file")
    pe.add_argument("--report", help="CSV report path (default: <pred>/eval_<metric>.csv)")
    pe.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
