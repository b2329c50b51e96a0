"""Command-line entry points.

Subcommands: gen, repr-dump, train, eval, infer, ablate, gradcheck.
Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .ablate import format_table, run_ablation
from .config import ModelConfig, parse_flat_config
from .data import assemble_batch
from .errors import CheckpointMismatch, ConfigError, DataError, EvmodError
from .eventio import read_events, read_timeline, write_pgm, write_ppm
from .gradsuite import run_gradient_suite
from .metrics import write_detections
from .model.detector import decode
from .nn import load_checkpoint, no_grad
from .representation import build_multirange
from .scenegen import SceneConfig, generate_dataset
from .train import evaluate_checkpoint, train


def _model_config(args) -> ModelConfig:
    cfg = ModelConfig.from_file(args.config) if args.config else ModelConfig()
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    return cfg.with_overrides({k.strip(): v.strip() for k, v in overrides.items()})


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )


def cmd_gen(args) -> int:
    base = SceneConfig()
    if args.scene_config:
        raw = parse_flat_config(Path(args.scene_config).read_text())
        allowed = {f for f in SceneConfig.__dataclass_fields__ if f != "objects"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown scene config keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in raw.items():
            cur = getattr(base, k)
            kwargs[k] = type(cur)(v) if not isinstance(cur, str) else v
        base = SceneConfig(**kwargs)
    written = generate_dataset(
        args.out,
        n_train=args.train_sequences,
        n_val=args.val_sequences,
        frames_per_seq=args.frames,
        seed=args.seed,
        base=base,
        night_val=not args.no_night,
    )
    print(json.dumps(written))
    return 0


def cmd_repr_dump(args) -> int:
    seq = Path(args.sequence)
    try:
        stream = read_events(seq / "events.evt1")
        frames = read_timeline(seq / "frames.csv")
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    rec = next((f for f in frames if f.frame_id == args.frame), None)
    if rec is None:
        raise DataError(f"frame {args.frame} not in {seq / 'frames.csv'}")
    period = frames[1].t_exp_end - frames[0].t_exp_end if len(frames) > 1 else 2 * rec.exposure_us
    stack = build_multirange(stream, rec, period, args.clip)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(stack.frames, start=1):
        heat = np.clip(frame.data.sum(axis=0), 0.0, 1.0)
        write_pgm(np.round(heat * 255).astype(np.uint8), out / f"frame{rec.frame_id:06d}_range{i}.pgm")
    print(f"wrote 3 range heat maps for frame {rec.frame_id} to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _model_config(args)
    manifest = train(cfg, args.data, args.out)
    last = manifest.epochs[-1]
    print(
        f"trained {len(manifest.epochs)} epochs: "
        f"final loss {last.train_loss:.4f}, val mAP@{cfg.map_iou:g} {manifest.final_map:.4f} "
        f"({manifest.runtime_s:.0f}s)"
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _model_config(args)
    split = "val_night" if args.illum == "night" else args.split
    report = evaluate_checkpoint(cfg, args.checkpoint, args.data, split, args.iou)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_infer(args) -> int:
    cfg = _model_config(args)
    model = cfg.build_model()
    load_checkpoint(model, args.checkpoint)
    model.eval()
    from .data import Dataset, load_sequence

    seq = load_sequence(Path(args.sequence), cfg.clip_count)
    dataset = Dataset([seq], [(0, fi) for fi in range(cfg.k_frames - 1, len(seq.images))],
                      cfg.clip_count, cfg.k_frames)
    out_dir = Path(args.out)
    (out_dir / "overlays").mkdir(parents=True, exist_ok=True)
    dets_by_frame = {}
    with no_grad():
        for start in range(0, len(dataset.samples), cfg.eval_batch_size):
            ids = dataset.samples[start : start + cfg.eval_batch_size]
            batch = assemble_batch(dataset, ids, cfg, rng=None)
            decoded = decode(model(batch.rgb, batch.events), (cfg.input_size, cfg.input_size),
                             cfg.decode_top_k, cfg.decode_threshold)
            for (si, fi), dets in zip(ids, decoded):
                dets_by_frame[fi] = dets
                img = seq.images[fi].transpose(1, 2, 0).copy()
                for d in dets:
                    _draw_box(img, d.box)
                write_ppm(img, out_dir / "overlays" / f"frame_{fi:06d}.ppm")
    write_detections(dets_by_frame, out_dir / "detections.csv")
    n = sum(len(v) for v in dets_by_frame.values())
    print(f"wrote {n} detections over {len(dets_by_frame)} frames to {out_dir}")
    return 0


def _draw_box(img: np.ndarray, box) -> None:
    h, w = img.shape[:2]
    x1, y1, x2, y2 = (int(round(v)) for v in box)
    x1, x2 = max(0, min(x1, w - 1)), max(0, min(x2, w - 1))
    y1, y2 = max(0, min(y1, h - 1)), max(0, min(y2, h - 1))
    red = np.array([255, 32, 32], dtype=np.uint8)
    img[y1, x1 : x2 + 1] = red
    img[y2, x1 : x2 + 1] = red
    img[y1 : y2 + 1, x1] = red
    img[y1 : y2 + 1, x2] = red


def cmd_ablate(args) -> int:
    cfg = _model_config(args)
    rows = run_ablation(cfg, args.data, args.out)
    print(format_table(rows), end="")
    return 0


def cmd_gradcheck(args) -> int:
    ok = run_gradient_suite(seeds=args.seeds, verbose=True)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evmod", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--train-sequences", type=int, default=8)
    p.add_argument("--val-sequences", type=int, default=2)
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene-config", help="flat key = value scene parameter file")
    p.add_argument("--no-night", action="store_true", help="skip the night twin of the val split")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("repr-dump", help="dump range heat maps for one frame")
    p.add_argument("--sequence", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip", type=int, default=10)
    p.set_defaults(func=cmd_repr_dump)

    p = sub.add_parser("train", help="train a model")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", help="val, train, or val_night")
    p.add_argument("--illum", choices=["day", "night"], default="day",
                   help="night selects the val_night split")
    p.add_argument("--iou", type=float, default=None, help="IoU threshold (default: config map_iou)")
    p.add_argument("--out", help="write the metrics JSON here as well")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="run a checkpoint over one sequence, write overlays + CSV")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train/evaluate the six-variant ablation matrix")
    _add_config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all operators and blocks")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointMismatch, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except EvmodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
