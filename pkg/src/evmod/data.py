"""Dataset loading and batch assembly.

A data root holds one directory per split (``train``, ``val``, optionally
``val_night``), each containing sequence directories in the on-disk layout
emitted by the scene generator: ``events.evt1``, ``frames.csv``,
``annotations.csv``, ``distractors.csv``, ``frames/*.ppm``.

Per-frame RGB and the three event range frames are decoded once per
sequence and cached as uint8 (counts are already clipped), so epochs only
pay for augmentation and stacking.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import augment_sample, sample_params
from .errors import DataError
from .eventio import read_annotations, read_events, read_ppm, read_timeline
from .model.detector import TargetMaps, encode_targets
from .nn import Tensor
from .representation import build_multirange

Boxes = list[tuple[int, tuple[float, float, float, float]]]


@dataclass
class SequenceData:
    name: str
    images: np.ndarray  # (n, 3, H, W) uint8
    event_counts: np.ndarray  # (n, 3, 2, H, W) uint8, clipped counts
    boxes: list[Boxes]  # moving objects per frame
    static_boxes: list[Boxes]  # distractors per frame


@dataclass
class Dataset:
    sequences: list[SequenceData]
    samples: list[tuple[int, int]]  # (sequence index, keyframe index)
    clip_count: int
    k_frames: int

    def __len__(self) -> int:
        return len(self.samples)


def load_sequence(seq_dir: Path, clip_count: int) -> SequenceData:
    try:
        frames = read_timeline(seq_dir / "frames.csv")
        stream = read_events(seq_dir / "events.evt1")
        moving = read_annotations(seq_dir / "annotations.csv")
        distractor_path = seq_dir / "distractors.csv"
        static = read_annotations(distractor_path) if distractor_path.exists() else {}
    except FileNotFoundError as exc:
        raise DataError(f"{seq_dir}: {exc}") from exc
    if len(frames) < 2:
        raise DataError(f"{seq_dir}: needs at least 2 frames")
    period = frames[1].t_exp_end - frames[0].t_exp_end

    n = len(frames)
    h, w = stream.height, stream.width
    images = np.empty((n, 3, h, w), dtype=np.uint8)
    counts = np.empty((n, 3, 2, h, w), dtype=np.uint8)
    boxes: list[Boxes] = []
    static_b: list[Boxes] = []
    for rec in frames:
        img = read_ppm(seq_dir / rec.image_path)
        if img.shape[:2] != (h, w):
            raise DataError(f"{seq_dir / rec.image_path}: image size {img.shape[:2]} != sensor {(h, w)}")
        images[rec.frame_id] = img.transpose(2, 0, 1)
        stack = build_multirange(stream, rec, period, clip_count)
        counts[rec.frame_id] = np.round(stack.data * clip_count).astype(np.uint8)
        boxes.append([(b.class_id, b.box) for b in moving.get(rec.frame_id, [])])
        static_b.append([(b.class_id, b.box) for b in static.get(rec.frame_id, [])])
    return SequenceData(seq_dir.name, images, counts, boxes, static_b)


def load_split(data_dir: str | Path, split: str, cfg) -> Dataset:
    root = Path(data_dir) / split
    if not root.is_dir():
        raise DataError(f"missing split directory {root}")
    seq_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not seq_dirs:
        raise DataError(f"no sequences under {root}")
    sequences = [load_sequence(p, cfg.clip_count) for p in seq_dirs]
    samples = []
    for si, seq in enumerate(sequences):
        for fi in range(cfg.k_frames - 1, len(seq.images)):
            samples.append((si, fi))
    return Dataset(sequences, samples, cfg.clip_count, cfg.k_frames)


@dataclass
class Batch:
    rgb: Tensor | None
    events: object  # (e1, e2, e3) tuple, a stacked tensor, or None per event mode
    targets: list[TargetMaps]
    boxes: list[Boxes]
    sample_ids: list[tuple[int, int]]


def _event_input_planes(seq: SequenceData, fi: int, mode: str) -> np.ndarray | None:
    if mode == "none":
        return None
    counts = seq.event_counts[fi]  # (3, 2, H, W)
    if mode == "single":
        return counts[0]
    return counts.reshape(6, *counts.shape[-2:])


def event_mode_for(cfg) -> str:
    if cfg.fusion_mode == "rgb_only":
        return "none"
    if cfg.fusion_mode == "early":
        return "accumulate"
    return cfg.event_mode


def assemble_batch(
    dataset: Dataset,
    sample_ids: list[tuple[int, int]],
    cfg,
    rng: np.random.Generator | None = None,
) -> Batch:
    """Gather, normalize, optionally augment, and encode targets."""
    mode = event_mode_for(cfg)
    k = cfg.k_frames
    rgbs, events, targets, all_boxes = [], [], [], []
    grid = cfg.input_size // 4
    for si, fi in sample_ids:
        seq = dataset.sequences[si]
        stack = seq.images[fi - k + 1 : fi + 1].astype(np.float32) / 255.0  # (K, 3, H, W)
        rgb = stack.reshape(3 * k, *stack.shape[-2:])
        planes = _event_input_planes(seq, fi, mode)
        ev = planes.astype(np.float32) / cfg.clip_count if planes is not None else None
        boxes = list(seq.boxes[fi])
        if rng is not None and cfg.aug_enabled:
            params = sample_params(cfg, rng)
            rgb, ev, boxes = augment_sample(rgb, ev, boxes, params)
        rgbs.append(rgb)
        events.append(ev)
        all_boxes.append(boxes)
        targets.append(encode_targets(boxes, cfg.n_classes, grid, grid))

    rgb_t = None if cfg.fusion_mode == "event_only" else Tensor(np.stack(rgbs))
    if mode == "none":
        ev_in = None
    else:
        ev_stack = Tensor(np.stack(events))
        if mode == "etma":
            e3d = ev_stack.data.reshape(len(sample_ids), 3, 2, *ev_stack.data.shape[-2:])
            ev_in = tuple(Tensor(np.ascontiguousarray(e3d[:, i])) for i in range(3))
        else:
            ev_in = ev_stack
    return Batch(rgb_t, ev_in, targets, all_boxes, list(sample_ids))
