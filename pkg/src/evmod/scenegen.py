"""Deterministic synthetic RGB+event scenes with moving-object ground truth.

Scenes are rectangles gliding linearly over a fixed background gradient.
The event camera model is the standard log-intensity threshold rule with
per-pixel reference memory: at each micro-step a pixel fires one event when
|log(I + eps0) - log(I_ref + eps0)| exceeds the contrast threshold, with the
polarity of the change, and its reference resets to the current intensity.

Everything is a pure function of the config: per-timestamp noise comes from
a counter-based generator keyed on (seed, t), so the same config always
produces byte-identical sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .eventio import (
    AnnotationBox,
    EventStream,
    FrameRecord,
    write_annotations,
    write_events,
    write_ppm,
    write_timeline,
)

LOG_EPS = 1e-3
NIGHT_INTENSITY_SCALE = 0.25
NIGHT_NOISE_SCALE = 2.0


@dataclass(frozen=True)
class SceneObject:
    """A rectangle with a linear trajectory, positions in px, px/frame."""

    x0: float
    y0: float
    w: int
    h: int
    vx: float
    vy: float
    intensity: float
    moving: bool


@dataclass(frozen=True)
class SceneConfig:
    width: int = 96
    height: int = 96
    n_frames: int = 48
    frame_period_us: int = 10_000
    exposure_us: int = 2_000
    n_moving: int = 2
    n_static: int = 1
    velocity_min: float = 0.5  # px/frame
    velocity_max: float = 2.5
    size_min: int = 10
    size_max: int = 26
    contrast_threshold: float = 0.15
    micro_steps: int = 16
    noise_std: float = 0.004
    illumination: str = "day"  # day | night
    seed: int = 0
    objects: tuple[SceneObject, ...] | None = field(default=None)

    def __post_init__(self):
        if self.exposure_us > self.frame_period_us:
            raise ValueError("exposure must not exceed the frame period")
        if not 1 <= self.n_moving <= 3:
            raise ValueError("n_moving must be in [1, 3]")
        if not 0 <= self.n_static <= 2:
            raise ValueError("n_static must be in [0, 2]")
        if self.illumination not in ("day", "night"):
            raise ValueError(f"unknown illumination preset {self.illumination!r}")

    @property
    def duration_us(self) -> int:
        return self.n_frames * self.frame_period_us

    @property
    def intensity_scale(self) -> float:
        return NIGHT_INTENSITY_SCALE if self.illumination == "night" else 1.0

    @property
    def effective_noise_std(self) -> float:
        return self.noise_std * (NIGHT_NOISE_SCALE if self.illumination == "night" else 1.0)


@dataclass
class GroundTruthSequence:
    config: SceneConfig
    frames: list[FrameRecord]
    moving_boxes: dict[int, list[AnnotationBox]]
    static_boxes: dict[int, list[AnnotationBox]]
    intensity_frames: np.ndarray  # (n_frames, H, W) float, mid-exposure, noise-free


# -- object placement ---------------------------------------------------------------


def scene_objects(config: SceneConfig) -> tuple[SceneObject, ...]:
    """Sample rectangles whose full trajectories stay in-frame and disjoint."""
    if config.objects is not None:
        return config.objects
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5CE17E]))
    objects: list[SceneObject] = []
    margin = 2
    for idx in range(config.n_moving + config.n_static):
        moving = idx < config.n_moving
        for _attempt in range(600):
            # crowded draws shrink sizes and speeds until placement succeeds
            shrink = max(0.35, 1.0 - _attempt / 250.0)
            hi = max(config.size_min + 1, int(round(config.size_max * shrink)))
            w = int(rng.integers(config.size_min, hi + 1))
            h = int(rng.integers(config.size_min, hi + 1))
            if moving:
                speed = rng.uniform(config.velocity_min, max(config.velocity_min + 1e-6,
                                                             config.velocity_max * shrink))
                angle = rng.uniform(0, 2 * np.pi)
                vx = speed * np.cos(angle)
                vy = speed * np.sin(angle)
            else:
                vx = vy = 0.0
            # start range keeping the whole linear path inside the frame
            tx = vx * config.n_frames
            ty = vy * config.n_frames
            x_lo = margin + max(0.0, -tx)
            x_hi = config.width - w - margin - max(0.0, tx)
            y_lo = margin + max(0.0, -ty)
            y_hi = config.height - h - margin - max(0.0, ty)
            if x_hi <= x_lo or y_hi <= y_lo:
                continue
            x0 = rng.uniform(x_lo, x_hi)
            y0 = rng.uniform(y_lo, y_hi)
            bright = rng.random() < 0.65
            intensity = rng.uniform(0.72, 0.97) if bright else rng.uniform(0.02, 0.1)
            cand = SceneObject(x0, y0, w, h, vx, vy, float(intensity), moving)
            if _paths_disjoint(cand, objects, config):
                objects.append(cand)
                break
        else:
            raise RuntimeError("could not place scene objects without overlap")
    return tuple(objects)


def _paths_disjoint(cand: SceneObject, placed: list[SceneObject], config: SceneConfig) -> bool:
    gap = 3
    for k in range(config.n_frames + 1):
        t = k * config.frame_period_us
        cx1, cy1, cx2, cy2 = object_box(cand, t, config)
        for other in placed:
            ox1, oy1, ox2, oy2 = object_box(other, t, config)
            if cx1 < ox2 + gap and ox1 < cx2 + gap and cy1 < oy2 + gap and oy1 < cy2 + gap:
                return False
    return True


def object_box(obj: SceneObject, t_us: int, config: SceneConfig) -> tuple[int, int, int, int]:
    """Rasterized extent (x1, y1, x2, y2), exclusive corners, at time t."""
    fx = t_us / config.frame_period_us
    x1 = int(np.floor(obj.x0 + obj.vx * fx + 0.5))
    y1 = int(np.floor(obj.y0 + obj.vy * fx + 0.5))
    x1 = max(0, min(x1, config.width - 1))
    y1 = max(0, min(y1, config.height - 1))
    x2 = min(x1 + obj.w, config.width)
    y2 = min(y1 + obj.h, config.height)
    return x1, y1, x2, y2


# -- rendering -----------------------------------------------------------------------


def _background(config: SceneConfig) -> np.ndarray:
    ramp = np.linspace(0.25, 0.55, config.width, dtype=np.float64)
    return np.broadcast_to(ramp, (config.height, config.width)).copy()


def _noise(config: SceneConfig, t_us: int) -> np.ndarray | None:
    std = config.effective_noise_std
    if std <= 0:
        return None
    bitgen = np.random.Philox(key=np.uint64(config.seed), counter=[np.uint64(t_us), 0, 0, 0])
    rng = np.random.Generator(bitgen)
    return rng.normal(0.0, std, size=(config.height, config.width))


def render_intensity(
    config: SceneConfig,
    t_us: int,
    objects: tuple[SceneObject, ...] | None = None,
    noise: bool = True,
) -> np.ndarray:
    """Latent intensity image in [0, 1] at time t (pure function of config)."""
    if not 0 <= t_us <= config.duration_us:
        raise ValueError(f"t={t_us} outside [0, {config.duration_us}]")
    if objects is None:
        objects = scene_objects(config)
    img = _background(config)
    for obj in objects:
        x1, y1, x2, y2 = object_box(obj, t_us, config)
        img[y1:y2, x1:x2] = obj.intensity
    img *= config.intensity_scale
    if noise:
        n = _noise(config, t_us)
        if n is not None:
            img += n
    return np.clip(img, 0.0, 1.0)


# -- event simulation ----------------------------------------------------------------


def simulate_events(config: SceneConfig) -> EventStream:
    """Threshold-crossing events over the whole sequence duration."""
    objects = scene_objects(config)
    theta = config.contrast_threshold
    step_us = config.frame_period_us // config.micro_steps
    log_ref = np.log(render_intensity(config, 0, objects) + LOG_EPS)
    ts, xs, ys, ps = [], [], [], []
    n_steps = config.n_frames * config.micro_steps
    for k in range(1, n_steps + 1):
        t = k * step_us
        log_now = np.log(render_intensity(config, t, objects) + LOG_EPS)
        diff = log_now - log_ref
        fired = np.abs(diff) > theta
        if fired.any():
            yy, xx = np.nonzero(fired)  # row-major: deterministic intra-step order
            ts.append(np.full(yy.size, t, dtype=np.uint64))
            xs.append(xx.astype(np.uint16))
            ys.append(yy.astype(np.uint16))
            ps.append((diff[yy, xx] > 0).astype(np.uint8))
            log_ref[fired] = log_now[fired]
    if ts:
        stream = EventStream(
            config.width, config.height,
            np.concatenate(ts), np.concatenate(xs), np.concatenate(ys), np.concatenate(ps),
        )
    else:
        stream = EventStream(config.width, config.height)
    stream.validate()
    return stream


# -- sequence emission ---------------------------------------------------------------


def frame_records(config: SceneConfig) -> list[FrameRecord]:
    recs = []
    for k in range(config.n_frames):
        start = k * config.frame_period_us
        recs.append(
            FrameRecord(k, start, start + config.exposure_us, f"frames/frame_{k:06d}.ppm")
        )
    return recs


def generate_sequence(config: SceneConfig, out_dir: str | Path) -> GroundTruthSequence:
    """Write one sequence (events, timeline, frames, annotations) to disk.

    The same config always produces byte-identical files. Annotation boxes
    cover moving objects only; static distractors go to ``distractors.csv``
    with the same schema so that moving-only semantics stay checkable.
    """
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    objects = scene_objects(config)
    stream = simulate_events(config)
    write_events(stream, out / "events.evt1")

    frames = frame_records(config)
    write_timeline(frames, out / "frames.csv")

    moving: dict[int, list[AnnotationBox]] = {}
    static: dict[int, list[AnnotationBox]] = {}
    latents = np.empty((config.n_frames, config.height, config.width), dtype=np.float64)
    for rec in frames:
        t_mid = rec.t_exp_start + config.exposure_us // 2
        latents[rec.frame_id] = render_intensity(config, t_mid, objects, noise=False)
        img = render_intensity(config, t_mid, objects)
        img8 = np.round(img * 255.0).astype(np.uint8)
        write_ppm(np.repeat(img8[:, :, None], 3, axis=2), out / rec.image_path)
        for obj in objects:
            x1, y1, x2, y2 = object_box(obj, t_mid, config)
            box = AnnotationBox(rec.frame_id, 0, x1, y1, x2, y2)
            (moving if obj.moving else static).setdefault(rec.frame_id, []).append(box)

    write_annotations([b for fid in sorted(moving) for b in moving[fid]], out / "annotations.csv")
    write_annotations([b for fid in sorted(static) for b in static[fid]], out / "distractors.csv")
    return GroundTruthSequence(config, frames, moving, static, latents)


def night_variant(config: SceneConfig) -> SceneConfig:
    """Same scene layout, night illumination."""
    return replace(config, illumination="night")


def generate_dataset(
    out_dir: str | Path,
    n_train: int,
    n_val: int,
    frames_per_seq: int = 48,
    seed: int = 0,
    base: SceneConfig | None = None,
    night_val: bool = True,
    mixed_train: bool = True,
) -> dict[str, int]:
    """Emit train/val splits of independent sequences, plus night twins.

    Sequence seeds derive from the master seed; object counts vary per
    sequence over the allowed ranges. Training alternates day and night
    sequences (``mixed_train``) so illumination-split evaluation measures
    robustness rather than distribution shift; ``val_night`` replays the
    exact val scenes under the night preset so day/night comparisons are
    paired. Returns the frame count per split.
    """
    base = base or SceneConfig()
    out = Path(out_dir)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))
    written: dict[str, int] = {}

    def emit(split: str, index: int, cfg: SceneConfig) -> None:
        generate_sequence(cfg, out / split / f"seq_{index:03d}")
        written[split] = written.get(split, 0) + cfg.n_frames

    for split, count in (("train", n_train), ("val", n_val)):
        for i in range(count):
            illum = "night" if split == "train" and mixed_train and i % 2 == 1 else "day"
            cfg = replace(
                base,
                n_frames=frames_per_seq,
                n_moving=int(rng.integers(1, 4)),
                n_static=int(rng.integers(0, 3)),
                seed=int(rng.integers(0, 2**31)),
                illumination=illum,
            )
            emit(split, i, cfg)
            if split == "val" and night_val:
                emit("val_night", i, night_variant(cfg))
    return written
