"""Windowed events as frame-like polarity maps and the three-range stack.

Each frame camera exposure anchors three backward-looking event windows of
increasing length: the exposure itself, twice the exposure, and one full
frame period. All three end at the exposure end, so only past events feed
the representation. Counts are clipped at ``clip_count`` and scaled to
[0, 1]: channel 0 holds positive-polarity counts, channel 1 negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eventio import EventStream, FrameRecord, slice_window


@dataclass(frozen=True)
class EventFrame:
    """Normalized per-polarity count map over one time window."""

    data: np.ndarray  # (2, H, W) float32 in [0, 1]
    window: tuple[int, int]


@dataclass(frozen=True)
class RangeSpec:
    """The three window lengths hanging off one exposure-end anchor."""

    anchor: int
    lengths: tuple[int, int, int]

    def __post_init__(self):
        if not (0 < self.lengths[0] < self.lengths[1] < self.lengths[2]):
            raise ValueError(f"window lengths must strictly increase: {self.lengths}")

    @classmethod
    def for_frame(cls, frame: FrameRecord, frame_period_us: int) -> "RangeSpec":
        delta = frame.exposure_us
        if frame_period_us < 2 * delta:
            raise ValueError("frame period must be at least twice the exposure")
        return cls(frame.t_exp_end, (delta, 2 * delta, frame_period_us))

    def windows(self) -> list[tuple[int, int]]:
        return [(self.anchor - length, self.anchor) for length in self.lengths]


@dataclass(frozen=True)
class MultiRangeStack:
    """The three event frames aligned to one RGB frame."""

    frames: tuple[EventFrame, EventFrame, EventFrame]
    underflow: bool  # true when the longest window was clamped at t=0

    @property
    def data(self) -> np.ndarray:
        """(3, 2, H, W) view of the three range frames."""
        return np.stack([f.data for f in self.frames])


def polarity_count_maps(events: EventStream, height: int, width: int) -> np.ndarray:
    """Raw per-pixel per-polarity counts, shape (2, H, W) int64, no clipping."""
    if len(events) == 0:
        return np.zeros((2, height, width), dtype=np.int64)
    # channel 0 <- polarity 1 (brightness increase), channel 1 <- polarity 0
    chan = (1 - events.p.astype(np.int64))
    idx = chan * (height * width) + events.y.astype(np.int64) * width + events.x.astype(np.int64)
    return np.bincount(idx, minlength=2 * height * width).reshape(2, height, width)


def build_event_frame(
    events: EventStream,
    height: int,
    width: int,
    clip_count: int = 10,
    window: tuple[int, int] = (0, 0),
) -> EventFrame:
    """Count events per pixel and polarity, clip at ``clip_count``, scale to [0,1]."""
    if clip_count < 1:
        raise ValueError("clip_count must be >= 1")
    counts = polarity_count_maps(events, height, width)
    data = (np.minimum(counts, clip_count) / clip_count).astype(np.float32)
    return EventFrame(data, window)


def build_multirange(
    stream: EventStream,
    frame: FrameRecord,
    frame_period_us: int,
    clip_count: int = 10,
) -> MultiRangeStack:
    """Three nested backward windows ending at the exposure end.

    A first frame whose longest window would start before t=0 is clamped to
    zero and flagged via ``underflow`` rather than rejected.
    """
    spec = RangeSpec.for_frame(frame, frame_period_us)
    underflow = spec.anchor - spec.lengths[-1] < 0
    frames = []
    for t0, t1 in spec.windows():
        sub = slice_window(stream, max(t0, 0), t1)
        frames.append(build_event_frame(sub, stream.height, stream.width, clip_count, (max(t0, 0), t1)))
    return MultiRangeStack(tuple(frames), underflow)


def accumulate_mode(
    stream: EventStream,
    frame: FrameRecord,
    frame_period_us: int,
    clip_count: int = 10,
) -> np.ndarray:
    """Channel-concatenation of the three range frames: (6, H, W).

    The stacked frames feed the event stem directly, bypassing the
    multi-scale aggregation block.
    """
    stack = build_multirange(stream, frame, frame_period_us, clip_count)
    return np.concatenate([f.data for f in stack.frames], axis=0)
