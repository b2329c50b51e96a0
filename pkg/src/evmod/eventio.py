"""Bit-exact event stream, timeline, annotation, and image I/O.

Event file format ``EVT1`` (all little-endian):

    magic   b"EVT1"
    u16     sensor width
    u16     sensor height
    u64     record count
    then per record, 16 bytes:
    u64     timestamp, microseconds since sequence start
    u16     x (column)
    u16     y (row)
    u8      polarity: 1 = brightness increase, 0 = decrease
    3x u8   zero padding

Fixed-stride records keep timestamps binary-searchable. Timestamps must be
non-decreasing and coordinates in-bounds; readers reject violations naming
the first offending record.

Frame timelines and box annotations are plain CSV; images are binary PGM
(P5) / PPM (P6), 8-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    InvalidBox,
    NonMonotonicTimestamp,
    OutOfBoundsEvent,
    ParseError,
    TruncatedFile,
)

EVT_MAGIC = b"EVT1"
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1", (3,))]
)
N_CLASSES = 8  # annotation schema allows class ids 0..7


@dataclass(frozen=True)
class Event:
    """One asynchronous brightness-change record."""

    t: int
    x: int
    y: int
    polarity: int  # 1 = increase, 0 = decrease


class EventStream:
    """A time-ordered event collection over a fixed sensor size.

    Stored column-wise (separate t/x/y/p arrays) so windowing and counting
    stay vectorized. Read-only after construction.
    """

    def __init__(self, width: int, height: int, t=None, x=None, y=None, p=None):
        self.width = int(width)
        self.height = int(height)
        self.t = np.asarray(t if t is not None else [], dtype=np.uint64)
        self.x = np.asarray(x if x is not None else [], dtype=np.uint16)
        self.y = np.asarray(y if y is not None else [], dtype=np.uint16)
        self.p = np.asarray(p if p is not None else [], dtype=np.uint8)

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EventStream)
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def validate(self) -> None:
        if len(self) == 0:
            return
        dec = np.nonzero(self.t[1:] < self.t[:-1])[0]
        if dec.size:
            raise NonMonotonicTimestamp(int(dec[0]) + 1)
        oob = np.nonzero((self.x >= self.width) | (self.y >= self.height) | (self.p > 1))[0]
        if oob.size:
            raise OutOfBoundsEvent(int(oob[0]))


@dataclass(frozen=True)
class FrameRecord:
    """One exposure interval of the frame camera, anchored by its end."""

    frame_id: int
    t_exp_start: int
    t_exp_end: int
    image_path: str

    def __post_init__(self):
        if self.t_exp_start >= self.t_exp_end:
            raise ValueError(f"frame {self.frame_id}: empty exposure interval")

    @property
    def exposure_us(self) -> int:
        return self.t_exp_end - self.t_exp_start


@dataclass(frozen=True)
class AnnotationBox:
    """Axis-aligned box with exclusive lower-right corner (x2 > x1, y2 > y1)."""

    frame_id: int
    class_id: int
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


# -- event streams ---------------------------------------------------------------


def write_events(stream: EventStream, path: str | Path) -> None:
    stream.validate()
    recs = np.zeros(len(stream), dtype=RECORD_DTYPE)
    recs["t"] = stream.t
    recs["x"] = stream.x
    recs["y"] = stream.y
    recs["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(EVT_MAGIC, stream.width, stream.height, len(stream)))
        fh.write(recs.tobytes())


def read_events(path: str | Path) -> EventStream:
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise TruncatedFile(f"{path}: {len(blob)} bytes is smaller than the header")
    magic, width, height, count = HEADER.unpack_from(blob)
    if magic != EVT_MAGIC:
        raise BadMagic(f"{path}: expected {EVT_MAGIC!r}, found {magic!r}")
    need = HEADER.size + count * RECORD_DTYPE.itemsize
    if len(blob) < need:
        have = (len(blob) - HEADER.size) // RECORD_DTYPE.itemsize
        raise TruncatedFile(f"{path}: header promises {count} records, file holds {have}")
    recs = np.frombuffer(blob, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    stream = EventStream(width, height, recs["t"].copy(), recs["x"].copy(),
                         recs["y"].copy(), recs["p"].copy())
    stream.validate()
    return stream


def slice_window(stream: EventStream, t_start: int, t_end: int) -> EventStream:
    """Events with t_start <= t < t_end, order preserved.

    Two binary searches over the sorted timestamps: O(log n + k).
    """
    if t_start > t_end:
        raise ValueError(f"empty-ordered window: {t_start} > {t_end}")
    lo = int(np.searchsorted(stream.t, np.uint64(max(t_start, 0)), side="left"))
    hi = int(np.searchsorted(stream.t, np.uint64(max(t_end, 0)), side="left"))
    return EventStream(
        stream.width, stream.height,
        stream.t[lo:hi], stream.x[lo:hi], stream.y[lo:hi], stream.p[lo:hi],
    )


# -- frame timeline ----------------------------------------------------------------

TIMELINE_HEADER = "frame_id,t_exp_start_us,t_exp_end_us,image_path"


def write_timeline(frames: list[FrameRecord], path: str | Path) -> None:
    lines = [TIMELINE_HEADER]
    for f in frames:
        lines.append(f"{f.frame_id},{f.t_exp_start},{f.t_exp_end},{f.image_path}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_timeline(path: str | Path) -> list[FrameRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != TIMELINE_HEADER:
        raise ParseError(1, f"expected header '{TIMELINE_HEADER}'")
    frames: list[FrameRecord] = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(ln, f"expected 4 fields, found {len(parts)}")
        try:
            rec = FrameRecord(int(parts[0]), int(parts[1]), int(parts[2]), parts[3])
        except ValueError as exc:
            raise ParseError(ln, str(exc)) from exc
        frames.append(rec)
    for i, (a, b) in enumerate(zip(frames, frames[1:])):
        if a.t_exp_end >= b.t_exp_end:
            raise ParseError(i + 3, "frame records must be strictly ordered by exposure end")
    return frames


# -- annotations --------------------------------------------------------------------

ANNOTATION_HEADER = "frame_id,class_id,x1,y1,x2,y2"


def write_annotations(boxes: list[AnnotationBox], path: str | Path) -> None:
    lines = [ANNOTATION_HEADER]
    for b in boxes:
        lines.append(f"{b.frame_id},{b.class_id},{b.x1:g},{b.y1:g},{b.x2:g},{b.y2:g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_annotations(path: str | Path) -> dict[int, list[AnnotationBox]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != ANNOTATION_HEADER:
        raise ParseError(1, f"expected header '{ANNOTATION_HEADER}'")
    by_frame: dict[int, list[AnnotationBox]] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(ln, f"expected 6 fields, found {len(parts)}")
        try:
            frame_id = int(parts[0])
            class_id = int(parts[1])
            x1, y1, x2, y2 = (float(v) for v in parts[2:])
        except ValueError as exc:
            raise ParseError(ln, str(exc)) from exc
        if not 0 <= class_id < N_CLASSES:
            raise InvalidBox(ln, f"class {class_id} outside [0, {N_CLASSES - 1}]")
        if x2 <= x1 or y2 <= y1:
            raise InvalidBox(ln, f"degenerate box ({x1},{y1},{x2},{y2})")
        by_frame.setdefault(frame_id, []).append(
            AnnotationBox(frame_id, class_id, x1, y1, x2, y2)
        )
    return by_frame


# -- PGM / PPM images ---------------------------------------------------------------


def write_pgm(image: np.ndarray, path: str | Path) -> None:
    """8-bit binary PGM from a (H, W) uint8 array."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError(f"PGM wants (H, W), got {img.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def write_ppm(image: np.ndarray, path: str | Path) -> None:
    """8-bit binary PPM from a (H, W, 3) uint8 array."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM wants (H, W, 3), got {img.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def _read_netpbm(path: str | Path, magic: bytes, channels: int) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:2] != magic:
        raise BadMagic(f"{path}: expected {magic!r}, found {blob[:2]!r}")
    # header: magic, width, height, maxval as whitespace/comment-separated tokens
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit images supported, maxval {maxval}")
    need = w * h * channels
    data = np.frombuffer(blob, dtype=np.uint8, count=need, offset=pos)
    if data.size < need:
        raise TruncatedFile(f"{path}: expected {need} pixel bytes")
    shape = (h, w) if channels == 1 else (h, w, channels)
    return data.reshape(shape).copy()


def read_pgm(path: str | Path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)


def read_ppm(path: str | Path) -> np.ndarray:
    return _read_netpbm(path, b"P6", 3)
