"""Training-time augmentation.

Photometric jitter touches only the RGB frames. One geometric transform per
sample (scale about the image center, then translation, implicitly cropped
and zero-padded to the input size) applies identically to the RGB frames,
every event frame, and the boxes. Event frames are counts, not photometry,
so they are never brightness/contrast-jittered.

Resampling is nearest-neighbor, so identity parameters reproduce the input
bit for bit and integer translations shift pixels and boxes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentParams:
    brightness: float = 0.0
    contrast: float = 1.0
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls()


def sample_params(cfg, rng: np.random.Generator) -> AugmentParams:
    """Draw jitter magnitudes from the config's augmentation block."""
    limit = cfg.aug_translate * cfg.input_size
    return AugmentParams(
        brightness=float(rng.uniform(-cfg.aug_brightness, cfg.aug_brightness)),
        contrast=float(rng.uniform(1.0 - cfg.aug_contrast, 1.0 + cfg.aug_contrast)),
        scale=float(rng.uniform(cfg.aug_scale_min, cfg.aug_scale_max)),
        tx=float(np.round(rng.uniform(-limit, limit))),
        ty=float(np.round(rng.uniform(-limit, limit))),
    )


def photometric(rgb: np.ndarray, params: AugmentParams) -> np.ndarray:
    if params.brightness == 0.0 and params.contrast == 1.0:
        return rgb
    return np.clip(rgb * params.contrast + params.brightness, 0.0, 1.0).astype(rgb.dtype)


def warp_nearest(planes: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Apply the geometric transform to (..., H, W) planes, zero fill outside."""
    if params.scale == 1.0 and params.tx == 0.0 and params.ty == 0.0:
        return planes
    h, w = planes.shape[-2:]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    xo = np.arange(w, dtype=np.float64)
    yo = np.arange(h, dtype=np.float64)
    xi = np.round((xo - cx - params.tx) / params.scale + cx).astype(np.int64)
    yi = np.round((yo - cy - params.ty) / params.scale + cy).astype(np.int64)
    valid_x = (xi >= 0) & (xi < w)
    valid_y = (yi >= 0) & (yi < h)
    xi_c = np.clip(xi, 0, w - 1)
    yi_c = np.clip(yi, 0, h - 1)
    out = planes[..., yi_c[:, None], xi_c[None, :]].copy()
    out[..., ~valid_y, :] = 0
    out[..., :, ~valid_x] = 0
    return out


def transform_boxes(
    boxes: list[tuple[int, tuple[float, float, float, float]]],
    params: AugmentParams,
    width: int,
    height: int,
    min_side: float = 2.0,
) -> list[tuple[int, tuple[float, float, float, float]]]:
    """Same affine map as warp_nearest; clips and drops degenerate boxes."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    out = []
    for class_id, (x1, y1, x2, y2) in boxes:
        nx1 = params.scale * (x1 - cx) + cx + params.tx
        nx2 = params.scale * (x2 - cx) + cx + params.tx
        ny1 = params.scale * (y1 - cy) + cy + params.ty
        ny2 = params.scale * (y2 - cy) + cy + params.ty
        nx1, nx2 = max(0.0, min(nx1, width)), max(0.0, min(nx2, width))
        ny1, ny2 = max(0.0, min(ny1, height)), max(0.0, min(ny2, height))
        if nx2 - nx1 >= min_side and ny2 - ny1 >= min_side:
            out.append((class_id, (nx1, ny1, nx2, ny2)))
    return out


def augment_sample(
    rgb: np.ndarray,
    event_planes: np.ndarray | None,
    boxes: list[tuple[int, tuple[float, float, float, float]]],
    params: AugmentParams,
) -> tuple[np.ndarray, np.ndarray | None, list]:
    """Apply (photometric on RGB) + (shared geometric on everything)."""
    h, w = rgb.shape[-2:]
    rgb_out = warp_nearest(photometric(rgb, params), params)
    events_out = warp_nearest(event_planes, params) if event_planes is not None else None
    boxes_out = transform_boxes(boxes, params, w, h)
    return rgb_out, events_out, boxes_out
