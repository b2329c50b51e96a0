"""Center-point detection head, training targets, loss, and box decoding.

The head upsamples the final fused feature twice (stride 16 to stride 4),
then three 3x3 branches predict a per-class center heatmap (sigmoid), box
sizes in input pixels, and sub-cell center offsets in [0, 1) (sigmoid).

Targets splat a Gaussian bump per box onto the class channel, peak 1.0 at
the box's integer grid cell; size and offset regression apply only at those
center cells. The loss is the penalty-reduced focal on the heatmap plus
weighted L1 on the masked size/offset maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch
from ..nn import Conv2d, ConvBnRelu, Module, Tensor
from ..nn import functional as F

STRIDE = 4
HEAT_CLAMP = 1e-6
SIZE_WEIGHT = 0.1
OFFSET_WEIGHT = 1.0


@dataclass
class HeadOutput:
    heatmap: Tensor  # (N, n_classes, H/4, W/4), sigmoid
    size: Tensor  # (N, 2, H/4, W/4), (w, h) at input scale
    offset: Tensor  # (N, 2, H/4, W/4), (dx, dy) in [0, 1), sigmoid


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: tuple[float, float, float, float]  # x1, y1, x2, y2 at input scale
    score: float


@dataclass
class LossBreakdown:
    total: Tensor
    heat: Tensor
    size: Tensor
    offset: Tensor


@dataclass
class TargetMaps:
    heatmap: np.ndarray  # (n_classes, gh, gw)
    size: np.ndarray  # (2, gh, gw)
    offset: np.ndarray  # (2, gh, gw)
    mask: np.ndarray  # (gh, gw) bool, True at box centers
    n_centers: int


class DetectionHead(Module):
    def __init__(
        self,
        in_channels: int,
        rng: np.random.Generator,
        n_classes: int = 1,
        trunk_channels: tuple[int, int] = (64, 32),
    ):
        super().__init__()
        c1, c2 = trunk_channels
        self.up1 = ConvBnRelu(in_channels, c1, 3, rng, stride=1, pad=1)
        self.up2 = ConvBnRelu(c1, c2, 3, rng, stride=1, pad=1)
        self.heat_conv = Conv2d(c2, n_classes, 3, rng, stride=1, pad=1)
        # bias the heatmap branch toward the background so the focal loss
        # starts from a sane operating point
        self.heat_conv.bias.data[:] = -2.19
        self.size_conv = Conv2d(c2, 2, 3, rng, stride=1, pad=1)
        self.offset_conv = Conv2d(c2, 2, 3, rng, stride=1, pad=1)

    def forward(self, fused: Tensor) -> HeadOutput:
        x = self.up1(F.upsample_nearest(fused, 2))
        x = self.up2(F.upsample_nearest(x, 2))
        return HeadOutput(
            heatmap=F.sigmoid(self.heat_conv(x)),
            size=self.size_conv(x),
            offset=F.sigmoid(self.offset_conv(x)),
        )


# -- targets --------------------------------------------------------------------


def encode_targets(
    boxes: list[tuple[int, tuple[float, float, float, float]]],
    n_classes: int,
    grid_h: int,
    grid_w: int,
) -> TargetMaps:
    """Build heat/size/offset targets from (class_id, box) pairs at input scale."""
    heat = np.zeros((n_classes, grid_h, grid_w), dtype=np.float32)
    size = np.zeros((2, grid_h, grid_w), dtype=np.float32)
    offset = np.zeros((2, grid_h, grid_w), dtype=np.float32)
    mask = np.zeros((grid_h, grid_w), dtype=bool)
    n_centers = 0
    for class_id, (x1, y1, x2, y2) in boxes:
        w, h = x2 - x1, y2 - y1
        if w <= 0 or h <= 0:
            continue
        cx, cy = (x1 + x2) / 2.0 / STRIDE, (y1 + y2) / 2.0 / STRIDE
        gx, gy = int(cx), int(cy)
        if not (0 <= gx < grid_w and 0 <= gy < grid_h):
            continue
        sigma = max(1.0, min(w, h) / (STRIDE * 6.0))
        radius = int(np.ceil(3 * sigma))
        y_lo, y_hi = max(0, gy - radius), min(grid_h, gy + radius + 1)
        x_lo, x_hi = max(0, gx - radius), min(grid_w, gx + radius + 1)
        yy, xx = np.mgrid[y_lo:y_hi, x_lo:x_hi]
        bump = np.exp(-((yy - gy) ** 2 + (xx - gx) ** 2) / (2.0 * sigma * sigma))
        patch = heat[class_id, y_lo:y_hi, x_lo:x_hi]
        np.maximum(patch, bump.astype(np.float32), out=patch)
        heat[class_id, gy, gx] = 1.0
        size[0, gy, gx] = w
        size[1, gy, gx] = h
        offset[0, gy, gx] = cx - gx
        offset[1, gy, gx] = cy - gy
        if not mask[gy, gx]:
            mask[gy, gx] = True
            n_centers += 1
    return TargetMaps(heat, size, offset, mask, n_centers)


# -- loss ------------------------------------------------------------------------


def compute_loss(head_out: HeadOutput, targets: list[TargetMaps]) -> LossBreakdown:
    """Batch loss: penalty-reduced focal heatmap term plus masked L1 terms.

    total = heat + 0.1 * size + 1.0 * offset, normalized by the number of
    centers (minimum 1).
    """
    n = head_out.heatmap.shape[0]
    if len(targets) != n:
        raise ShapeMismatch(f"loss: {len(targets)} targets for batch of {n}")
    heat_t = np.stack([t.heatmap for t in targets])
    size_t = np.stack([t.size for t in targets])
    off_t = np.stack([t.offset for t in targets])
    mask = np.stack([t.mask for t in targets])
    n_centers = max(1, sum(t.n_centers for t in targets))

    dtype = head_out.heatmap.dtype
    pos = Tensor((heat_t == 1.0).astype(dtype))
    neg_w = Tensor(((1.0 - heat_t) ** 4 * (heat_t != 1.0)).astype(dtype))

    yhat = F.clip(head_out.heatmap, HEAT_CLAMP, 1.0 - HEAT_CLAMP)
    one_m = F.scale(yhat, -1.0) + Tensor(np.ones((), dtype=dtype))
    pos_term = F.tsum(F.mul(pos, F.mul(F.mul(one_m, one_m), F.log(yhat))))
    neg_term = F.tsum(F.mul(neg_w, F.mul(F.mul(yhat, yhat), F.log(one_m))))
    heat_loss = F.scale(F.add(pos_term, neg_term), -1.0 / n_centers)

    mask4 = Tensor(np.broadcast_to(mask[:, None], size_t.shape).astype(dtype).copy())
    size_loss = F.scale(
        F.tsum(F.mul(mask4, F.absolute(F.sub(head_out.size, Tensor(size_t.astype(dtype)))))),
        1.0 / n_centers,
    )
    off_loss = F.scale(
        F.tsum(F.mul(mask4, F.absolute(F.sub(head_out.offset, Tensor(off_t.astype(dtype)))))),
        1.0 / n_centers,
    )
    total = F.add(F.add(heat_loss, F.scale(size_loss, SIZE_WEIGHT)), F.scale(off_loss, OFFSET_WEIGHT))
    if not np.isfinite(total.data):
        raise NonFiniteLoss(f"loss diverged: heat={heat_loss.data} size={size_loss.data} offset={off_loss.data}")
    return LossBreakdown(total, heat_loss, size_loss, off_loss)


# -- decoding ----------------------------------------------------------------------


def _window_max3(a: np.ndarray) -> np.ndarray:
    """3x3 neighborhood max over the last two axes."""
    pad = np.pad(a, ((0, 0), (1, 1), (1, 1)), constant_values=-np.inf)
    h, w = a.shape[-2:]
    out = np.full_like(a, -np.inf)
    for dy in range(3):
        for dx in range(3):
            np.maximum(out, pad[:, dy : dy + h, dx : dx + w], out=out)
    return out


def decode(
    head_out: HeadOutput,
    image_size: tuple[int, int],
    top_k: int = 50,
    threshold: float = 0.3,
) -> list[list[Detection]]:
    """Peak-pick the heatmap into boxes, one detection list per batch item.

    A cell survives when it equals its 3x3 neighborhood max (ties kept on
    both sides) and clears the score threshold; the best ``top_k`` survive.
    Boxes are center +- size/2 at input scale, clamped to the image;
    predicted sizes floor at one pixel.
    """
    img_w, img_h = image_size
    heat = head_out.heatmap.data
    size = head_out.size.data
    offset = head_out.offset.data
    n, n_classes, gh, gw = heat.shape
    results: list[list[Detection]] = []
    for i in range(n):
        keep = (heat[i] >= _window_max3(heat[i])) & (heat[i] >= threshold)
        cls_idx, ys, xs = np.nonzero(keep)
        scores = heat[i, cls_idx, ys, xs]
        if scores.size > top_k:
            sel = np.argsort(-scores, kind="stable")[:top_k]
            cls_idx, ys, xs, scores = cls_idx[sel], ys[sel], xs[sel], scores[sel]
        order = np.argsort(-scores, kind="stable")
        dets = []
        for j in order:
            y, x = int(ys[j]), int(xs[j])
            cx = (x + float(offset[i, 0, y, x])) * STRIDE
            cy = (y + float(offset[i, 1, y, x])) * STRIDE
            w = max(1.0, float(size[i, 0, y, x]))
            h = max(1.0, float(size[i, 1, y, x]))
            x1 = max(0.0, min(cx - w / 2.0, img_w))
            y1 = max(0.0, min(cy - h / 2.0, img_h))
            x2 = max(0.0, min(cx + w / 2.0, img_w))
            y2 = max(0.0, min(cy + h / 2.0, img_h))
            if x2 > x1 and y2 > y1:
                dets.append(Detection(int(cls_idx[j]), (x1, y1, x2, y2), float(scores[j])))
        results.append(dets)
    return results
