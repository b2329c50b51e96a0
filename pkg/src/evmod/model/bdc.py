"""Bi-directionally calibrated fusion of the frame and event features.

One stage runs, in order: 1x1 activation convs per modality; mutual
enhancement (elementwise product added back to each input); cross-modal
channel gating (each modality scaled by the other's channel-attention
weights, with residual); cross-modal spatial gating (same pattern with
spatial-attention maps); and an attentive merge of the product and the
elementwise max through a 3x3 conv. Stages after the first also fold in the
previous stage's output through a stride-2 conv.

Channel/spatial attention follow the usual squeeze design: a shared
bottleneck MLP over average- and max-pooled descriptors for channels, a wide
conv over the channel-mean/max maps for space, both squashed by a sigmoid.
Either gate can be disabled, which bypasses that calibration entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..nn import Conv2d, Linear, Module, Tensor
from ..nn import functional as F


class ChannelAttention(Module):
    """Per-channel sigmoid gate from pooled descriptors, shared MLP."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, hidden, rng, bias=False)
        self.fc2 = Linear(hidden, channels, rng, bias=False)

    def _mlp(self, pooled: Tensor) -> Tensor:
        n, c = pooled.shape[0], pooled.shape[1]
        flat = F.reshape(pooled, (n, c))
        return self.fc2(F.relu(self.fc1(flat)))

    def forward(self, x: Tensor) -> Tensor:
        n, c = x.shape[0], x.shape[1]
        gates = F.sigmoid(F.add(self._mlp(F.global_avg_pool(x)), self._mlp(F.global_max_pool(x))))
        return F.reshape(gates, (n, c, 1, 1))


class SpatialAttention(Module):
    """Per-location sigmoid gate from the channel mean and max maps."""

    def __init__(self, rng: np.random.Generator, kernel: int = 7):
        super().__init__()
        self.conv = Conv2d(2, 1, kernel, rng, stride=1, pad=kernel // 2, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        maps = F.concat([F.channel_mean_map(x), F.channel_max_map(x)], axis=1)
        return F.sigmoid(self.conv(maps))


@dataclass
class BdcParts:
    """Per-stage intermediates exposed for testing."""

    activated_r: Tensor
    activated_e: Tensor
    enhanced_r: Tensor
    enhanced_e: Tensor
    channel_cal_r: Tensor
    channel_cal_e: Tensor
    spatial_cal_r: Tensor
    spatial_cal_e: Tensor
    merged: Tensor


class BdcStage(Module):
    """One fusion stage at a fixed channel width.

    ``prev_channels`` wires in the hierarchical path from the previous
    stage, which sits at twice the spatial resolution and feeds in through a
    stride-2 conv. The first fusion stage passes None and skips it.
    """

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        prev_channels: int | None = None,
        ca_enabled: bool = True,
        sa_enabled: bool = True,
        ca_reduction: int = 4,
        sa_kernel: int = 7,
    ):
        super().__init__()
        self.channels = channels
        self.ca_enabled = ca_enabled
        self.sa_enabled = sa_enabled
        self.act_r = Conv2d(channels, channels, 1, rng)
        self.act_e = Conv2d(channels, channels, 1, rng)
        if ca_enabled:
            self.ca_r = ChannelAttention(channels, rng, ca_reduction)
            self.ca_e = ChannelAttention(channels, rng, ca_reduction)
        if sa_enabled:
            self.sa_r = SpatialAttention(rng, sa_kernel)
            self.sa_e = SpatialAttention(rng, sa_kernel)
        self.merge = Conv2d(2 * channels, channels, 3, rng, stride=1, pad=1)
        if prev_channels is not None:
            self.hier = Conv2d(prev_channels, channels, 3, rng, stride=2, pad=1)
        else:
            self.hier = None

    def activate(self, f_rgb: Tensor, f_event: Tensor) -> tuple[Tensor, Tensor]:
        if f_rgb.shape != f_event.shape:
            raise ShapeMismatch(f"activate: {f_rgb.shape} != {f_event.shape}")
        return self.act_r(f_rgb), self.act_e(f_event)

    @staticmethod
    def mutual_enhance(f_r: Tensor, f_e: Tensor) -> tuple[Tensor, Tensor]:
        """Product-plus-residual coupling: each side keeps itself and gains
        what both sides agree on. A silent event side leaves the frame side
        untouched and stays silent."""
        if f_r.shape != f_e.shape:
            raise ShapeMismatch(f"mutual_enhance: {f_r.shape} != {f_e.shape}")
        prod = F.mul(f_r, f_e)
        return F.add(prod, f_r), F.add(prod, f_e)

    def cross_calibrate_channel(self, fp_r: Tensor, fp_e: Tensor) -> tuple[Tensor, Tensor]:
        """Each modality is rescaled by the OTHER modality's channel gates."""
        if not self.ca_enabled:
            return fp_r, fp_e
        gate_from_e = self.ca_e(fp_e)
        gate_from_r = self.ca_r(fp_r)
        return (
            F.add(F.mul(gate_from_e, fp_r), fp_r),
            F.add(F.mul(gate_from_r, fp_e), fp_e),
        )

    def cross_calibrate_spatial(self, fc_r: Tensor, fc_e: Tensor) -> tuple[Tensor, Tensor]:
        """Same cross-over pattern with spatial gate maps."""
        if not self.sa_enabled:
            return fc_r, fc_e
        map_from_e = self.sa_e(fc_e)
        map_from_r = self.sa_r(fc_r)
        return (
            F.add(F.mul(map_from_e, fc_r), fc_r),
            F.add(F.mul(map_from_r, fc_e), fc_e),
        )

    def fuse(self, fe_r: Tensor, fe_e: Tensor, prev_fused: Tensor | None) -> Tensor:
        if fe_r.shape != fe_e.shape:
            raise ShapeMismatch(f"fuse: {fe_r.shape} != {fe_e.shape}")
        merged = self.merge(F.concat([F.mul(fe_r, fe_e), F.eltwise_max(fe_r, fe_e)], axis=1))
        if prev_fused is not None:
            if self.hier is None:
                raise ShapeMismatch("fuse: stage built without a hierarchical path")
            merged = F.add(merged, self.hier(prev_fused))
        return merged

    def forward(
        self,
        f_rgb: Tensor,
        f_event: Tensor,
        prev_fused: Tensor | None = None,
        return_parts: bool = False,
    ):
        f_r, f_e = self.activate(f_rgb, f_event)
        fp_r, fp_e = self.mutual_enhance(f_r, f_e)
        fc_r, fc_e = self.cross_calibrate_channel(fp_r, fp_e)
        fs_r, fs_e = self.cross_calibrate_spatial(fc_r, fc_e)
        merged = self.fuse(fs_r, fs_e, prev_fused)
        if return_parts:
            return merged, BdcParts(f_r, f_e, fp_r, fp_e, fc_r, fc_e, fs_r, fs_e, merged)
        return merged


class ConcatConvStage(Module):
    """Attention-free baseline fusion: concat + 1x1 conv, same hierarchical path."""

    def __init__(self, channels: int, rng: np.random.Generator, prev_channels: int | None = None):
        super().__init__()
        self.channels = channels
        self.merge = Conv2d(2 * channels, channels, 1, rng)
        if prev_channels is not None:
            self.hier = Conv2d(prev_channels, channels, 3, rng, stride=2, pad=1)
        else:
            self.hier = None

    def forward(self, f_rgb: Tensor, f_event: Tensor, prev_fused: Tensor | None = None):
        if f_rgb.shape != f_event.shape:
            raise ShapeMismatch(f"concat_conv: {f_rgb.shape} != {f_event.shape}")
        merged = self.merge(F.concat([f_rgb, f_event], axis=1))
        if prev_fused is not None:
            merged = F.add(merged, self.hier(prev_fused))
        return merged
