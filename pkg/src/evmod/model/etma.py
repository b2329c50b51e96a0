"""Temporal multi-scale aggregation of the three event ranges.

One shared projection block (conv+BN+relu) lifts every range frame into the
same latent space; longer ranges then get coarser max pooling, everything is
upsampled back to the finest pooled resolution, concatenated, and fused by a
single convolution. Max pooling keeps the strongest boundary responses while
absorbing the spatial smear that longer windows introduce around moving
objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..nn import Conv2d, ConvBnRelu, Module, Tensor
from ..nn import functional as F


@dataclass(frozen=True)
class EtmaConfig:
    in_channels: int = 2
    channels: int = 8  # latent width, also the output width
    pool_kernels: tuple[int, int, int] = (2, 4, 8)

    def __post_init__(self):
        k1, k2, k3 = self.pool_kernels
        if not k1 < k2 < k3:
            raise ValueError(f"pool kernels must strictly increase: {self.pool_kernels}")
        if k2 % k1 or k3 % k1:
            raise ValueError("coarser kernels must be integer multiples of the finest")


@dataclass
class EtmaParts:
    """Intermediates exposed for testing."""

    projected: tuple[Tensor, Tensor, Tensor]
    pooled: tuple[Tensor, Tensor, Tensor]
    upsampled: tuple[Tensor, Tensor, Tensor]
    concatenated: Tensor


class Etma(Module):
    """Shared-projection multi-range aggregation; output at 1/k1 resolution."""

    def __init__(self, config: EtmaConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.project_block = ConvBnRelu(config.in_channels, config.channels, 3, rng, stride=1, pad=1)
        self.fuse = Conv2d(3 * config.channels, config.channels, 3, rng, stride=1, pad=1)

    def project(self, frame: Tensor) -> Tensor:
        """Lift one range frame into the shared latent space.

        Every range goes through this same block: there is exactly one set
        of projection weights.
        """
        if frame.ndim != 4 or frame.shape[1] != self.config.in_channels:
            raise ShapeMismatch(f"project: expected (N,{self.config.in_channels},H,W), got {frame.shape}")
        return self.project_block(frame)

    def pool_scale(self, projected: Tensor, range_index: int) -> Tensor:
        """Range-matched max pooling: longer range -> coarser kernel."""
        return F.maxpool2d(projected, self.config.pool_kernels[range_index])

    def forward(self, e1: Tensor, e2: Tensor, e3: Tensor, return_parts: bool = False):
        k1, k2, k3 = self.config.pool_kernels
        proj = (self.project(e1), self.project(e2), self.project(e3))
        pooled = tuple(self.pool_scale(p, i) for i, p in enumerate(proj))
        up = (pooled[0], F.upsample_nearest(pooled[1], k2 // k1), F.upsample_nearest(pooled[2], k3 // k1))
        cat = F.concat(list(up), axis=1)
        out = self.fuse(cat)
        if return_parts:
            return out, EtmaParts(proj, pooled, up, cat)
        return out
