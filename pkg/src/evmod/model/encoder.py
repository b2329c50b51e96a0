"""Dual residual encoders of deliberately unequal capacity.

The frame stream is deep and wide; the event stream is shallow and narrow,
reflecting its auxiliary role. Both streams halve resolution per stage so
that stage-i features can be fused after a 1x1 channel projection of the
event side.

``desk`` is the small preset everything here trains at; ``paper`` is a
full-scale hook (bottleneck frame stream, basic event stream) kept
shape-compatible but far too heavy for the test harness to train.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import BatchNorm2d, Conv2d, ConvBnRelu, Module, Tensor
from ..nn import functional as F

FUSION_MODES = ("rgb_only", "event_only", "early", "late", "concat_conv", "renet")
EVENT_MODES = ("etma", "accumulate", "single")


@dataclass(frozen=True)
class StreamConfig:
    stem_channels: int
    stage_channels: tuple[int, ...]
    blocks_per_stage: tuple[int, ...]
    bottleneck: bool = False

    def __post_init__(self):
        if len(self.stage_channels) != len(self.blocks_per_stage):
            raise ValueError("stage_channels and blocks_per_stage must align")

    @property
    def n_stages(self) -> int:
        return len(self.stage_channels)


def desk_rgb_config() -> StreamConfig:
    return StreamConfig(16, (16, 32, 64, 128), (2, 2, 2, 2))


def desk_event_config() -> StreamConfig:
    return StreamConfig(8, (8, 16, 32, 64), (1, 1, 1, 1))


def paper_rgb_config() -> StreamConfig:
    # ResNet-101-like: bottleneck blocks, (3, 4, 23, 3)
    return StreamConfig(64, (256, 512, 1024, 2048), (3, 4, 23, 3), bottleneck=True)


def paper_event_config() -> StreamConfig:
    # ResNet-18-like: basic blocks, (2, 2, 2, 2)
    return StreamConfig(64, (64, 128, 256, 512), (2, 2, 2, 2))


class BasicBlock(Module):
    """Two 3x3 convs with a residual shortcut (1x1 strided when shapes change)."""

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng, stride=stride, pad=1, bias=False)
        self.bn1 = BatchNorm2d(out_channels)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng, stride=1, pad=1, bias=False)
        self.bn2 = BatchNorm2d(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.short_conv = Conv2d(in_channels, out_channels, 1, rng, stride=stride, bias=False)
            self.short_bn = BatchNorm2d(out_channels)
        else:
            self.short_conv = None

    def forward(self, x: Tensor) -> Tensor:
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        short = self.short_bn(self.short_conv(x)) if self.short_conv is not None else x
        return F.relu(F.add(y, short))


class Bottleneck(Module):
    """1x1 reduce, 3x3, 1x1 expand (x4) with residual shortcut."""

    EXPANSION = 4

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        super().__init__()
        mid = out_channels // self.EXPANSION
        self.conv1 = Conv2d(in_channels, mid, 1, rng, bias=False)
        self.bn1 = BatchNorm2d(mid)
        self.conv2 = Conv2d(mid, mid, 3, rng, stride=stride, pad=1, bias=False)
        self.bn2 = BatchNorm2d(mid)
        self.conv3 = Conv2d(mid, out_channels, 1, rng, bias=False)
        self.bn3 = BatchNorm2d(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.short_conv = Conv2d(in_channels, out_channels, 1, rng, stride=stride, bias=False)
            self.short_bn = BatchNorm2d(out_channels)
        else:
            self.short_conv = None

    def forward(self, x: Tensor) -> Tensor:
        y = F.relu(self.bn1(self.conv1(x)))
        y = F.relu(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        short = self.short_bn(self.short_conv(x)) if self.short_conv is not None else x
        return F.relu(F.add(y, short))


class ResidualStage(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        n_blocks: int,
        stride: int,
        rng: np.random.Generator,
        bottleneck: bool = False,
    ):
        super().__init__()
        block_cls = Bottleneck if bottleneck else BasicBlock
        self._names = []
        for i in range(n_blocks):
            block = block_cls(in_channels if i == 0 else out_channels, out_channels,
                              stride if i == 0 else 1, rng)
            name = f"block{i}"
            setattr(self, name, block)
            self._names.append(name)

    def forward(self, x: Tensor) -> Tensor:
        for name in self._names:
            x = getattr(self, name)(x)
        return x


class ResidualStream(Module):
    """Stem plus a stack of residual stages; returns every stage's features.

    ``forward_count`` tallies evaluations so tests can assert a stream was
    never touched in single-modality modes.
    """

    def __init__(
        self,
        in_channels: int,
        config: StreamConfig,
        rng: np.random.Generator,
        with_stem: bool = True,
    ):
        super().__init__()
        self.config = config
        self.forward_count = 0
        if with_stem:
            self.stem = ConvBnRelu(in_channels, config.stem_channels, 3, rng, stride=2, pad=1)
        else:
            self.stem = None
        self._names = []
        prev = config.stem_channels
        for i, (ch, nb) in enumerate(zip(config.stage_channels, config.blocks_per_stage)):
            stage = ResidualStage(prev, ch, nb, 1 if i == 0 else 2, rng, config.bottleneck)
            name = f"stage{i + 1}"
            setattr(self, name, stage)
            self._names.append(name)
            prev = ch

    def forward(self, x: Tensor) -> list[Tensor]:
        object.__setattr__(self, "forward_count", self.forward_count + 1)
        if self.stem is not None:
            x = self.stem(x)
        feats = []
        for name in self._names:
            x = getattr(self, name)(x)
            feats.append(x)
        return feats


class ChannelProjection(Module):
    """1x1 conv matching the event stage width to the frame stage width."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)
