"""Network components: aggregation stem, encoders, fusion, detection head."""

from .bdc import BdcParts, BdcStage, ChannelAttention, ConcatConvStage, SpatialAttention
from .detector import (
    Detection,
    DetectionHead,
    HeadOutput,
    LossBreakdown,
    TargetMaps,
    compute_loss,
    decode,
    encode_targets,
)
from .encoder import (
    EVENT_MODES,
    FUSION_MODES,
    BasicBlock,
    Bottleneck,
    ChannelProjection,
    ResidualStage,
    ResidualStream,
    StreamConfig,
    desk_event_config,
    desk_rgb_config,
    paper_event_config,
    paper_rgb_config,
)
from .etma import Etma, EtmaConfig, EtmaParts
from .network import FusionNetwork, resize_bilinear

__all__ = [
    "Etma",
    "EtmaConfig",
    "EtmaParts",
    "BdcStage",
    "BdcParts",
    "ChannelAttention",
    "SpatialAttention",
    "ConcatConvStage",
    "BasicBlock",
    "Bottleneck",
    "ResidualStage",
    "ResidualStream",
    "ChannelProjection",
    "StreamConfig",
    "desk_rgb_config",
    "desk_event_config",
    "paper_rgb_config",
    "paper_event_config",
    "FUSION_MODES",
    "EVENT_MODES",
    "FusionNetwork",
    "resize_bilinear",
    "DetectionHead",
    "HeadOutput",
    "Detection",
    "LossBreakdown",
    "TargetMaps",
    "encode_targets",
    "compute_loss",
    "decode",
]
