"""Dual streams, fusion modes, projections, and the network assembly."""

import numpy as np
import pytest

from evmod.errors import ShapeMismatch
from evmod.model import (
    BasicBlock,
    ChannelProjection,
    FusionNetwork,
    paper_event_config,
    paper_rgb_config,
    resize_bilinear,
)
from evmod.nn import Tensor
from evmod.nn import functional as F


def rng_t(shape, seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape).astype(np.float32))


def make_net(fusion_mode="renet", event_mode="etma", k_frames=3, seed=0):
    return FusionNetwork(
        np.random.default_rng(seed), fusion_mode=fusion_mode, event_mode=event_mode,
        k_frames=k_frames,
    )


def desk_inputs(n=2, k=3, size=96, seed=1):
    rng = np.random.default_rng(seed)
    rgb = Tensor(rng.standard_normal((n, 3 * k, size, size)).astype(np.float32))
    events = tuple(Tensor(rng.random((n, 2, size, size)).astype(np.float32)) for _ in range(3))
    return rgb, events


class TestBasicBlock:
    def test_zero_everything_identity_shortcut(self):
        block = BasicBlock(4, 4, 1, np.random.default_rng(0))
        for name, p in block.named_parameters():
            if "gamma" not in name:
                p.data[:] = 0
        out = block(Tensor(np.zeros((1, 4, 6, 6), np.float32)))
        assert not out.data.any()

    def test_zeroed_residual_path_acts_as_relu_shortcut(self):
        block = BasicBlock(4, 4, 1, np.random.default_rng(1))
        block.conv2.weight.data[:] = 0
        block.bn2.beta.data[:] = 0
        block.eval()
        x = rng_t((1, 4, 6, 6), seed=2)
        out = block(x)
        assert np.array_equal(out.data, np.maximum(x.data, 0))

    def test_strided_block_shapes(self):
        block = BasicBlock(4, 8, 2, np.random.default_rng(2))
        out = block(rng_t((1, 4, 8, 8), seed=3))
        assert out.shape == (1, 8, 4, 4)


class TestStreams:
    def test_desk_stage_shapes(self):
        net = make_net()
        rgb, events = desk_inputs()
        feats = net.encode(rgb, events)
        assert [f.shape for f in feats["rgb"]] == [
            (2, 16, 48, 48), (2, 32, 24, 24), (2, 64, 12, 12), (2, 128, 6, 6)]
        assert [f.shape for f in feats["event"]] == [
            (2, 8, 48, 48), (2, 16, 24, 24), (2, 32, 12, 12), (2, 64, 6, 6)]
        assert [f.shape for f in feats["fused"]] == [
            (2, 32, 24, 24), (2, 64, 12, 12), (2, 128, 6, 6)]

    def test_stage_alignment_rgb_vs_projected_event(self):
        net = make_net()
        rgb, events = desk_inputs()
        feats = net.encode(rgb, events)
        for f_r, f_p in zip(feats["rgb"][1:], feats["projected"]):
            assert f_r.shape == f_p.shape

    def test_event_stream_smaller_than_rgb_stream(self):
        net = make_net()
        rgb_params = sum(p.size for n, p in net.named_parameters() if n.startswith("rgb_stream."))
        ev_params = sum(
            p.size
            for n, p in net.named_parameters()
            if n.startswith(("event_stream.", "etma."))
        )
        assert ev_params < rgb_params

    def test_paper_preset_constructs_with_discrepancy(self):
        rgb_cfg, ev_cfg = paper_rgb_config(), paper_event_config()
        net = FusionNetwork(
            np.random.default_rng(0), rgb_config=rgb_cfg, event_config=ev_cfg,
            fusion_mode="renet", event_mode="etma",
        )
        rgb_params = sum(p.size for n, p in net.named_parameters() if n.startswith("rgb_stream."))
        ev_params = sum(
            p.size for n, p in net.named_parameters() if n.startswith(("event_stream.", "etma."))
        )
        assert ev_params < rgb_params
        # bottleneck frame stream should be in the tens of millions of weights
        assert rgb_params > 10_000_000


class TestFusionModes:
    def test_rgb_only_never_evaluates_event_stream(self):
        net = make_net("rgb_only")
        rgb, _ = desk_inputs()
        out = net(rgb, None)
        assert net.rgb_stream.forward_count == 1
        assert net.event_stream.forward_count == 0
        assert out.heatmap.shape == (2, 1, 24, 24)

    def test_event_only_never_evaluates_rgb(self):
        net = make_net("event_only")
        _, events = desk_inputs()
        out = net(None, events)
        assert net.rgb_stream.forward_count == 0
        assert net.event_stream.forward_count == 1
        assert out.heatmap.shape == (2, 1, 24, 24)

    def test_mode_purity_zero_gradients_on_unused_stream(self):
        net = make_net("rgb_only")
        rgb, _ = desk_inputs()
        out = net(rgb, None)
        F.tsum(out.heatmap).backward()
        rgb_grads = [p.grad for n, p in net.named_parameters() if n.startswith("rgb_stream.")]
        assert any(g.any() for g in rgb_grads)
        unused = [
            p.grad
            for n, p in net.named_parameters()
            if n.startswith(("event_stream.", "etma.", "event_stem."))
        ]
        assert unused and all(not g.any() for g in unused)

        net = make_net("event_only")
        _, events = desk_inputs()
        out = net(None, events)
        F.tsum(out.heatmap).backward()
        unused = [p.grad for n, p in net.named_parameters() if n.startswith("rgb_stream.")]
        assert unused and all(not g.any() for g in unused)

    def test_early_fusion_input_channels(self):
        net = make_net("early", k_frames=1)
        assert net.rgb_stream.stem.conv.weight.shape[1] == 3 + 6  # single frame + stacked events
        rng = np.random.default_rng(5)
        rgb = Tensor(rng.standard_normal((1, 3, 96, 96)).astype(np.float32))
        stack = Tensor(rng.random((1, 6, 96, 96)).astype(np.float32))
        out = net(rgb, stack)
        assert out.heatmap.shape == (1, 1, 24, 24)

    def test_early_fusion_resizes_event_stack(self):
        net = make_net("early", k_frames=1)
        rng = np.random.default_rng(6)
        rgb = Tensor(rng.standard_normal((1, 3, 96, 96)).astype(np.float32))
        stack = Tensor(rng.random((1, 6, 48, 48)).astype(np.float32))
        out = net(rgb, stack)
        assert out.heatmap.shape == (1, 1, 24, 24)

    def test_late_fusion_streams_meet_at_head(self):
        net = make_net("late")
        assert net._fuse_names == []
        rgb, events = desk_inputs()
        feats = net.encode(rgb, events)
        assert feats["fused"] is None
        head_in = net.head_input(feats)
        assert head_in.shape == (2, 128, 6, 6)

    def test_concat_conv_mode(self):
        net = make_net("concat_conv")
        rgb, events = desk_inputs()
        out = net(rgb, events)
        assert out.heatmap.shape == (2, 1, 24, 24)

    def test_accumulate_and_single_event_stems(self):
        rng = np.random.default_rng(7)
        rgb, _ = desk_inputs()
        net_acc = make_net("renet", event_mode="accumulate")
        out = net_acc(rgb, Tensor(rng.random((2, 6, 96, 96)).astype(np.float32)))
        assert out.heatmap.shape == (2, 1, 24, 24)
        net_single = make_net("renet", event_mode="single")
        out = net_single(rgb, Tensor(rng.random((2, 2, 96, 96)).astype(np.float32)))
        assert out.heatmap.shape == (2, 1, 24, 24)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            make_net("fancy")
        with pytest.raises(ValueError):
            make_net("renet", event_mode="voxel")


class TestChannelProjection:
    def test_shape_rule(self):
        proj = ChannelProjection(64, 128, np.random.default_rng(0))
        out = proj(rng_t((1, 64, 6, 6), seed=8))
        assert out.shape == (1, 128, 6, 6)

    def test_identity_possible_when_channels_match(self):
        proj = ChannelProjection(8, 8, np.random.default_rng(1))
        proj.conv.weight.data[:] = 0
        for i in range(8):
            proj.conv.weight.data[i, i, 0, 0] = 1.0
        proj.conv.bias.data[:] = 0
        x = rng_t((1, 8, 4, 4), seed=9)
        assert np.array_equal(proj(x).data, x.data)

    def test_stage_mismatch_raises(self):
        net = make_net()
        rgb, _ = desk_inputs()
        bad = tuple(rng_t((2, 2, 64, 64), seed=10) for _ in range(3))
        with pytest.raises(ShapeMismatch):
            net.encode(rgb, bad)


class TestResizeBilinear:
    def test_identity(self):
        x = np.random.default_rng(0).random((2, 5, 5)).astype(np.float32)
        assert resize_bilinear(x, 5, 5) is x

    def test_constant_preserved(self):
        x = np.full((1, 4, 4), 3.25, np.float32)
        out = resize_bilinear(x, 8, 8)
        assert out.shape == (1, 8, 8)
        np.testing.assert_allclose(out, 3.25, rtol=1e-6)

    def test_linear_ramp_preserved(self):
        ramp = np.linspace(0, 1, 8, dtype=np.float64)
        x = np.broadcast_to(ramp, (8, 8)).copy()
        out = resize_bilinear(x, 4, 4)
        assert out.shape == (4, 4)
        assert np.all(np.diff(out, axis=1) > 0)
