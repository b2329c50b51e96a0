"""Multi-range aggregation stem: shared projection, pooling, fusion."""

import numpy as np
import pytest

from evmod.errors import ShapeMismatch
from evmod.model.etma import Etma, EtmaConfig
from evmod.nn import Tensor
from evmod.nn import functional as F


def make_etma(seed=0, channels=8):
    return Etma(EtmaConfig(channels=channels), np.random.default_rng(seed))


def identity_bn(etma):
    """Eval-mode BN with unit statistics: the projection reduces to conv+relu."""
    etma.eval()
    bn = etma.project_block.bn
    bn.set_buffer("running_mean", np.zeros_like(bn.running_mean))
    bn.set_buffer("running_var", np.ones_like(bn.running_var) - bn.eps)


class TestConfig:
    def test_kernels_must_increase(self):
        with pytest.raises(ValueError):
            EtmaConfig(pool_kernels=(4, 2, 8))

    def test_kernels_must_divide(self):
        with pytest.raises(ValueError):
            EtmaConfig(pool_kernels=(2, 5, 8))


class TestProject:
    def test_zero_frame_zero_output_under_identity_bn(self):
        etma = make_etma()
        identity_bn(etma)
        etma.project_block.bn.beta.data[:] = 0.0
        out = etma.project(Tensor(np.zeros((1, 2, 16, 16), np.float32)))
        assert not out.data.any()

    def test_weight_sharing_same_output_for_any_range(self):
        etma = make_etma()
        etma.eval()
        rng = np.random.default_rng(1)
        frame = Tensor(rng.random((1, 2, 16, 16)).astype(np.float32))
        outs = [etma.project(frame).data for _ in range(3)]
        assert np.array_equal(outs[0], outs[1]) and np.array_equal(outs[1], outs[2])
        # exactly one projection parameter set exists: conv weight + bn gamma/beta
        proj_params = [n for n, _ in etma.named_parameters() if n.startswith("project_block.")]
        assert len(proj_params) == 3
        all_params = [n for n, _ in etma.named_parameters()]
        assert len(all_params) == 5  # projection (3) + fuse conv weight/bias (2)

    def test_output_shape_defaults(self):
        etma = make_etma()
        out = etma.project(Tensor(np.zeros((1, 2, 96, 96), np.float32)))
        assert out.shape == (1, 8, 96, 96)

    def test_wrong_channels_rejected(self):
        etma = make_etma()
        with pytest.raises(ShapeMismatch):
            etma.project(Tensor(np.zeros((1, 3, 16, 16), np.float32)))


class TestPoolScale:
    def test_shapes_per_range(self):
        etma = make_etma()
        x = Tensor(np.zeros((1, 8, 96, 96), np.float32))
        assert etma.pool_scale(x, 0).shape == (1, 8, 48, 48)
        assert etma.pool_scale(x, 1).shape == (1, 8, 24, 24)
        assert etma.pool_scale(x, 2).shape == (1, 8, 12, 12)

    def test_constant_map_preserved(self):
        etma = make_etma()
        x = Tensor(np.full((1, 8, 16, 16), 2.5, np.float32))
        for i in range(3):
            assert np.all(etma.pool_scale(x, i).data == 2.5)

    def test_peak_survives_any_scale(self):
        etma = make_etma()
        rng = np.random.default_rng(2)
        x = np.zeros((1, 8, 32, 32), np.float32)
        peaks = rng.integers(0, 32, size=(8, 2))
        for c, (py, px) in enumerate(peaks):
            x[0, c, py, px] = 7.0
        for i in range(3):
            pooled = etma.pool_scale(Tensor(x), i).data
            assert np.allclose(pooled.max(axis=(2, 3)), 7.0)


class TestAggregate:
    def test_zero_stack_zero_output(self):
        etma = make_etma()
        identity_bn(etma)
        etma.project_block.bn.beta.data[:] = 0.0
        etma.fuse.bias.data[:] = 0.0
        zeros = Tensor(np.zeros((1, 2, 32, 32), np.float32))
        out = etma(zeros, zeros, zeros)
        assert not out.data.any()

    def test_output_shape(self):
        etma = make_etma()
        e = [Tensor(np.zeros((2, 2, 96, 96), np.float32)) for _ in range(3)]
        out = etma(*e)
        assert out.shape == (2, 8, 48, 48)

    def test_matches_hand_composed_pipeline(self):
        etma = make_etma(seed=5)
        etma.eval()
        rng = np.random.default_rng(3)
        e = [Tensor(rng.random((1, 2, 32, 32)).astype(np.float32)) for _ in range(3)]
        out = etma(*e).data

        proj = [etma.project_block(x) for x in e]
        pooled = [F.maxpool2d(p, k) for p, k in zip(proj, (2, 4, 8))]
        up = [pooled[0], F.upsample_nearest(pooled[1], 2), F.upsample_nearest(pooled[2], 4)]
        expect = etma.fuse(F.concat(up, axis=1)).data
        assert np.array_equal(out, expect)

    def test_longer_range_contributes_wider_support(self):
        # positive projection + event-count inputs: latent support mirrors
        # event support, so the longest range feeds the fuse conv the widest
        # nonzero footprint
        from evmod.representation import build_multirange
        from evmod.scenegen import SceneConfig, SceneObject, frame_records, simulate_events

        mover = SceneObject(x0=8, y0=12, w=8, h=8, vx=2.0, vy=1.0, intensity=0.95, moving=True)
        cfg = SceneConfig(noise_std=0.0, objects=(mover,), n_frames=12, width=64, height=64)
        stream = simulate_events(cfg)
        stack = build_multirange(stream, frame_records(cfg)[8], cfg.frame_period_us)

        etma = make_etma(channels=4)
        identity_bn(etma)
        etma.project_block.bn.beta.data[:] = 0.0
        etma.project_block.conv.weight.data[:] = np.abs(etma.project_block.conv.weight.data)
        _, parts = etma(
            *(Tensor(f.data[None]) for f in stack.frames), return_parts=True
        )
        support = [(u.data[0].sum(axis=0) > 0).sum() for u in parts.upsampled]
        assert support[2] >= support[0]

    def test_gradients_flow_through_all_ranges(self):
        etma = make_etma()
        rng = np.random.default_rng(4)
        e = [Tensor(rng.random((1, 2, 16, 16)).astype(np.float32), requires_grad=True) for _ in range(3)]
        out = etma(*e)
        F.tsum(out).backward()
        for t in e:
            assert t.grad.any()
