"""Detection head, target encoding, loss, and decoding."""

import numpy as np
import pytest

from evmod.errors import ShapeMismatch
from evmod.model.detector import (
    DetectionHead,
    HeadOutput,
    compute_loss,
    decode,
    encode_targets,
)
from evmod.nn import Adam, Tensor


def head_output(heat, size, offset):
    return HeadOutput(Tensor(heat.astype(np.float32)), Tensor(size.astype(np.float32)),
                      Tensor(offset.astype(np.float32)))


class TestHeadForward:
    def test_grid_is_quarter_resolution(self):
        head = DetectionHead(128, np.random.default_rng(0))
        fused = Tensor(np.random.default_rng(1).standard_normal((2, 128, 6, 6)).astype(np.float32))
        out = head(fused)
        assert out.heatmap.shape == (2, 1, 24, 24)  # 96/4 from the stride-16 map
        assert out.size.shape == (2, 2, 24, 24)
        assert out.offset.shape == (2, 2, 24, 24)

    def test_heatmap_and_offset_ranges(self):
        head = DetectionHead(32, np.random.default_rng(2))
        fused = Tensor(np.random.default_rng(3).standard_normal((1, 32, 6, 6)).astype(np.float32))
        out = head(fused)
        assert (out.heatmap.data > 0).all() and (out.heatmap.data < 1).all()
        assert (out.offset.data >= 0).all() and (out.offset.data < 1).all()


class TestEncodeTargets:
    def test_no_boxes(self):
        t = encode_targets([], 1, 24, 24)
        assert not t.heatmap.any() and not t.mask.any() and t.n_centers == 0

    def test_exact_cell_center_peak(self):
        # center (16, 8): lands exactly on grid point (4, 2) at stride 4
        t = encode_targets([(0, (10.0, 4.0, 22.0, 12.0))], 1, 24, 24)
        assert t.heatmap[0, 2, 4] == 1.0
        assert t.offset[0, 2, 4] == 0.0 and t.offset[1, 2, 4] == 0.0
        assert t.size[0, 2, 4] == 12.0 and t.size[1, 2, 4] == 8.0
        assert t.mask[2, 4] and t.n_centers == 1

    def test_two_distant_boxes_compose_by_max(self):
        a = [(0, (4.0, 4.0, 20.0, 20.0))]
        b = [(0, (60.0, 60.0, 88.0, 88.0))]
        ta = encode_targets(a, 1, 24, 24)
        tb = encode_targets(b, 1, 24, 24)
        tab = encode_targets(a + b, 1, 24, 24)
        assert np.array_equal(tab.heatmap, np.maximum(ta.heatmap, tb.heatmap))
        assert tab.n_centers == 2

    def test_tiny_box_sigma_clamped(self):
        t = encode_targets([(0, (40.0, 40.0, 43.0, 43.0))], 1, 24, 24)
        assert t.n_centers == 1
        assert t.heatmap.max() == 1.0


class TestComputeLoss:
    def grid_from_boxes(self, boxes, gh=24, gw=24):
        return encode_targets(boxes, 1, gh, gw)

    def test_perfect_prediction_near_zero(self):
        t = self.grid_from_boxes([(0, (10.0, 4.0, 22.0, 12.0))])
        heat = np.where(t.heatmap == 1.0, 1 - 1e-6, 1e-6)[None]
        size = np.broadcast_to(t.size, (1, *t.size.shape)).copy()
        offset = np.broadcast_to(t.offset, (1, *t.offset.shape)).copy()
        lb = compute_loss(head_output(heat, size, offset), [t])
        assert float(lb.size.data) == 0.0 and float(lb.offset.data) == 0.0
        assert float(lb.total.data) <= 1e-4

    def test_uniform_half_heatmap_closed_form(self):
        # one peak; prediction 0.5 everywhere: the focal terms reduce to
        # -(0.25 log 0.5) for the peak and -(sum (1-y)^4) 0.25 log 0.5 else
        t = self.grid_from_boxes([(0, (40.0, 40.0, 56.0, 56.0))])
        heat = np.full((1, 1, 24, 24), 0.5, np.float64)
        lb = compute_loss(head_output(heat, np.zeros((1, 2, 24, 24)), np.zeros((1, 2, 24, 24))), [t])
        y = t.heatmap.astype(np.float64)
        neg = (1 - y) ** 4 * (y != 1.0)
        expect = -(0.25 * np.log(0.5) + neg.sum() * 0.25 * np.log(0.5))
        assert abs(float(lb.heat.data) - expect) < 1e-5

    def test_empty_frame_zero_size_offset(self):
        t = self.grid_from_boxes([])
        rng = np.random.default_rng(0)
        lb = compute_loss(
            head_output(rng.uniform(0.1, 0.9, (1, 1, 24, 24)),
                        rng.standard_normal((1, 2, 24, 24)),
                        rng.uniform(0, 1, (1, 2, 24, 24))),
            [t],
        )
        assert float(lb.size.data) == 0.0 and float(lb.offset.data) == 0.0

    def test_total_composition(self):
        t = self.grid_from_boxes([(0, (8.0, 8.0, 40.0, 32.0))])
        rng = np.random.default_rng(1)
        lb = compute_loss(
            head_output(rng.uniform(0.1, 0.9, (1, 1, 24, 24)),
                        rng.standard_normal((1, 2, 24, 24)),
                        rng.uniform(0, 1, (1, 2, 24, 24))),
            [t],
        )
        total = float(lb.heat.data) + 0.1 * float(lb.size.data) + 1.0 * float(lb.offset.data)
        assert abs(float(lb.total.data) - total) < 1e-5

    def test_loss_decreases_under_adam(self):
        # sanity: from random init, one step on a fixed batch reduces the loss
        failures = 0
        for seed in range(10):
            head = DetectionHead(16, np.random.default_rng(seed), trunk_channels=(16, 8))
            fused = Tensor(np.random.default_rng(100 + seed).standard_normal((2, 16, 6, 6)).astype(np.float32))
            targets = [
                encode_targets([(0, (10.0, 10.0, 40.0, 36.0))], 1, 24, 24),
                encode_targets([(0, (50.0, 30.0, 80.0, 70.0))], 1, 24, 24),
            ]
            opt = Adam(head.parameters(), lr=5e-3)
            losses = []
            for _ in range(2):
                opt.zero_grad()
                lb = compute_loss(head(fused), targets)
                lb.total.backward()
                opt.step()
                losses.append(float(lb.total.data))
            if not losses[1] < losses[0]:
                failures += 1
        assert failures <= 1

    def test_batch_size_mismatch(self):
        t = self.grid_from_boxes([])
        with pytest.raises(ShapeMismatch):
            compute_loss(head_output(np.full((2, 1, 24, 24), 0.5),
                                     np.zeros((2, 2, 24, 24)), np.zeros((2, 2, 24, 24))), [t])


class TestDecode:
    def test_empty_heatmap(self):
        out = head_output(np.zeros((1, 1, 24, 24)), np.zeros((1, 2, 24, 24)), np.zeros((1, 2, 24, 24)))
        assert decode(out, (96, 96)) == [[]]

    def test_hand_arithmetic_single_peak(self):
        heat = np.zeros((1, 1, 24, 24))
        size = np.zeros((1, 2, 24, 24))
        offset = np.zeros((1, 2, 24, 24))
        heat[0, 0, 5, 7] = 0.9
        offset[0, :, 5, 7] = 0.5
        size[0, 0, 5, 7] = 12.0  # w
        size[0, 1, 5, 7] = 8.0  # h
        dets = decode(head_output(heat, size, offset), (96, 96))[0]
        assert len(dets) == 1
        d = dets[0]
        assert d.score == pytest.approx(0.9)
        # center x = (7 + 0.5) * 4 = 30, y = (5 + 0.5) * 4 = 22
        assert d.box == pytest.approx((24.0, 18.0, 36.0, 26.0))

    def test_threshold_filters(self):
        heat = np.zeros((1, 1, 24, 24))
        heat[0, 0, 3, 3] = 0.29
        out = head_output(heat, np.ones((1, 2, 24, 24)), np.zeros((1, 2, 24, 24)))
        assert decode(out, (96, 96), threshold=0.3) == [[]]
        assert len(decode(out, (96, 96), threshold=0.2)[0]) == 1

    def test_adjacent_equal_peaks_both_kept(self):
        heat = np.zeros((1, 1, 24, 24))
        heat[0, 0, 5, 7] = 0.8
        heat[0, 0, 5, 8] = 0.8
        out = head_output(heat, np.full((1, 2, 24, 24), 8.0), np.zeros((1, 2, 24, 24)))
        dets = decode(out, (96, 96))[0]
        assert len(dets) == 2

    def test_top_k_limits(self):
        rng = np.random.default_rng(2)
        heat = np.zeros((1, 1, 24, 24))
        heat[0, 0, ::3, ::3] = rng.uniform(0.5, 1.0, (8, 8))
        out = head_output(heat, np.full((1, 2, 24, 24), 8.0), np.zeros((1, 2, 24, 24)))
        dets = decode(out, (96, 96), top_k=5)[0]
        assert len(dets) == 5
        scores = [d.score for d in dets]
        assert scores == sorted(scores, reverse=True)

    def test_boxes_clamped_to_image(self):
        heat = np.zeros((1, 1, 24, 24))
        heat[0, 0, 0, 0] = 0.9
        size = np.full((1, 2, 24, 24), 50.0)
        out = head_output(heat, size, np.zeros((1, 2, 24, 24)))
        d = decode(out, (96, 96))[0][0]
        assert d.box[0] >= 0 and d.box[1] >= 0

    def test_roundtrip_targets_to_boxes(self):
        # encode -> perfect head output -> decode recovers boxes within the
        # stride-4 quantization bound
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            boxes = []
            centers = []
            for _ in range(n):
                for _attempt in range(50):
                    w, h = rng.uniform(8, 30, 2)
                    cx, cy = rng.uniform(16, 80, 2)
                    if all(abs(cx - ox) > 12 or abs(cy - oy) > 12 for ox, oy in centers):
                        centers.append((cx, cy))
                        boxes.append((0, (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)))
                        break
            t = encode_targets(boxes, 1, 24, 24)
            heat = np.where(t.heatmap == 1.0, 0.99, 0.0)[None]
            dets = decode(
                head_output(heat, t.size[None], t.offset[None]), (96, 96), threshold=0.3
            )[0]
            assert len(dets) == len(boxes)
            got = sorted(d.box for d in dets)
            expect = sorted(b for _, b in boxes)
            for g, e in zip(got, expect):
                assert max(abs(a - b) for a, b in zip(g, e)) <= 2.0
