"""Verify analytic gradients against central finite differences.

Every operator and composite block in the network has a reverse-mode
gradient; this runs the 64-bit check suite at a few seeds and then shows a
single check in detail, including the per-tensor error report.

Usage: python demos/03_gradient_checks.py [seeds]
"""

import sys

import numpy as np

from evmod.gradsuite import run_gradient_suite
from evmod.model.bdc import BdcStage
from evmod.nn import Tensor, grad_check
from evmod.nn import functional as F

seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3

print(f"running the full operator/block suite at {seeds} seeds...\n")
ok = run_gradient_suite(seeds=seeds, verbose=True)
assert ok, "gradient suite failed"

print("\nsingle check in detail: one calibrated fusion stage (64-bit)")
rng = np.random.default_rng(0)
stage = BdcStage(4, rng, prev_channels=4).astype(np.float64)
for name, p in stage.named_parameters():
    p.name = name
f_r = Tensor(rng.standard_normal((1, 4, 6, 6)), requires_grad=True, name="frame_feature")
f_e = Tensor(rng.standard_normal((1, 4, 6, 6)), requires_grad=True, name="event_feature")
prev = Tensor(rng.standard_normal((1, 4, 12, 12)), requires_grad=True, name="previous_stage")


def loss():
    out = stage(f_r, f_e, prev)
    return F.scale(F.tmean(F.mul(out, F.sigmoid(out))), 0.01)


report = grad_check(loss, [f_r, f_e, prev] + stage.parameters(), tol=1e-4)
print(report)
