"""The algebraic identities of the fusion stage, demonstrated numerically.

Four exact properties fall straight out of the construction:

1. A silent event side passes the frame features through the mutual
   enhancement untouched (and stays silent itself).
2. Zero-weight attention MLPs/convs gate everything at sigmoid(0) = 0.5,
   so each calibration step becomes an exact 1.5x scaling.
3. The aggregation stem equals its hand-composed pipeline
   (project -> pool -> upsample -> concat -> fuse), with one shared
   projection for all three ranges.
4. With both attentions disabled the stage is bit-identical to the reduced
   enhance+merge graph.

Usage: python demos/04_fusion_identities.py
"""

import numpy as np

from evmod.model.bdc import BdcStage
from evmod.model.etma import Etma, EtmaConfig
from evmod.nn import Tensor
from evmod.nn import functional as F

rng = np.random.default_rng(7)

# 1. zero-event identity
f_r = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
zero = Tensor(np.zeros((1, 8, 6, 6), np.float32))
fp_r, fp_e = BdcStage.mutual_enhance(f_r, zero)
print("1. silent event side:",
      "frame side unchanged:", bool(np.array_equal(fp_r.data, f_r.data)),
      "| event side still zero:", bool(not fp_e.data.any()))

# 2. half-gates from zeroed attention weights
stage = BdcStage(8, np.random.default_rng(0))
for mod in (stage.ca_r, stage.ca_e):
    mod.fc1.weight.data[:] = 0
    mod.fc2.weight.data[:] = 0
for mod in (stage.sa_r, stage.sa_e):
    mod.conv.weight.data[:] = 0
x = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
y = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
cx, cy = stage.cross_calibrate_channel(x, y)
sx, sy = stage.cross_calibrate_spatial(x, y)
print("2. zero-weight gates:  channel calibration == 1.5x:",
      bool(np.allclose(cx.data, 1.5 * x.data, rtol=1e-6)),
      "| spatial == 1.5x:", bool(np.allclose(sx.data, 1.5 * x.data, rtol=1e-6)))

# 3. aggregation stem == hand-wired pipeline, shared projection
etma = Etma(EtmaConfig(), np.random.default_rng(1))
etma.eval()
frames = [Tensor(rng.random((1, 2, 32, 32)).astype(np.float32)) for _ in range(3)]
whole = etma(*frames).data
proj = [etma.project_block(f) for f in frames]
pooled = [F.maxpool2d(p, k) for p, k in zip(proj, (2, 4, 8))]
up = [pooled[0], F.upsample_nearest(pooled[1], 2), F.upsample_nearest(pooled[2], 4)]
by_hand = etma.fuse(F.concat(up, axis=1)).data
same_proj = np.array_equal(etma.project(frames[0]).data, etma.project_block(frames[0]).data)
print("3. aggregation stem:   composition exact:", bool(np.array_equal(whole, by_hand)),
      "| one shared projection:", same_proj)

# 4. disabled attention reduces the stage to enhance + merge
reduced = BdcStage(8, np.random.default_rng(2), ca_enabled=False, sa_enabled=False)
a, b = reduced.activate(x, y)
c, d = BdcStage.mutual_enhance(a, b)
expect = reduced.merge(F.concat([F.mul(c, d), F.eltwise_max(c, d)], axis=1))
print("4. attention off:      bit-identical to reduced graph:",
      bool(np.array_equal(reduced(x, y).data, expect.data)))
