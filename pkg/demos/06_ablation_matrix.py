"""The six-row ablation matrix at demo scale.

Walks the fusion design axes the way the evaluation protocol does: the
attention-free concat-conv baseline, adding multi-range aggregation, each
attention direction separately, swapping aggregation for input-side
accumulation, and the full configuration. All rows share the seed and data.

At this miniature scale (few epochs, few hundred frames) the absolute
numbers are noisy; the acceptance suite runs the trend checks at a larger
protocol with majority voting over seeds.

Usage: python demos/06_ablation_matrix.py [workdir]
"""

import sys
from pathlib import Path

from evmod.ablate import VARIANTS, format_table, run_ablation
from evmod.config import ModelConfig
from evmod.scenegen import generate_dataset

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out/ablation")

print("variant matrix:")
for i, v in enumerate(VARIANTS, 1):
    flags = " ".join(k for k, on in v.flags.items() if on)
    print(f"  {i}. {v.name:<10s} fusion={v.fusion_mode:<12s} events={v.event_mode:<10s} [{flags}]")

print("\ngenerating data and training all six variants (several minutes)...")
generate_dataset(work / "data", n_train=6, n_val=2, frames_per_seq=20, seed=13)
base = ModelConfig(epochs=4, seed=0)
rows = run_ablation(base, work / "data", work / "runs")
print()
print(format_table(rows))
print(f"full table and per-variant configs in {work / 'runs'}/ablation.json")
