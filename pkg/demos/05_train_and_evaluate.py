"""Train a small detector end to end and inspect what it learned.

Generates a compact mixed-illumination dataset, trains the full
calibrated-fusion configuration for a few epochs, evaluates frame mAP on
the held-out day and night splits, and dumps detections for one sequence.

This is the fast narrative version of the pipeline; the acceptance suite
runs the full 30-epoch protocol. Expect a few minutes of wall time.

Usage: python demos/05_train_and_evaluate.py [workdir]
"""

import sys
from pathlib import Path

from evmod.config import ModelConfig
from evmod.data import Dataset, load_sequence
from evmod.metrics import write_detections
from evmod.model.detector import decode
from evmod.nn import load_checkpoint, no_grad
from evmod.scenegen import generate_dataset
from evmod.train import evaluate_checkpoint, train
from evmod.data import assemble_batch

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out/train")

print("generating a small dataset (8 train / 2 val sequences)...")
written = generate_dataset(work / "data", n_train=8, n_val=2, frames_per_seq=24, seed=4)
print(f"  frames per split: {written}")

cfg = ModelConfig(epochs=6, seed=0)
print(f"\ntraining fusion_mode={cfg.fusion_mode}, event_mode={cfg.event_mode}, "
      f"{cfg.epochs} epochs...")
manifest = train(cfg, work / "data", work / "run")
for e in manifest.epochs:
    print(f"  epoch {e.epoch}: lr {e.lr:g}  loss {e.train_loss:7.4f}  val mAP {e.val_map:.4f}")
print(f"  ({manifest.runtime_s:.0f}s)")

ckpt = manifest.checkpoints[-1]
day = evaluate_checkpoint(cfg, ckpt, work / "data", "val")
night = evaluate_checkpoint(cfg, ckpt, work / "data", "val_night")
print(f"\nheld-out frame mAP@0.5: day {day.mean_ap:.4f}, night {night.mean_ap:.4f}")

# dump raw detections for the first validation sequence
model = cfg.build_model()
load_checkpoint(model, ckpt)
model.eval()
seq = load_sequence(work / "data" / "val" / "seq_000", cfg.clip_count)
dataset = Dataset([seq], [(0, i) for i in range(cfg.k_frames - 1, len(seq.images))],
                  cfg.clip_count, cfg.k_frames)
dets = {}
with no_grad():
    for start in range(0, len(dataset.samples), cfg.eval_batch_size):
        ids = dataset.samples[start : start + cfg.eval_batch_size]
        batch = assemble_batch(dataset, ids, cfg, rng=None)
        for (_, fi), d in zip(ids, decode(model(batch.rgb, batch.events),
                                          (cfg.input_size, cfg.input_size))):
            dets[fi] = d
write_detections(dets, work / "detections.csv")
n = sum(len(v) for v in dets.values())
print(f"wrote {n} detections to {work / 'detections.csv'}")
