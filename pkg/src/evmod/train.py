"""Training and evaluation loops.

Everything derives from the config seed through named SeedSequence spawns,
so a fixed config reproduces the loss trajectory, checkpoints, and metrics
bit for bit. The manifest embeds the consumed config verbatim plus its
hash, the per-epoch log, and the checkpoint paths.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .data import Dataset, assemble_batch, load_split
from .errors import DataError
from .metrics import MapReport, frame_map
from .model import FusionNetwork
from .model.detector import compute_loss, decode
from .nn import Adam, LrSchedule, load_checkpoint, no_grad, save_checkpoint


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_map: float


@dataclass
class RunManifest:
    config_text: str
    config_hash: str
    epochs: list[EpochLog] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    final_map: float = 0.0
    runtime_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_hash": self.config_hash,
                "config": self.config_text,
                "epochs": [vars(e) for e in self.epochs],
                "checkpoints": self.checkpoints,
                "final_map": self.final_map,
                "runtime_s": self.runtime_s,
            },
            indent=2,
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def predict(model: FusionNetwork, dataset: Dataset, cfg: ModelConfig):
    """Decode detections for every sample; returns {sample index -> detections}."""
    model.eval()
    dets: dict[int, list] = {}
    ids = list(range(len(dataset.samples)))
    bs = cfg.eval_batch_size
    with no_grad():
        for start in range(0, len(ids), bs):
            chunk = [dataset.samples[i] for i in ids[start : start + bs]]
            batch = assemble_batch(dataset, chunk, cfg, rng=None)
            out = model(batch.rgb, batch.events)
            decoded = decode(
                out,
                (cfg.input_size, cfg.input_size),
                top_k=cfg.decode_top_k,
                threshold=cfg.decode_threshold,
            )
            for offset, det in enumerate(decoded):
                dets[start + offset] = det
    model.train()
    return dets


def evaluate_model(model: FusionNetwork, dataset: Dataset, cfg: ModelConfig,
                   iou_threshold: float | None = None) -> MapReport:
    dets = predict(model, dataset, cfg)
    gt = {i: dataset.sequences[si].boxes[fi] for i, (si, fi) in enumerate(dataset.samples)}
    return frame_map(dets, gt, iou_threshold if iou_threshold is not None else cfg.map_iou)


def train(cfg: ModelConfig, data_dir: str | Path, out_dir: str | Path) -> RunManifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_set = load_split(data_dir, "train", cfg)
    val_set = load_split(data_dir, "val", cfg)
    if len(train_set) == 0:
        raise DataError(f"{data_dir}: train split has no usable samples")

    model = cfg.build_model()
    optim = Adam(model.parameters(), lr=cfg.lr)
    schedule = LrSchedule(cfg.lr, cfg.lr_decay_epochs, cfg.lr_decay_factor)
    manifest = RunManifest(cfg.to_text(), cfg.config_hash())

    t0 = time.perf_counter()
    order_root = np.random.SeedSequence([cfg.seed, 0x0_DA7A])
    aug_root = np.random.SeedSequence([cfg.seed, 0x0_A060])
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        lr = schedule.lr_at(epoch)
        order = np.random.default_rng(order_root.spawn(1)[0]).permutation(n)
        aug_rng = np.random.default_rng(aug_root.spawn(1)[0])
        losses = []
        model.train()
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            ids = [train_set.samples[i] for i in order[start : start + cfg.batch_size]]
            batch = assemble_batch(train_set, ids, cfg, rng=aug_rng if cfg.aug_enabled else None)
            optim.zero_grad()
            head_out = model(batch.rgb, batch.events)
            loss = compute_loss(head_out, batch.targets)
            loss.total.backward()
            optim.step(lr)
            losses.append(float(loss.total.data))
        val_report = evaluate_model(model, val_set, cfg)
        ckpt = out / f"checkpoint_epoch{epoch:03d}.renw"
        save_checkpoint(model, ckpt)
        manifest.checkpoints.append(str(ckpt))
        manifest.epochs.append(
            EpochLog(epoch, lr, float(np.mean(losses)) if losses else float("nan"), val_report.mean_ap)
        )
        manifest.final_map = val_report.mean_ap
    manifest.runtime_s = time.perf_counter() - t0
    manifest.write(out / "manifest.json")
    return manifest


def evaluate_checkpoint(
    cfg: ModelConfig,
    checkpoint: str | Path,
    data_dir: str | Path,
    split: str = "val",
    iou_threshold: float | None = None,
) -> MapReport:
    dataset = load_split(data_dir, split, cfg)
    model = cfg.build_model()
    load_checkpoint(model, checkpoint)
    return evaluate_model(model, dataset, cfg, iou_threshold)
