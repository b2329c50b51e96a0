"""The six-variant ablation matrix.

Rows walk from the attention-free concat-conv baseline up to the full
calibrated fusion, toggling the multi-scale event aggregation, channel and
spatial attention, and the input-side accumulation alternative:

    1. baseline      concat_conv fusion, single-range events
    2. +tma          concat_conv fusion, aggregated multi-range events
    3. +tma+ca       calibrated fusion, channel attention only
    4. +tma+sa       calibrated fusion, spatial attention only
    5. ca+sa+acc     calibrated fusion, input-side accumulation instead
    6. full          calibrated fusion, aggregated multi-range events

All variants share the data and the seed; only the listed flags differ.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ModelConfig
from .train import RunManifest, train


@dataclass(frozen=True)
class Variant:
    name: str
    fusion_mode: str
    event_mode: str
    ca_enabled: bool
    sa_enabled: bool

    def apply(self, base: ModelConfig) -> ModelConfig:
        return replace(
            base,
            fusion_mode=self.fusion_mode,
            event_mode=self.event_mode,
            ca_enabled=self.ca_enabled,
            sa_enabled=self.sa_enabled,
        )

    @property
    def flags(self) -> dict[str, bool]:
        return {
            "R-E": True,
            "CA": self.ca_enabled and self.fusion_mode == "renet",
            "SA": self.sa_enabled and self.fusion_mode == "renet",
            "TMA": self.event_mode == "etma",
            "Acc": self.event_mode == "accumulate",
        }


VARIANTS: tuple[Variant, ...] = (
    Variant("baseline", "concat_conv", "single", False, False),
    Variant("+tma", "concat_conv", "etma", False, False),
    Variant("+tma+ca", "renet", "etma", True, False),
    Variant("+tma+sa", "renet", "etma", False, True),
    Variant("ca+sa+acc", "renet", "accumulate", True, True),
    Variant("full", "renet", "etma", True, True),
)


@dataclass
class AblationRow:
    name: str
    flags: dict[str, bool]
    config_text: str
    val_map: float


def run_ablation(base: ModelConfig, data_dir: str | Path, out_dir: str | Path) -> list[AblationRow]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant in VARIANTS:
        cfg = variant.apply(base)
        manifest: RunManifest = train(cfg, data_dir, out / variant.name.replace("+", "_"))
        rows.append(AblationRow(variant.name, variant.flags, cfg.to_text(), manifest.final_map))
    (out / "ablation.json").write_text(
        json.dumps(
            [{"name": r.name, "flags": r.flags, "map": r.val_map, "config": r.config_text} for r in rows],
            indent=2,
        )
    )
    (out / "ablation.txt").write_text(format_table(rows))
    return rows


def format_table(rows: list[AblationRow]) -> str:
    cols = ["R-E", "CA", "SA", "TMA", "Acc"]
    lines = [f"{'#':>2} {'variant':<10} " + " ".join(f"{c:>4}" for c in cols) + f" {'mAP@0.5':>8}"]
    for i, r in enumerate(rows, start=1):
        marks = " ".join(f"{'x' if r.flags[c] else '-':>4}" for c in cols)
        lines.append(f"{i:>2} {r.name:<10} {marks} {r.val_map:8.4f}")
    return "\n".join(lines) + "\n"
