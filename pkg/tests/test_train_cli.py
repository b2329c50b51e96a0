"""Training loop, data plumbing, and the command-line surface."""

import json
from pathlib import Path

import numpy as np
import pytest

from evmod.cli import main
from evmod.config import ModelConfig
from evmod.data import assemble_batch, event_mode_for, load_split
from evmod.errors import DataError
from evmod.scenegen import generate_dataset
from evmod.train import evaluate_checkpoint, train


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    generate_dataset(root, n_train=2, n_val=1, frames_per_seq=14, seed=5)
    return root


@pytest.fixture(scope="module")
def tiny_run(tiny_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = ModelConfig(epochs=2, seed=1)
    manifest = train(cfg, tiny_data, out)
    return cfg, out, manifest


class TestData:
    def test_load_split_counts(self, tiny_data):
        cfg = ModelConfig()
        ds = load_split(tiny_data, "train", cfg)
        # each 14-frame sequence yields 12 samples at K=3
        assert len(ds) == 2 * 12

    def test_missing_split(self, tiny_data):
        with pytest.raises(DataError):
            load_split(tiny_data, "nope", ModelConfig())

    def test_event_mode_selection(self):
        assert event_mode_for(ModelConfig(fusion_mode="rgb_only")) == "none"
        assert event_mode_for(ModelConfig(fusion_mode="early")) == "accumulate"
        assert event_mode_for(ModelConfig(fusion_mode="renet", event_mode="single")) == "single"

    def test_assemble_shapes_per_mode(self, tiny_data):
        for mode, event_mode, ev_shape in [
            ("renet", "etma", (2, 2, 96, 96)),
            ("renet", "accumulate", (2, 6, 96, 96)),
            ("renet", "single", (2, 2, 96, 96)),
        ]:
            cfg = ModelConfig(fusion_mode=mode, event_mode=event_mode)
            ds = load_split(tiny_data, "train", cfg)
            batch = assemble_batch(ds, ds.samples[:2], cfg, rng=None)
            assert batch.rgb.shape == (2, 9, 96, 96)
            if event_mode == "etma":
                assert len(batch.events) == 3
                assert batch.events[0].shape == ev_shape
            else:
                assert batch.events.shape == ev_shape

    def test_rgb_only_batch_has_no_events(self, tiny_data):
        cfg = ModelConfig(fusion_mode="rgb_only")
        ds = load_split(tiny_data, "train", cfg)
        batch = assemble_batch(ds, ds.samples[:2], cfg, rng=None)
        assert batch.events is None

    def test_augmented_batch_deterministic_per_rng(self, tiny_data):
        cfg = ModelConfig()
        ds = load_split(tiny_data, "train", cfg)
        b1 = assemble_batch(ds, ds.samples[:4], cfg, rng=np.random.default_rng(3))
        b2 = assemble_batch(ds, ds.samples[:4], cfg, rng=np.random.default_rng(3))
        assert np.array_equal(b1.rgb.data, b2.rgb.data)
        assert all(np.array_equal(a.data, b.data) for a, b in zip(b1.events, b2.events))


class TestTrain:
    def test_smoke_run_loss_decreases(self, tiny_run):
        _, _, manifest = tiny_run
        assert len(manifest.epochs) == 2
        assert np.isfinite(manifest.epochs[-1].train_loss)
        assert manifest.epochs[-1].train_loss < manifest.epochs[0].train_loss

    def test_manifest_embeds_config_verbatim(self, tiny_run):
        cfg, out, manifest = tiny_run
        stored = json.loads((out / "manifest.json").read_text())
        assert stored["config"] == cfg.to_text()
        assert stored["config_hash"] == cfg.config_hash()
        assert ModelConfig.from_text(stored["config"]) == cfg

    def test_checkpoints_written_per_epoch(self, tiny_run):
        _, out, manifest = tiny_run
        assert len(manifest.checkpoints) == 2
        for p in manifest.checkpoints:
            assert Path(p).exists()

    def test_lr_schedule_logged(self, tiny_data, tmp_path):
        cfg = ModelConfig(epochs=1, seed=1, lr_decay_epochs=(1,))
        manifest = train(cfg, tiny_data, tmp_path / "r")
        assert manifest.epochs[0].lr == pytest.approx(5e-5)

    def test_eval_checkpoint_matches_manifest(self, tiny_data, tiny_run):
        cfg, _, manifest = tiny_run
        report = evaluate_checkpoint(cfg, manifest.checkpoints[-1], tiny_data, "val")
        assert report.mean_ap == pytest.approx(manifest.final_map, abs=1e-12)

    def test_same_seed_identical_checkpoints(self, tiny_data, tmp_path):
        cfg = ModelConfig(epochs=1, seed=4)
        m1 = train(cfg, tiny_data, tmp_path / "a")
        m2 = train(cfg, tiny_data, tmp_path / "b")
        b1 = Path(m1.checkpoints[-1]).read_bytes()
        b2 = Path(m2.checkpoints[-1]).read_bytes()
        assert b1 == b2
        assert [e.train_loss for e in m1.epochs] == [e.train_loss for e in m2.epochs]


class TestCli:
    def test_gen_and_repr_dump(self, tmp_path, capsys):
        out = tmp_path / "d"
        rc = main(["gen", "--out", str(out), "--train-sequences", "1",
                   "--val-sequences", "1", "--frames", "8", "--seed", "3"])
        assert rc == 0
        assert (out / "train" / "seq_000" / "events.evt1").exists()
        rc = main(["repr-dump", "--sequence", str(out / "train" / "seq_000"),
                   "--frame", "4", "--out", str(tmp_path / "heat")])
        assert rc == 0
        pgms = list((tmp_path / "heat").glob("*.pgm"))
        assert len(pgms) == 3

    def test_train_eval_infer_cli(self, tiny_data, tmp_path, capsys):
        out = tmp_path / "run"
        rc = main(["train", "--data", str(tiny_data), "--out", str(out),
                   "--set", "epochs=1", "--set", "seed=2"])
        assert rc == 0
        ckpt = out / "checkpoint_epoch001.renw"
        assert ckpt.exists()
        rc = main(["eval", "--checkpoint", str(ckpt), "--data", str(tiny_data),
                   "--set", "epochs=1", "--set", "seed=2",
                   "--out", str(tmp_path / "metrics.json")])
        assert rc == 0
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert "mAP" in metrics and "per_class_ap" in metrics
        rc = main(["eval", "--checkpoint", str(ckpt), "--data", str(tiny_data),
                   "--set", "epochs=1", "--illum", "night"])
        assert rc == 0
        rc = main(["infer", "--checkpoint", str(ckpt),
                   "--sequence", str(tiny_data / "val" / "seq_000"),
                   "--out", str(tmp_path / "inf"), "--set", "epochs=1"])
        assert rc == 0
        assert (tmp_path / "inf" / "detections.csv").exists()
        overlays = list((tmp_path / "inf" / "overlays").glob("*.ppm"))
        assert len(overlays) == 12  # 14 frames, K=3 history

    def test_exit_code_2_on_config_error(self, tmp_path):
        assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "o"),
                     "--set", "fusion_mode=bogus"]) == 2

    def test_exit_code_3_on_data_error(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["train", "--data", str(tmp_path / "empty"),
                     "--out", str(tmp_path / "o")]) == 3

    def test_eval_checkpoint_mismatch_is_data_error(self, tiny_data, tmp_path):
        out = tmp_path / "run"
        main(["train", "--data", str(tiny_data), "--out", str(out),
              "--set", "epochs=1", "--set", "fusion_mode=rgb_only"])
        rc = main(["eval", "--checkpoint", str(out / "checkpoint_epoch001.renw"),
                   "--data", str(tiny_data)])  # default renet config mismatch
        assert rc == 3

    def test_gradcheck_cli_smoke(self, capsys):
        rc = main(["gradcheck", "--seeds", "1"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out


class TestAblate:
    def test_six_variant_matrix(self, tmp_path, capsys):
        data = tmp_path / "data"
        generate_dataset(data, n_train=1, n_val=1, frames_per_seq=10, seed=2)
        rc = main(["ablate", "--data", str(data), "--out", str(tmp_path / "runs"),
                   "--set", "epochs=1", "--set", "seed=0"])
        assert rc == 0
        rows = json.loads((tmp_path / "runs" / "ablation.json").read_text())
        assert len(rows) == 6
        # the flag pattern of the ablation table
        expect = [
            {"R-E": True, "CA": False, "SA": False, "TMA": False, "Acc": False},
            {"R-E": True, "CA": False, "SA": False, "TMA": True, "Acc": False},
            {"R-E": True, "CA": True, "SA": False, "TMA": True, "Acc": False},
            {"R-E": True, "CA": False, "SA": True, "TMA": True, "Acc": False},
            {"R-E": True, "CA": True, "SA": True, "TMA": False, "Acc": True},
            {"R-E": True, "CA": True, "SA": True, "TMA": True, "Acc": False},
        ]
        assert [r["flags"] for r in rows] == expect
        # variants 5 and 6 differ only in the event input mode
        cfg5 = ModelConfig.from_text(rows[4]["config"])
        cfg6 = ModelConfig.from_text(rows[5]["config"])
        diff = {
            k: (getattr(cfg5, k), getattr(cfg6, k))
            for k in cfg5.__dataclass_fields__
            if getattr(cfg5, k) != getattr(cfg6, k)
        }
        assert set(diff) == {"event_mode"}
        assert diff["event_mode"] == ("accumulate", "etma")
        table = (tmp_path / "runs" / "ablation.txt").read_text()
        assert table.count("\n") == 7  # header + 6 rows
