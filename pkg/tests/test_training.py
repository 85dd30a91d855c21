import json
from dataclasses import replace

import numpy as np
import pytest
import torch

import vqla.training as training_module
from vqla.config import PRESETS, TrainConfig, config_from_pairs, load_config, save_config
from vqla.data import generate_dataset, write_dataset
from vqla.losses import LossBreakdown
from vqla.model import load_checkpoint
from vqla.text import Vocabulary
from vqla.training import (
    TrainingDivergedError,
    build_model,
    evaluate,
    run_depth_ablation,
    run_fusion_ablation,
    run_robustness,
    train,
)

TINY = dict(
    epochs=2,
    batch_size=8,
    learning_rate=1e-3,
    embed_dim=16,
    num_heads=2,
    coattn_depth=1,
    encoder_depth=1,
)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    write_dataset(generate_dataset(8, 0), root / "train")
    write_dataset(generate_dataset(4, 1), root / "test")
    return root


def _config(tiny_data, out, **overrides):
    values = dict(TINY)
    values.update(overrides)
    return TrainConfig(
        train_data=str(tiny_data / "train"),
        eval_data=str(tiny_data / "test"),
        out_dir=str(out),
        **values,
    )


class TestConfig:
    def test_round_trip(self, tmp_path):
        config = TrainConfig(epochs=7, learning_rate=3e-4, fusion_strategy="gated")
        save_config(config, tmp_path / "run.cfg")
        assert load_config(tmp_path / "run.cfg") == config

    def test_parse_with_comments(self, tmp_path):
        (tmp_path / "run.cfg").write_text(
            "# toy run\nepochs = 3\nbatch_size = 4  # small\n\nscalar_gate = true\n"
        )
        config = load_config(tmp_path / "run.cfg")
        assert config.epochs == 3 and config.batch_size == 4 and config.scalar_gate

    def test_unknown_key_rejected(self, tmp_path):
        (tmp_path / "run.cfg").write_text("epoch = 3\n")
        with pytest.raises(ValueError, match="unknown config key"):
            load_config(tmp_path / "run.cfg")

    def test_malformed_line_rejected(self, tmp_path):
        (tmp_path / "run.cfg").write_text("epochs 3\n")
        with pytest.raises(ValueError, match="key = value"):
            load_config(tmp_path / "run.cfg")

    def test_paper_scale_preset(self):
        config = config_from_pairs({"preset": "paper_scale"})
        assert config.epochs == 80
        assert config.batch_size == 64
        assert config.learning_rate == pytest.approx(1e-5)
        assert config.coattn_depth == 6

    def test_preset_overridden_by_explicit_keys(self):
        config = config_from_pairs({"preset": "paper_scale", "epochs": "5"})
        assert config.epochs == 5 and config.batch_size == 64

    def test_desk_preset_is_default(self):
        assert PRESETS["desk"] == {}
        assert config_from_pairs({}) == TrainConfig()


class TestTrain:
    def test_loss_decreases_over_fixed_batch(self, tiny_data, tmp_path):
        # 16 full-batch steps on 8 samples.
        config = _config(tiny_data, tmp_path / "run", epochs=16)
        _, report = train(config)
        assert report.epoch_losses[-1]["total"] < report.epoch_losses[0]["total"]
        assert report.steps == 16
        assert len(report.epoch_losses) == config.epochs

    def test_epoch_total_equals_component_sum(self, tiny_data, tmp_path):
        _, report = train(_config(tiny_data, tmp_path / "run"))
        for row in report.epoch_losses:
            assert row["total"] == row["ce"] + row["giou_loss"] + row["l1"]

    def test_deterministic_given_seed(self, tiny_data, tmp_path):
        report_a = train(_config(tiny_data, tmp_path / "a", seed=3))[1]
        report_b = train(_config(tiny_data, tmp_path / "b", seed=3))[1]
        assert report_a.epoch_losses == report_b.epoch_losses
        assert report_a.final_metrics.to_dict() == report_b.final_metrics.to_dict()

    def test_zero_learning_rate_keeps_parameters(self, tiny_data, tmp_path):
        config = _config(tiny_data, tmp_path / "run", learning_rate=0.0, epochs=3)
        checkpoint_path, report = train(config)
        trained, vocab, _ = load_checkpoint(checkpoint_path)
        reference = build_model(config, vocab, image_size=64)
        for (_, pa), (_, pb) in zip(trained.named_parameters(), reference.named_parameters()):
            assert torch.equal(pa, pb)
        # full-batch steps: the loss stays constant across epochs (shuffling
        # only reassociates the batch-mean sum)
        totals = [row["total"] for row in report.epoch_losses]
        assert all(abs(t - totals[0]) < 1e-12 for t in totals)

    def test_empty_dataset_rejected(self, tmp_path):
        write_dataset([], tmp_path / "empty")
        with pytest.raises(ValueError, match="empty"):
            train(TrainConfig(train_data=str(tmp_path / "empty"), out_dir=str(tmp_path / "run")))

    def test_non_finite_loss_aborts_with_diagnostic(self, tiny_data, tmp_path, monkeypatch):
        nan = torch.tensor(float("nan"), dtype=torch.float64)

        def poisoned(*args, **kwargs):
            return LossBreakdown(ce=nan, giou_loss=nan, l1=nan, total=nan)

        monkeypatch.setattr(training_module, "total_loss", poisoned)
        with pytest.raises(TrainingDivergedError, match="batch indices"):
            train(_config(tiny_data, tmp_path / "run"))

    def test_report_json_written(self, tiny_data, tmp_path):
        checkpoint_path, report = train(_config(tiny_data, tmp_path / "run"))
        payload = json.loads((tmp_path / "run" / "report.json").read_text())
        assert payload["steps"] == report.steps
        assert payload["config"]["epochs"] == 2
        assert checkpoint_path.exists()


@pytest.fixture(scope="module")
def checkpoint(tiny_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    path, _ = train(_config(tiny_data, out))
    return path


class TestEvaluate:

    def test_batch_size_independent(self, checkpoint, tiny_data):
        one = evaluate(checkpoint, str(tiny_data / "test"), batch_size=1)
        many = evaluate(checkpoint, str(tiny_data / "test"), batch_size=64)
        assert one.accuracy == many.accuracy
        assert one.macro_f == many.macro_f
        assert abs(one.miou - many.miou) < 1e-10

    def test_checkpoint_reload_reproduces_metrics(self, checkpoint, tiny_data):
        a = evaluate(checkpoint, str(tiny_data / "test"))
        b = evaluate(checkpoint, str(tiny_data / "test"))
        assert a.to_dict() == b.to_dict()

    def test_empty_dataset_rejected(self, checkpoint, tmp_path):
        write_dataset([], tmp_path / "empty")
        with pytest.raises(ValueError, match="empty"):
            evaluate(checkpoint, str(tmp_path / "empty"))

    def test_class_count_mismatch_rejected(self, checkpoint):
        samples = generate_dataset(2, 0)
        samples[0].answer_id = 99
        with pytest.raises(ValueError, match="classes"):
            evaluate(checkpoint, samples)

    def test_count_consistent(self, checkpoint, tiny_data):
        report = evaluate(checkpoint, str(tiny_data / "test"))
        assert report.count == 4
        assert 0 <= report.correct <= report.count


class TestAblations:
    def test_fusion_subset_rows_and_columns(self, tiny_data, tmp_path):
        base = _config(tiny_data, tmp_path / "ab", epochs=1)
        report = run_fusion_ablation(base, strategies=["concat", "gated"])
        assert [r.label for r in report.rows] == ["concat", "gated"]
        assert all(r.error is None for r in report.rows)
        payload = report.to_dict()
        assert payload["columns"] == ["Fusion Strategy", "Acc", "F-Score", "mIoU"]
        table = report.format_table()
        assert "Acc" in table and "F-Score" in table and "mIoU" in table

    def test_failure_recorded_and_sweep_continues(self, tiny_data, tmp_path):
        base = _config(tiny_data, tmp_path / "ab", epochs=1)
        report = run_fusion_ablation(base, strategies=["bogus", "concat"])
        assert report.rows[0].error is not None
        assert report.rows[1].error is None

    def test_depth_rows(self, tiny_data, tmp_path):
        base = _config(tiny_data, tmp_path / "depth", epochs=1)
        report = run_depth_ablation(base, depths=(0, 1))
        assert [r.label for r in report.rows] == ["0", "1"]
        assert all(r.error is None for r in report.rows)

    def test_multi_seed_averaging(self, tiny_data, tmp_path):
        base = _config(tiny_data, tmp_path / "seeds", epochs=1)
        report = run_fusion_ablation(base, strategies=["concat"], seeds=2)
        assert report.rows[0].error is None


class TestRobustness:
    def test_severity_rows_and_clean_baseline(self, tiny_data, tmp_path):
        config = _config(tiny_data, tmp_path / "rob", epochs=1)
        checkpoint_path, _ = train(config)
        report = run_robustness(checkpoint_path, str(tiny_data / "test"), seed=5)
        assert [row["severity"] for row in report.rows] == [0, 1, 2, 3, 4, 5]
        clean = evaluate(checkpoint_path, str(tiny_data / "test"))
        assert report.rows[0]["accuracy"] == clean.accuracy
        assert report.rows[0]["macro_f"] == clean.macro_f
        assert report.rows[0]["miou"] == clean.miou
        for row in report.rows[1:]:
            assert len(row["per_kind"]) == 18
        table = report.format_table()
        assert "Severity" in table
