"""Training loop, evaluation, ablation runners, and the corruption-robustness harness.

Everything here is deterministic given (config, seed): parameter init, data
order, and corruption draws all derive from explicit seeds, and the model runs
in float64 on CPU.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .corruption import CorruptionSpec, corrupt, list_corruptions
from .data import NUM_CLASSES, read_dataset
from .fusion import FUSION_STRATEGIES
from .losses import MetricsReport, compute_metrics, total_loss
from .model import (
    ModelConfig,
    VQLAModel,
    box_to_corners,
    initialize_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .text import Vocabulary, tokenize

METRIC_COLUMNS = ("Acc", "F-Score", "mIoU")
DEPTH_SWEEP = (2, 4, 6, 8, 10)


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


@dataclass
class RunReport:
    seed: int
    config: dict
    epoch_losses: list[dict]
    final_metrics: MetricsReport
    wall_time_s: float
    steps: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "epoch_losses": self.epoch_losses,
            "final_metrics": self.final_metrics.to_dict(),
            "wall_time_s": self.wall_time_s,
            "steps": self.steps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _tensorize(samples, vocab: Vocabulary, text_len: int):
    images = torch.from_numpy(np.stack([s.image for s in samples]).astype(np.float64))
    ids = torch.from_numpy(np.stack([tokenize(s.question, vocab, text_len) for s in samples]))
    targets = torch.tensor([s.answer_id for s in samples], dtype=torch.long)
    boxes = torch.tensor(
        [[s.box.x1, s.box.y1, s.box.x2, s.box.y2] for s in samples], dtype=torch.float64
    )
    return images, ids, targets, boxes


def build_model(config: TrainConfig, vocab: Vocabulary, image_size: int) -> VQLAModel:
    model_config = ModelConfig(
        vocab_size=len(vocab),
        embed_dim=config.embed_dim,
        num_heads=config.num_heads,
        text_len=config.text_len,
        image_size=image_size,
        patch_size=config.patch_size,
        encoder_kind=config.encoder_kind,
        fusion_strategy=config.fusion_strategy,
        coattn_depth=config.coattn_depth,
        encoder_depth=config.encoder_depth,
        num_classes=NUM_CLASSES,
        scalar_gate=config.scalar_gate,
    )
    model = VQLAModel(model_config).double()
    initialize_parameters(model, config.seed)
    return model


def train(config: TrainConfig):
    """Single-stage end-to-end optimization. Returns (checkpoint path, RunReport)."""
    samples = read_dataset(config.train_data)
    if not samples:
        raise ValueError(f"training dataset {config.train_data!r} is empty")
    vocab = Vocabulary.build([s.question for s in samples])
    model = build_model(config, vocab, image_size=samples[0].image.shape[0])
    images, ids, targets, boxes = _tensorize(samples, vocab, config.text_len)

    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=config.learning_rate,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_eps,
    )
    rng = np.random.default_rng(config.seed)
    weights = (config.ce_weight, config.giou_weight, config.l1_weight)
    n = len(samples)

    start = time.perf_counter()
    epoch_rows = []
    steps = 0
    model.train()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = {"ce": 0.0, "giou_loss": 0.0, "l1": 0.0}
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            idx = torch.from_numpy(batch)
            probs, pred_center = model(images[idx], ids[idx])
            breakdown = total_loss(probs, targets[idx], pred_center, boxes[idx], weights)
            if not bool(torch.isfinite(breakdown.total)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {steps}: "
                    f"ce={breakdown.ce.item()} giou={breakdown.giou_loss.item()} "
                    f"l1={breakdown.l1.item()} batch indices {batch.tolist()}"
                )
            optimizer.zero_grad()
            breakdown.total.backward()
            optimizer.step()
            steps += 1
            size = len(batch)
            sums["ce"] += breakdown.ce.item() * size
            sums["giou_loss"] += breakdown.giou_loss.item() * size
            sums["l1"] += breakdown.l1.item() * size
        row = {key: value / n for key, value in sums.items()}
        row["total"] = row["ce"] + row["giou_loss"] + row["l1"]
        epoch_rows.append(row)
    wall_time = time.perf_counter() - start

    final_metrics = _evaluate_tensors(model, images, ids, targets, boxes)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "checkpoint.pt"
    save_checkpoint(checkpoint_path, model, vocab, config.seed, asdict(config))
    report = RunReport(
        seed=config.seed,
        config=asdict(config),
        epoch_losses=epoch_rows,
        final_metrics=final_metrics,
        wall_time_s=wall_time,
        steps=steps,
    )
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "metrics.txt").write_text(final_metrics.to_text())
    return checkpoint_path, report


def _forward_batches(model: VQLAModel, images, ids, batch_size: int):
    preds, boxes = [], []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for lo in range(0, images.shape[0], batch_size):
            probs, centers = model(images[lo:lo + batch_size], ids[lo:lo + batch_size])
            preds.append(probs.argmax(dim=-1))
            boxes.append(box_to_corners(centers, clamp=True))
    if was_training:
        model.train()
    return torch.cat(preds), torch.cat(boxes)


def _evaluate_tensors(model, images, ids, targets, gt_boxes, batch_size: int = 64) -> MetricsReport:
    pred_ids, pred_boxes = _forward_batches(model, images, ids, batch_size)
    return compute_metrics(
        pred_ids.numpy(), targets.numpy(), pred_boxes.numpy(), gt_boxes.numpy(),
        model.config.num_classes,
    )


def _load_samples(data):
    return data if isinstance(data, list) else read_dataset(data)


def evaluate(checkpoint, data, batch_size: int = 64) -> MetricsReport:
    """Deterministic, shuffle-free evaluation of a checkpoint on a dataset."""
    model, vocab, _ = load_checkpoint(checkpoint)
    samples = _load_samples(data)
    if not samples:
        raise ValueError("evaluation dataset is empty")
    worst = max(s.answer_id for s in samples)
    if worst >= model.config.num_classes:
        raise ValueError(
            f"dataset answer id {worst} does not fit the checkpoint's "
            f"{model.config.num_classes} classes"
        )
    images, ids, targets, boxes = _tensorize(samples, vocab, model.config.text_len)
    return _evaluate_tensors(model, images, ids, targets, boxes, batch_size)


# ---------------------------------------------------------------------------
# Ablation and robustness runners


@dataclass
class AblationRow:
    label: str
    accuracy: float | None
    macro_f: float | None
    miou: float | None
    error: str | None = None


@dataclass
class AblationReport:
    name: str
    label_header: str
    rows: list[AblationRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "columns": [self.label_header, *METRIC_COLUMNS],
            "rows": [
                {
                    "label": r.label,
                    "accuracy": r.accuracy,
                    "macro_f": r.macro_f,
                    "miou": r.miou,
                    "error": r.error,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        width = max(len(self.label_header), *(len(r.label) for r in self.rows)) + 2
        header = f"{self.label_header:<{width}}" + "".join(f"{c:>10}" for c in METRIC_COLUMNS)
        lines = [header, "-" * len(header)]
        for r in self.rows:
            if r.error is not None:
                lines.append(f"{r.label:<{width}}failed: {r.error}")
            else:
                lines.append(
                    f"{r.label:<{width}}{r.accuracy:>10.4f}{r.macro_f:>10.4f}{r.miou:>10.4f}"
                )
        return "\n".join(lines) + "\n"


def _train_eval_once(config: TrainConfig) -> MetricsReport:
    checkpoint_path, _ = train(config)
    return evaluate(checkpoint_path, config.eval_data or config.train_data)


def _mean_metrics(reports: list[MetricsReport]):
    return (
        float(np.mean([r.accuracy for r in reports])),
        float(np.mean([r.macro_f for r in reports])),
        float(np.mean([r.miou for r in reports])),
    )


def _sweep(base: TrainConfig, name: str, label_header: str, variants, seeds: int) -> AblationReport:
    """Train/evaluate each variant under the base budget; failures don't stop the sweep."""
    report = AblationReport(name=name, label_header=label_header)
    for label, overrides in variants:
        try:
            runs = []
            for k in range(seeds):
                config = replace(
                    base,
                    seed=base.seed + k,
                    out_dir=str(Path(base.out_dir) / f"{name}_{label}_seed{base.seed + k}"),
                    **overrides,
                )
                runs.append(_train_eval_once(config))
            acc, f_score, miou = _mean_metrics(runs)
            report.rows.append(AblationRow(label, acc, f_score, miou))
        except Exception as exc:  # record and continue with the remaining variants
            report.rows.append(AblationRow(label, None, None, None, error=str(exc)))
    return report


def run_fusion_ablation(base: TrainConfig, strategies=None, seeds: int = 1) -> AblationReport:
    strategies = list(strategies) if strategies is not None else list(FUSION_STRATEGIES)
    variants = [(s, {"fusion_strategy": s}) for s in strategies]
    return _sweep(base, "fusion", "Fusion Strategy", variants, seeds)


def run_depth_ablation(base: TrainConfig, depths=DEPTH_SWEEP, seeds: int = 1) -> AblationReport:
    variants = [(str(d), {"coattn_depth": d}) for d in depths]
    return _sweep(base, "depth", "Layers", variants, seeds)


@dataclass
class RobustnessReport:
    seed: int
    rows: list[dict] = field(default_factory=list)  # severity 0 (clean) .. 5

    def to_dict(self) -> dict:
        return {"seed": self.seed, "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        header = f"{'Severity':<10}" + "".join(f"{c:>10}" for c in METRIC_COLUMNS)
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(
                f"{row['severity']:<10}{row['accuracy']:>10.4f}"
                f"{row['macro_f']:>10.4f}{row['miou']:>10.4f}"
            )
        return "\n".join(lines) + "\n"


def run_robustness(checkpoint, data, seed: int = 0, batch_size: int = 64) -> RobustnessReport:
    """Evaluate clean data (severity 0) and all corruption kinds at severities 1-5.

    Per severity, metrics are averaged across the 18 kinds; the per-kind
    breakdown is kept in the row for auditing.
    """
    model, vocab, _ = load_checkpoint(checkpoint)
    samples = _load_samples(data)
    if not samples:
        raise ValueError("robustness dataset is empty")
    images, ids, targets, boxes = _tensorize(samples, vocab, model.config.text_len)

    clean = _evaluate_tensors(model, images, ids, targets, boxes, batch_size)
    report = RobustnessReport(seed=seed)
    report.rows.append({
        "severity": 0,
        "accuracy": clean.accuracy,
        "macro_f": clean.macro_f,
        "miou": clean.miou,
        "per_kind": None,
    })

    sample_seeds = [
        int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        for i in range(len(samples))
    ]
    for severity in range(1, 6):
        per_kind = {}
        for definition in list_corruptions():
            corrupted = np.stack([
                corrupt(s.image, CorruptionSpec(definition.name, severity, sample_seeds[i]))
                for i, s in enumerate(samples)
            ])
            corrupted_images = torch.from_numpy(corrupted.astype(np.float64))
            metrics = _evaluate_tensors(model, corrupted_images, ids, targets, boxes, batch_size)
            per_kind[definition.name] = {
                "accuracy": metrics.accuracy,
                "macro_f": metrics.macro_f,
                "miou": metrics.miou,
            }
        report.rows.append({
            "severity": severity,
            "accuracy": float(np.mean([m["accuracy"] for m in per_kind.values()])),
            "macro_f": float(np.mean([m["macro_f"] for m in per_kind.values()])),
            "miou": float(np.mean([m["miou"] for m in per_kind.values()])),
            "per_kind": per_kind,
        })
    return report
