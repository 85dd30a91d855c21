"""Training losses (cross-entropy, center-form L1, GIoU) and evaluation metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch

from .model import box_to_corners, corners_to_center

AREA_EPS = 1e-9
PROB_FLOOR = 1e-12


def cross_entropy(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """-log p[target] with the probability clamped at 1e-12. Shapes (..., C), (...,)."""
    targets = torch.as_tensor(targets, dtype=torch.long)
    num_classes = probs.shape[-1]
    if int(targets.min()) < 0 or int(targets.max()) >= num_classes:
        raise ValueError(f"target out of range for {num_classes} classes")
    picked = probs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp_min(PROB_FLOOR))


def l1_box(pred_center: torch.Tensor, gt_corners: torch.Tensor) -> torch.Tensor:
    """Sum of absolute center-form coordinate differences; ground truth is corner-form."""
    return (pred_center - corners_to_center(gt_corners)).abs().sum(dim=-1)


def box_iou(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """IoU of corner-form boxes (..., 4); degenerate boxes handled by clamped areas."""
    inter_w = (torch.minimum(a[..., 2], b[..., 2]) - torch.maximum(a[..., 0], b[..., 0])).clamp_min(0.0)
    inter_h = (torch.minimum(a[..., 3], b[..., 3]) - torch.maximum(a[..., 1], b[..., 1])).clamp_min(0.0)
    inter = inter_w * inter_h
    area_a = (a[..., 2] - a[..., 0]).clamp_min(0.0) * (a[..., 3] - a[..., 1]).clamp_min(0.0)
    area_b = (b[..., 2] - b[..., 0]).clamp_min(0.0) * (b[..., 3] - b[..., 1]).clamp_min(0.0)
    union = area_a + area_b - inter
    return inter / union.clamp_min(AREA_EPS)


def giou(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """IoU minus the enclosing-box area not covered by the union, in [-1, 1]."""
    inter_w = (torch.minimum(a[..., 2], b[..., 2]) - torch.maximum(a[..., 0], b[..., 0])).clamp_min(0.0)
    inter_h = (torch.minimum(a[..., 3], b[..., 3]) - torch.maximum(a[..., 1], b[..., 1])).clamp_min(0.0)
    inter = inter_w * inter_h
    area_a = (a[..., 2] - a[..., 0]).clamp_min(0.0) * (a[..., 3] - a[..., 1]).clamp_min(0.0)
    area_b = (b[..., 2] - b[..., 0]).clamp_min(0.0) * (b[..., 3] - b[..., 1]).clamp_min(0.0)
    union = area_a + area_b - inter
    enclose_w = (torch.maximum(a[..., 2], b[..., 2]) - torch.minimum(a[..., 0], b[..., 0])).clamp_min(0.0)
    enclose_h = (torch.maximum(a[..., 3], b[..., 3]) - torch.minimum(a[..., 1], b[..., 1])).clamp_min(0.0)
    enclose = enclose_w * enclose_h
    return inter / union.clamp_min(AREA_EPS) - (enclose - union) / enclose.clamp_min(AREA_EPS)


def giou_loss(pred_corners: torch.Tensor, gt_corners: torch.Tensor) -> torch.Tensor:
    """1 - GIoU, in [0, 2]; zero iff the boxes coincide."""
    return 1.0 - giou(pred_corners, gt_corners)


@dataclass
class LossBreakdown:
    """Batch-mean loss components; total is their (weighted) sum, exactly."""

    ce: torch.Tensor
    giou_loss: torch.Tensor
    l1: torch.Tensor
    total: torch.Tensor


def total_loss(
    probs: torch.Tensor,
    targets: torch.Tensor,
    pred_center: torch.Tensor,
    gt_corners: torch.Tensor,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> LossBreakdown:
    """Joint objective: weighted ce + giou_loss + l1 (all weights default 1)."""
    ce_w, giou_w, l1_w = weights
    ce = ce_w * cross_entropy(probs, targets).mean()
    # Unclamped corners keep gradients alive outside the unit square; metrics clamp.
    gl = giou_w * giou_loss(box_to_corners(pred_center, clamp=False), gt_corners).mean()
    l1 = l1_w * l1_box(pred_center, gt_corners).mean()
    return LossBreakdown(ce=ce, giou_loss=gl, l1=l1, total=ce + gl + l1)


# ---------------------------------------------------------------------------
# Evaluation metrics


def accuracy(preds, targets) -> float:
    preds, targets = _as_label_arrays(preds, targets)
    return float(np.mean(preds == targets))


def macro_f(preds, targets, num_classes: int) -> float:
    """Unweighted mean F1 over classes that appear in targets or predictions."""
    preds, targets = _as_label_arrays(preds, targets)
    scores = []
    for c in range(num_classes):
        tp = int(np.sum((preds == c) & (targets == c)))
        fp = int(np.sum((preds == c) & (targets != c)))
        fn = int(np.sum((preds != c) & (targets == c)))
        if tp + fp + fn == 0:
            continue  # class absent from both targets and predictions
        scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(scores)) if scores else 0.0


def mean_iou(pred_corners, gt_corners) -> float:
    """Mean per-sample IoU; predictions are clamped to the unit square first."""
    pred = torch.as_tensor(np.asarray(pred_corners), dtype=torch.float64)
    gt = torch.as_tensor(np.asarray(gt_corners), dtype=torch.float64)
    if pred.numel() == 0:
        raise ValueError("mean_iou of an empty list")
    return float(box_iou(pred.clamp(0.0, 1.0), gt).mean())


def per_class_precision_recall(preds, targets, num_classes: int):
    preds, targets = _as_label_arrays(preds, targets)
    precision, recall = [], []
    for c in range(num_classes):
        tp = int(np.sum((preds == c) & (targets == c)))
        fp = int(np.sum((preds == c) & (targets != c)))
        fn = int(np.sum((preds != c) & (targets == c)))
        precision.append(tp / (tp + fp) if tp + fp else 0.0)
        recall.append(tp / (tp + fn) if tp + fn else 0.0)
    return precision, recall


def _as_label_arrays(preds, targets):
    preds = np.asarray(preds)
    targets = np.asarray(targets)
    if preds.size == 0 or targets.size == 0:
        raise ValueError("metrics over empty prediction/target lists")
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {targets.shape}")
    return preds, targets


@dataclass
class MetricsReport:
    accuracy: float
    macro_f: float
    miou: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    correct: int
    count: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f": self.macro_f,
            "miou": self.miou,
            "per_class_precision": list(self.per_class_precision),
            "per_class_recall": list(self.per_class_recall),
            "correct": self.correct,
            "count": self.count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        """Flat key-value record, one metric per line."""
        lines = [
            f"accuracy {self.accuracy:.6f}",
            f"macro_f {self.macro_f:.6f}",
            f"miou {self.miou:.6f}",
            f"correct {self.correct}",
            f"count {self.count}",
        ]
        for c, (p, r) in enumerate(zip(self.per_class_precision, self.per_class_recall)):
            lines.append(f"class_{c:02d}_precision {p:.6f}")
            lines.append(f"class_{c:02d}_recall {r:.6f}")
        return "\n".join(lines) + "\n"


def compute_metrics(pred_ids, target_ids, pred_boxes, gt_boxes, num_classes: int) -> MetricsReport:
    preds, targets = _as_label_arrays(pred_ids, target_ids)
    precision, recall = per_class_precision_recall(preds, targets, num_classes)
    return MetricsReport(
        accuracy=accuracy(preds, targets),
        macro_f=macro_f(preds, targets, num_classes),
        miou=mean_iou(pred_boxes, gt_boxes),
        per_class_precision=precision,
        per_class_recall=recall,
        correct=int(np.sum(preds == targets)),
        count=int(preds.size),
    )
