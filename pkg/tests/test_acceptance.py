"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
summaries. The training-based criteria share module-scoped datasets and
checkpoints; everything is seeded and deterministic.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from test_attention import mha_loop_oracle
from test_losses import raster_giou

from vqla.attention import AttentionConfig, GuidedAttentionBlock, MultiHeadAttention, SelfAttentionBlock
from vqla.config import TrainConfig
from vqla.corruption import CorruptionSpec, corrupt, list_corruptions
from vqla.data import generate_dataset, write_dataset
from vqla.fusion import FUSION_STRATEGIES, CoAttentionStack, GatedFusion
from vqla.gradcheck import max_relative_error
from vqla.losses import cross_entropy, giou, giou_loss, l1_box
from vqla.model import (
    BoxHead,
    ClassifierHead,
    SequenceEncoder,
    VQLAModel,
    box_to_corners,
    load_checkpoint,
)
from vqla.text import TextEmbedding
from vqla.training import evaluate, run_depth_ablation, run_fusion_ablation, run_robustness, train
from vqla.vision import VisualEmbedding

# Budgeted configurations for the training-based criteria. The model family is
# the desk-scale default (d=64, 4 heads, co-attention depth 2, encoder depth 2,
# catvil_t2v); batch size and learning rate are per-experiment.
OVERFIT = dict(embed_dim=64, num_heads=4, coattn_depth=2, encoder_depth=2,
               fusion_strategy="catvil_t2v", epochs=300, batch_size=64,
               learning_rate=1e-3)
GENERALIZE = dict(embed_dim=64, num_heads=4, coattn_depth=2, encoder_depth=2,
                  fusion_strategy="catvil_t2v", epochs=20, batch_size=32,
                  learning_rate=1e-3)
ABLATION_BUDGET = dict(embed_dim=32, num_heads=4, coattn_depth=2, encoder_depth=1,
                       epochs=1, batch_size=16, learning_rate=1e-3)


def _rand(*shape, seed=0, scale=1.0):
    gen = torch.Generator().manual_seed(seed)
    return scale * torch.randn(*shape, generator=gen, dtype=torch.float64)


def _init(module, seed, scale=0.3):
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for param in module.parameters():
            param.normal_(0.0, scale, generator=gen)
    return module


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def datasets(workspace):
    paths = {
        "overfit": workspace / "overfit_data",
        "train": workspace / "train_data",
        "test": workspace / "test_data",
    }
    write_dataset(generate_dataset(64, 11), paths["overfit"])
    write_dataset(generate_dataset(512, 21), paths["train"])
    write_dataset(generate_dataset(128, 22), paths["test"])
    return paths


@pytest.fixture(scope="module")
def generalization_run(workspace, datasets):
    config = TrainConfig(seed=0, train_data=str(datasets["train"]),
                         out_dir=str(workspace / "generalize"), **GENERALIZE)
    checkpoint_path, report = train(config)
    return checkpoint_path, report


def test_criterion_01_gradient_integrity():
    """Every trainable operation passes central finite-difference checks."""
    start = time.perf_counter()
    worst = {}
    for seed in (0, 1, 2):
        checks = {}

        text_tables = _init(TextEmbedding(8, 4, 5).double(), seed=seed)
        ids = torch.tensor([2, 4, 7, 3, 0])
        probe = _rand(5, 4, seed=seed + 10)
        checks["text_embedding"] = lambda: (text_tables(ids) * probe).sum()

        visual = _init(VisualEmbedding(8, 4, 4).double(), seed=seed + 20)
        image = torch.rand(8, 8, 3, generator=torch.Generator().manual_seed(seed),
                           dtype=torch.float64)
        vprobe = _rand(4, 4, seed=seed + 30)
        checks["visual_embedding"] = lambda: (visual(image) * vprobe).sum()

        cfg4 = AttentionConfig(dim=4, heads=2)
        mha = _init(MultiHeadAttention(cfg4).double(), seed=seed + 40)
        q, kv = _rand(3, 4, seed=seed + 41), _rand(4, 4, seed=seed + 42)
        mprobe = _rand(3, 4, seed=seed + 43)
        checks["multi_head_attention"] = lambda: (mha(q, kv, kv) * mprobe).sum()

        self_block = _init(SelfAttentionBlock(cfg4).double(), seed=seed + 50)
        sx = _rand(3, 4, seed=seed + 51)
        sprobe = _rand(3, 4, seed=seed + 52)
        checks["self_attention_block"] = lambda: (self_block(sx) * sprobe).sum()

        guided = _init(GuidedAttentionBlock(cfg4).double(), seed=seed + 60)
        gq, gkv = _rand(2, 4, seed=seed + 61), _rand(3, 4, seed=seed + 62)
        gprobe = _rand(2, 4, seed=seed + 63)
        checks["guided_attention_block"] = lambda: (guided(gq, gkv) * gprobe).sum()

        stack = _init(CoAttentionStack(cfg4, 1, "t2v").double(), seed=seed + 70)
        ev, et = _rand(3, 4, seed=seed + 71), _rand(2, 4, seed=seed + 72)
        stprobe = _rand(3, 4, seed=seed + 73)
        checks["co_attention_stack"] = lambda: (stack(ev, et)[0] * stprobe).sum()

        gate = _init(GatedFusion(4).double(), seed=seed + 80)
        fv, ft = _rand(3, 4, seed=seed + 81), _rand(3, 4, seed=seed + 82)
        fprobe = _rand(3, 4, seed=seed + 83)
        checks["gated_fusion"] = lambda: (gate(fv, ft) * fprobe).sum()

        cfg8 = AttentionConfig(dim=8, heads=2)
        encoder = _init(SequenceEncoder(cfg8, 2).double(), seed=seed + 90)
        ex = _rand(4, 8, seed=seed + 91)
        eprobe = _rand(8, seed=seed + 92)
        checks["sequence_encoder"] = lambda: (encoder(ex)[0] * eprobe).sum()

        classifier = _init(ClassifierHead(8, 6).double(), seed=seed + 100)
        cx = _rand(8, seed=seed + 101)
        checks["classifier_head_ce"] = lambda: cross_entropy(classifier(cx), torch.tensor(2))

        box_head = _init(BoxHead(8).double(), seed=seed + 110)
        bx = _rand(8, seed=seed + 111)
        gt = torch.tensor([0.2, 0.25, 0.7, 0.8], dtype=torch.float64)
        checks["box_head_losses"] = lambda: (
            giou_loss(box_to_corners(box_head(bx), clamp=False), gt) + l1_box(box_head(bx), gt)
        )

        modules = {
            "text_embedding": text_tables, "visual_embedding": visual,
            "multi_head_attention": mha, "self_attention_block": self_block,
            "guided_attention_block": guided, "co_attention_stack": stack,
            "gated_fusion": gate, "sequence_encoder": encoder,
            "classifier_head_ce": classifier, "box_head_losses": box_head,
        }
        for name, loss_fn in checks.items():
            err = max_relative_error(loss_fn, modules[name].parameters(), step=1e-5)
            worst[name] = max(worst.get(name, 0.0), err)
            assert err < 1e-4, f"{name} (seed {seed}): rel err {err:.2e}"

        center = (0.3 + 0.4 * torch.rand(4, generator=torch.Generator().manual_seed(seed),
                                         dtype=torch.float64)).requires_grad_()
        err = max_relative_error(
            lambda: giou_loss(box_to_corners(center, clamp=False), gt).sum(), [center]
        )
        worst["giou_loss_path"] = max(worst.get("giou_loss_path", 0.0), err)
        assert err < 1e-3, f"giou loss path (seed {seed}): rel err {err:.2e}"

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0, f"gradient integrity took {elapsed:.0f}s (budget 120s)"
    summary = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    print(f"\nACCEPTANCE 1 PASS: gradient integrity in {elapsed:.1f}s, worst rel err per op: {summary}")


def test_criterion_02_attention_oracle():
    """Vectorized multi-head attention matches a naive per-head loop oracle."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for case in range(100):
        heads = int(rng.choice([1, 2, 4]))
        dim = int(rng.choice([4, 8]))
        cfg = AttentionConfig(dim=dim, heads=heads)
        mha = _init(MultiHeadAttention(cfg).double(), seed=1000 + case)
        lq, lk = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        q = _rand(lq, dim, seed=2000 + case)
        k = _rand(lk, dim, seed=3000 + case)
        v = _rand(lk, dim, seed=4000 + case)
        expected = mha_loop_oracle(mha, q, k, v)
        diff = np.abs(mha(q, k, v).detach().numpy() - expected).max()
        worst = max(worst, diff)
        assert diff <= 1e-10, f"case {case} (h={heads}, d={dim}): diff {diff:.2e}"
    print(f"\nACCEPTANCE 2 PASS: 100 attention cases vs loop oracle, worst diff {worst:.2e}")


def test_criterion_03_giou_oracle():
    """Hand GIoU cases exact to 1e-9; analytic vs 512x512 rasterization within 2e-2."""
    identical = giou(torch.tensor([0.0, 0.0, 2.0, 2.0], dtype=torch.float64),
                     torch.tensor([0.0, 0.0, 2.0, 2.0], dtype=torch.float64)).item()
    assert abs(identical - 1.0) < 1e-9
    overlap = giou(torch.tensor([0.0, 0.0, 2.0, 2.0], dtype=torch.float64),
                   torch.tensor([1.0, 1.0, 3.0, 3.0], dtype=torch.float64)).item()
    assert abs(overlap - (-5.0 / 63.0)) < 1e-9
    disjoint = giou(torch.tensor([0.0, 0.0, 1.0, 1.0], dtype=torch.float64),
                    torch.tensor([2.0, 2.0, 3.0, 3.0], dtype=torch.float64)).item()
    assert abs(disjoint - (-7.0 / 9.0)) < 1e-9

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        def sample():
            w, h = rng.uniform(0.3, 0.7, 2)
            x1 = rng.uniform(0.0, 1.0 - w)
            y1 = rng.uniform(0.0, 1.0 - h)
            return np.array([x1, y1, x1 + w, y1 + h])
        a, b = sample(), sample()
        analytic = giou(torch.from_numpy(a), torch.from_numpy(b)).item()
        diff = abs(analytic - raster_giou(a, b, n=512))
        worst = max(worst, diff)
        assert diff < 2e-2
    print(f"\nACCEPTANCE 3 PASS: GIoU hand cases exact; raster oracle worst diff {worst:.2e}")


def test_criterion_04_gated_fusion_contract():
    """Strict (-1,1) bound, exact half mixture at zero gate, scalar fixture value."""
    gate = _init(GatedFusion(6).double(), seed=4, scale=1.5)
    out = gate(_rand(50, 6, seed=5, scale=2.0), _rand(50, 6, seed=6, scale=2.0))
    assert (out > -1.0).all() and (out < 1.0).all()

    half = _init(GatedFusion(4).double(), seed=7)
    with torch.no_grad():
        half.gate_map.weight.zero_()
    ev, et = _rand(3, 4, seed=8), _rand(3, 4, seed=9)
    expected = 0.5 * (torch.tanh(half.visual_map(ev)) + torch.tanh(half.text_map(et)))
    assert torch.allclose(half(ev, et), expected, rtol=0, atol=1e-15)

    fixture = GatedFusion(1).double()
    with torch.no_grad():
        fixture.visual_map.weight.fill_(1.0)
        fixture.text_map.weight.fill_(1.0)
        fixture.gate_map.weight.copy_(torch.tensor([[2.0, 0.0]], dtype=torch.float64))
    out = fixture(torch.tensor([[0.5]], dtype=torch.float64),
                  torch.tensor([[-0.5]], dtype=torch.float64)).item()
    w = 1.0 / (1.0 + math.exp(-1.0))
    oracle = (2.0 * w - 1.0) * math.tanh(0.5)  # = 0.2135522670...
    assert abs(out - oracle) < 1e-6
    print(f"\nACCEPTANCE 4 PASS: gated fusion bound/half-mixture; fixture {out:.8f} vs oracle {oracle:.8f}")


def test_criterion_05_overfit(workspace, datasets):
    """catvil_t2v overfits 64 samples within 300 steps on one CPU core."""
    config = TrainConfig(seed=0, train_data=str(datasets["overfit"]),
                         out_dir=str(workspace / "overfit"), **OVERFIT)
    start = time.perf_counter()
    _, report = train(config)
    elapsed = time.perf_counter() - start
    metrics = report.final_metrics
    assert report.steps <= 300
    assert metrics.accuracy >= 0.95, f"train accuracy {metrics.accuracy:.3f} < 0.95"
    assert metrics.miou >= 0.75, f"train mIoU {metrics.miou:.3f} < 0.75"
    assert elapsed <= 600.0, f"overfit took {elapsed:.0f}s (budget 600s)"
    print(f"\nACCEPTANCE 5 PASS: overfit in {report.steps} steps / {elapsed:.0f}s, "
          f"train acc {metrics.accuracy:.3f}, train mIoU {metrics.miou:.3f}")


def test_criterion_06_generalization(datasets, generalization_run):
    """512-train/128-test split, 20 epochs: test accuracy and mIoU above 0.50."""
    checkpoint_path, report = generalization_run
    metrics = evaluate(checkpoint_path, str(datasets["test"]))
    assert metrics.accuracy >= 0.50, f"test accuracy {metrics.accuracy:.3f} < 0.50"
    assert metrics.miou >= 0.50, f"test mIoU {metrics.miou:.3f} < 0.50"
    print(f"\nACCEPTANCE 6 PASS: 20-epoch generalization, test acc {metrics.accuracy:.3f} "
          f"(chance 0.056), test mIoU {metrics.miou:.3f}")


def test_criterion_07_ablation_harness(workspace, datasets):
    """Fusion ablation covers all 12 strategies; depth sweep covers 2,4,6,8,10."""
    base = TrainConfig(seed=0, fusion_strategy="catvil_t2v",
                       train_data=str(datasets["overfit"]),
                       eval_data=str(datasets["overfit"]),
                       out_dir=str(workspace / "ablation"), **ABLATION_BUDGET)
    fusion_report = run_fusion_ablation(base)
    assert [row.label for row in fusion_report.rows] == list(FUSION_STRATEGIES)
    assert len(fusion_report.rows) == 12
    assert all(row.error is None for row in fusion_report.rows), [
        (r.label, r.error) for r in fusion_report.rows if r.error
    ]
    assert fusion_report.to_dict()["columns"][1:] == ["Acc", "F-Score", "mIoU"]

    depth_report = run_depth_ablation(base, depths=(2, 4, 6, 8, 10))
    assert [row.label for row in depth_report.rows] == ["2", "4", "6", "8", "10"]
    assert all(row.error is None for row in depth_report.rows)
    for row in depth_report.rows:
        assert all(math.isfinite(v) for v in (row.accuracy, row.macro_f, row.miou))
    print("\nACCEPTANCE 7 PASS: 12-strategy fusion ablation and 5-depth sweep completed")
    print(fusion_report.format_table())
    print(depth_report.format_table())


def test_criterion_08_robustness_harness(workspace, datasets, generalization_run):
    """18 kinds x 5 severities on the 128-sample test set; deterministic; monotone."""
    checkpoint_path, _ = generalization_run
    report = run_robustness(checkpoint_path, str(datasets["test"]), seed=5)
    assert [row["severity"] for row in report.rows] == [0, 1, 2, 3, 4, 5]
    for row in report.rows[1:]:
        assert len(row["per_kind"]) == 18

    clean = evaluate(checkpoint_path, str(datasets["test"]))
    assert report.rows[0]["accuracy"] == clean.accuracy
    assert report.rows[0]["macro_f"] == clean.macro_f
    assert report.rows[0]["miou"] == clean.miou

    for definition in list_corruptions():
        for lo, hi in zip(definition.levels, definition.levels[1:]):
            assert hi > lo, definition.name

    repeat = run_robustness(checkpoint_path, str(datasets["test"]), seed=5)
    assert repeat.to_dict() == report.to_dict()
    print("\nACCEPTANCE 8 PASS: robustness harness deterministic; severity-0 row equals "
          "clean evaluation; schedules monotone")
    print(report.format_table())


def test_criterion_09_determinism(workspace, datasets):
    """Identical (config, seed) runs agree to 1e-12; files and corruptions bitwise equal."""
    config = TrainConfig(seed=3, embed_dim=32, num_heads=4, coattn_depth=1, encoder_depth=1,
                         epochs=3, batch_size=16, learning_rate=1e-3,
                         fusion_strategy="catvil_t2v",
                         train_data=str(datasets["overfit"]),
                         out_dir=str(workspace / "det_a"))
    _, report_a = train(config)
    _, report_b = train(replace(config, out_dir=str(workspace / "det_b")))
    for key in ("accuracy", "macro_f", "miou"):
        a = getattr(report_a.final_metrics, key)
        b = getattr(report_b.final_metrics, key)
        assert abs(a - b) <= 1e-12, f"{key}: {a} vs {b}"
    assert report_a.epoch_losses == report_b.epoch_losses

    samples_a = generate_dataset(20, 13)
    samples_b = generate_dataset(20, 13)
    write_dataset(samples_a, workspace / "ds_a")
    write_dataset(samples_b, workspace / "ds_b")
    for name in sorted(p.name for p in (workspace / "ds_a").iterdir()):
        assert (workspace / "ds_a" / name).read_bytes() == (workspace / "ds_b" / name).read_bytes()

    image = samples_a[0].image
    for definition in list_corruptions():
        spec = CorruptionSpec(definition.name, 4, seed=9)
        assert np.array_equal(corrupt(image, spec), corrupt(image, spec))
    print("\nACCEPTANCE 9 PASS: training metrics, dataset files, and corruption outputs "
          "reproduce exactly")


def test_criterion_10_round_trips(workspace, datasets):
    """Dataset write/read identity; checkpoint reload reproduces metrics exactly."""
    samples = generate_dataset(10, 17)
    write_dataset(samples, workspace / "rt")
    from vqla.data import read_dataset
    loaded = read_dataset(workspace / "rt")
    assert len(loaded) == 10
    for a, b in zip(samples, loaded):
        assert np.array_equal(a.image, b.image) and a.image.dtype == b.image.dtype
        assert a.question == b.question and a.answer_id == b.answer_id and a.box == b.box

    config = TrainConfig(seed=1, embed_dim=32, num_heads=4, coattn_depth=1, encoder_depth=1,
                         epochs=2, batch_size=16, learning_rate=1e-3,
                         fusion_strategy="catvil_t2v",
                         train_data=str(datasets["overfit"]),
                         out_dir=str(workspace / "rt_run"))
    checkpoint_path, _ = train(config)
    before = evaluate(checkpoint_path, str(datasets["overfit"]))
    model, vocab, payload = load_checkpoint(checkpoint_path)
    assert payload["seed"] == 1 and payload["model_config"]["embed_dim"] == 32
    reloaded, _, _ = load_checkpoint(checkpoint_path)
    for (_, pa), (_, pb) in zip(model.named_parameters(), reloaded.named_parameters()):
        assert torch.equal(pa, pb)
    after = evaluate(checkpoint_path, str(datasets["overfit"]))
    assert before.to_dict() == after.to_dict()
    print("\nACCEPTANCE 10 PASS: dataset and checkpoint round trips are exact")
