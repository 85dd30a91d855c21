"""Run configuration: flat key-value files and named presets."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-4
    seed: int = 0
    embed_dim: int = 64
    num_heads: int = 4
    text_len: int = 16
    patch_size: int = 8
    encoder_kind: str = "patch"
    fusion_strategy: str = "catvil_t2v"
    coattn_depth: int = 2
    encoder_depth: int = 2
    scalar_gate: bool = False
    ce_weight: float = 1.0
    giou_weight: float = 1.0
    l1_weight: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    train_data: str = ""
    eval_data: str = ""
    out_dir: str = "runs/latest"


# "desk" keeps the dataclass defaults; "paper_scale" restores the published
# budget (80 epochs, batch 64, lr 1e-5, six co-attention layers).
PRESETS = {
    "desk": {},
    "paper_scale": {
        "epochs": 80,
        "batch_size": 64,
        "learning_rate": 1e-5,
        "coattn_depth": 6,
    },
}

_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind in (bool, "bool"):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean for {key}: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def config_from_pairs(pairs: dict[str, str]) -> TrainConfig:
    pairs = dict(pairs)
    preset_name = pairs.pop("preset", "desk")
    if preset_name not in PRESETS:
        raise ValueError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
    values: dict = dict(PRESETS[preset_name])
    for key, raw in pairs.items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key: {key!r}")
        values[key] = _coerce(key, raw)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    """Parse one `key = value` per line; blank lines and '#' comments ignored."""
    pairs: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        pairs[key.strip()] = raw.strip()
    return config_from_pairs(pairs)


def save_config(config: TrainConfig, path) -> None:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(TrainConfig)]
    Path(path).write_text("\n".join(lines) + "\n")
