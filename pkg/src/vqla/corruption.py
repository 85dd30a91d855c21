"""Deterministic image corruptions: 18 procedural kinds, severities 1-5.

Every kind is parameterized by a 5-entry severity schedule that is strictly
increasing in strength (decreasing quantities such as photon counts are stored
as their reciprocals). Outputs are clamped to [0, 1] and are a pure function
of (image, kind, severity, seed). No external asset files are used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int = 0


@dataclass(frozen=True)
class CorruptionDef:
    name: str
    param_name: str
    levels: tuple  # strictly increasing severity schedule
    fn: Callable[[np.ndarray, float, np.random.Generator], np.ndarray]


def _gaussian_noise(x, sigma, rng):
    return x + rng.normal(0.0, sigma, x.shape)


def _shot_noise(x, inv_photons, rng):
    photons = 1.0 / inv_photons
    return rng.poisson(np.clip(x, 0.0, 1.0) * photons) / photons


def _impulse_noise(x, fraction, rng):
    out = x.copy()
    hit = rng.random(x.shape[:2]) < fraction
    salt = rng.random(x.shape[:2]) < 0.5
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def _speckle_noise(x, sigma, rng):
    return x * (1.0 + rng.normal(0.0, sigma, x.shape))


def _gaussian_blur(x, sigma, rng):
    return ndimage.gaussian_filter(x, sigma=(sigma, sigma, 0.0), mode="reflect")


def _disk_kernel(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    kernel = (xx * xx + yy * yy <= radius * radius + 0.5).astype(np.float64)
    return kernel / kernel.sum()


def _defocus_blur(x, radius, rng):
    kernel = _disk_kernel(int(radius))
    return np.stack(
        [ndimage.convolve(x[..., c], kernel, mode="reflect") for c in range(x.shape[-1])],
        axis=-1,
    )


def _line_kernel(length: int, angle: float) -> np.ndarray:
    kernel = np.zeros((length, length))
    center = (length - 1) / 2.0
    ts = np.linspace(-center, center, 2 * length)
    cols = np.clip(np.round(center + ts * np.cos(angle)).astype(int), 0, length - 1)
    rows = np.clip(np.round(center + ts * np.sin(angle)).astype(int), 0, length - 1)
    kernel[rows, cols] = 1.0
    return kernel / kernel.sum()


def _motion_blur(x, length, rng):
    kernel = _line_kernel(int(length), rng.uniform(0.0, np.pi))
    return np.stack(
        [ndimage.convolve(x[..., c], kernel, mode="reflect") for c in range(x.shape[-1])],
        axis=-1,
    )


def _zoom_at(x, factor):
    h, w = x.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [cy + (yy - cy) / factor, cx + (xx - cx) / factor]
    return np.stack(
        [ndimage.map_coordinates(x[..., c], coords, order=1, mode="reflect")
         for c in range(x.shape[-1])],
        axis=-1,
    )


def _zoom_blur(x, max_zoom, rng):
    factors = np.linspace(1.0, max_zoom, 6)
    return np.mean([_zoom_at(x, z) for z in factors], axis=0)


def _brightness(x, shift, rng):
    return x + shift


def _contrast(x, reduction, rng):
    return 0.5 + (1.0 - reduction) * (x - 0.5)


def _saturate(x, factor, rng):
    gray = x @ np.array([0.299, 0.587, 0.114])
    return gray[..., None] + factor * (x - gray[..., None])


def _gamma(x, exponent, rng):
    return np.clip(x, 0.0, 1.0) ** exponent


def _plasma(shape, rng):
    h, w = shape
    field = np.zeros((h, w))
    weight, total = 1.0, 0.0
    for cells in (4, 8, 16, 32):
        grid = rng.uniform(0.0, 1.0, (cells + 1, cells + 1))
        yy, xx = np.meshgrid(
            np.linspace(0.0, cells, h), np.linspace(0.0, cells, w), indexing="ij"
        )
        field += weight * ndimage.map_coordinates(grid, [yy, xx], order=1, mode="nearest")
        total += weight
        weight *= 0.5
    field /= total
    span = field.max() - field.min()
    return (field - field.min()) / max(span, 1e-9)


def _fog(x, strength, rng):
    veil = strength * _plasma(x.shape[:2], rng)[..., None]
    return x * (1.0 - veil) + 0.9 * veil


def _elastic_transform(x, magnitude, rng):
    h, w = x.shape[:2]
    def field():
        raw = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), 4.0, mode="reflect")
        return raw / max(np.abs(raw).max(), 1e-9) * magnitude
    dy, dx = field(), field()
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [yy + dy, xx + dx]
    return np.stack(
        [ndimage.map_coordinates(x[..., c], coords, order=1, mode="reflect")
         for c in range(x.shape[-1])],
        axis=-1,
    )


def _pixelate(x, block, rng):
    block = int(block)
    h, w = x.shape[:2]
    row_starts = np.arange(0, h, block)
    col_starts = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(x, row_starts, axis=0), col_starts, axis=1)
    counts = np.outer(np.diff(np.append(row_starts, h)), np.diff(np.append(col_starts, w)))
    means = sums / counts[..., None]
    return np.repeat(np.repeat(means, block, axis=0), block, axis=1)[:h, :w]


def _quantize(x, step, rng):
    return np.round(np.clip(x, 0.0, 1.0) / step) * step


def _block_shuffle(x, pairs, rng):
    block = 8
    h, w = x.shape[:2]
    grid_w = w // block
    chosen = rng.choice((h // block) * grid_w, size=2 * int(pairs), replace=False)
    out = x.copy()
    for a, b in zip(chosen[::2], chosen[1::2]):
        ya, xa = divmod(int(a), grid_w)
        yb, xb = divmod(int(b), grid_w)
        sa = (slice(ya * block, (ya + 1) * block), slice(xa * block, (xa + 1) * block))
        sb = (slice(yb * block, (yb + 1) * block), slice(xb * block, (xb + 1) * block))
        out[sa], out[sb] = x[sb].copy(), x[sa].copy()
    return out


def _occlusion(x, area_fraction, rng):
    h, w = x.shape[:2]
    area = area_fraction * h * w
    aspect = rng.uniform(0.5, 2.0)
    rect_w = int(np.clip(round(np.sqrt(area * aspect)), 2, w))
    rect_h = int(np.clip(round(area / rect_w), 2, h))
    x0 = int(rng.integers(0, w - rect_w + 1))
    y0 = int(rng.integers(0, h - rect_h + 1))
    out = x.copy()
    out[y0:y0 + rect_h, x0:x0 + rect_w] = 0.0
    return out


REGISTRY = (
    CorruptionDef("gaussian_noise", "sigma", (0.04, 0.07, 0.10, 0.14, 0.19), _gaussian_noise),
    CorruptionDef("shot_noise", "inverse_photons", (1 / 80, 1 / 40, 1 / 20, 1 / 10, 1 / 5), _shot_noise),
    CorruptionDef("impulse_noise", "fraction", (0.02, 0.04, 0.07, 0.11, 0.16), _impulse_noise),
    CorruptionDef("speckle_noise", "sigma", (0.08, 0.14, 0.22, 0.32, 0.45), _speckle_noise),
    CorruptionDef("gaussian_blur", "sigma", (0.6, 1.0, 1.5, 2.2, 3.0), _gaussian_blur),
    CorruptionDef("defocus_blur", "radius", (1, 2, 3, 5, 7), _defocus_blur),
    CorruptionDef("motion_blur", "length", (3, 5, 9, 13, 17), _motion_blur),
    CorruptionDef("zoom_blur", "max_zoom", (1.06, 1.12, 1.18, 1.26, 1.34), _zoom_blur),
    CorruptionDef("brightness", "shift", (0.08, 0.14, 0.22, 0.32, 0.45), _brightness),
    CorruptionDef("contrast", "reduction", (0.25, 0.40, 0.55, 0.70, 0.83), _contrast),
    CorruptionDef("saturate", "factor", (1.4, 1.9, 2.5, 3.2, 4.0), _saturate),
    CorruptionDef("gamma", "exponent", (1.3, 1.6, 2.0, 2.5, 3.1), _gamma),
    CorruptionDef("fog", "strength", (0.15, 0.25, 0.35, 0.45, 0.55), _fog),
    CorruptionDef("elastic_transform", "magnitude_px", (2.0, 3.5, 5.0, 7.0, 9.5), _elastic_transform),
    CorruptionDef("pixelate", "block", (2, 3, 4, 6, 8), _pixelate),
    CorruptionDef("quantize", "step", (1 / 23, 1 / 15, 1 / 9, 1 / 6, 1 / 4), _quantize),
    CorruptionDef("block_shuffle", "swap_pairs", (2, 4, 7, 10, 14), _block_shuffle),
    CorruptionDef("occlusion", "area_fraction", (0.05, 0.09, 0.14, 0.20, 0.27), _occlusion),
)

_REGISTRY_INDEX = {d.name: (i, d) for i, d in enumerate(REGISTRY)}


def list_corruptions() -> list[CorruptionDef]:
    """All registered kinds, in stable registry order."""
    return list(REGISTRY)


def corrupt(image: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Apply one corruption; output is clamped to [0, 1] and keeps the input dtype."""
    if spec.kind not in _REGISTRY_INDEX:
        raise ValueError(f"unknown corruption kind: {spec.kind!r}")
    if not 1 <= spec.severity <= 5:
        raise ValueError(f"severity must be in [1, 5], got {spec.severity}")
    if spec.seed < 0:
        raise ValueError(f"seed must be non-negative, got {spec.seed}")
    kind_index, definition = _REGISTRY_INDEX[spec.kind]
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, kind_index, spec.severity]))
    image = np.asarray(image)
    out = definition.fn(image.astype(np.float64), definition.levels[spec.severity - 1], rng)
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def registry_table() -> str:
    """Text table of kinds and severity schedules, for CLI auditing."""
    header = f"{'kind':<18} {'parameter':<16} severities 1..5"
    lines = [header, "-" * len(header)]
    for d in REGISTRY:
        levels = " ".join(f"{v:g}" for v in d.levels)
        lines.append(f"{d.name:<18} {d.param_name:<16} {levels}")
    return "\n".join(lines) + "\n"
