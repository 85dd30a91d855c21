"""Synthetic surgical-style VQLA data: procedural scenes, questions, and dataset files.

Scenes contain one organ (a flat-colored ellipse) and one tool (a flat-colored
triangle) on a textured noise background. Questions come in three kinds --
organ, tool, interaction -- with single-word answers drawn from a fixed
18-class vocabulary (6 organs + 6 tools + 6 interactions). The ground-truth
box is the queried object's tight box, or the union of the tool and organ
boxes for interaction questions.
"""

from __future__ import annotations

import json
import struct
from colorsys import hsv_to_rgb
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_SIZE = 64
MIN_EXTENT_PX = 8  # smallest object side, in pixels, at the default resolution

ORGAN_NAMES = ("kidney", "liver", "spleen", "stomach", "bladder", "colon")
TOOL_NAMES = ("grasper", "scissors", "clipper", "forceps", "hook", "suction")
# One interaction per tool: the acting tool determines the interaction class.
INTERACTION_NAMES = ("grasping", "cutting", "clipping", "retracting", "hooking", "suctioning")
ANSWER_NAMES = ORGAN_NAMES + TOOL_NAMES + INTERACTION_NAMES
NUM_CLASSES = len(ANSWER_NAMES)

QUESTION_KINDS = ("organ", "tool", "interaction")

QUESTION_TEMPLATES = {
    "organ": (
        "what organ is visible in the scene",
        "which organ appears in this image",
        "name the organ shown here",
    ),
    "tool": (
        "what tool is used in the scene",
        "which instrument appears in this image",
        "name the tool shown here",
    ),
    "interaction": (
        "what is the tool doing to the organ",
        "which interaction occurs in this image",
        "name the action shown here",
    ),
}


def _palette(offset_deg: float, saturation: float, value: float) -> np.ndarray:
    hues = [((offset_deg + 60.0 * k) % 360.0) / 360.0 for k in range(6)]
    return np.array([hsv_to_rgb(h, saturation, value) for h in hues], dtype=np.float64)


ORGAN_COLORS = _palette(0.0, 0.90, 0.85)
TOOL_COLORS = _palette(30.0, 0.55, 0.98)


@dataclass(frozen=True)
class BoundingBox:
    """Normalized corner-form box with 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(f"invalid box corners: {(self.x1, self.y1, self.x2, self.y2)}")

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(
            min(self.x1, other.x1),
            min(self.y1, other.y1),
            max(self.x2, other.x2),
            max(self.y2, other.y2),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


@dataclass(frozen=True)
class OrganSpec:
    """Axis-aligned ellipse, pixel units."""

    class_id: int
    cx: float
    cy: float
    rx: float
    ry: float

    def tight_box(self, image_size: int) -> BoundingBox:
        return BoundingBox(
            (self.cx - self.rx) / image_size,
            (self.cy - self.ry) / image_size,
            (self.cx + self.rx) / image_size,
            (self.cy + self.ry) / image_size,
        )


@dataclass(frozen=True)
class ToolSpec:
    """Triangle given by three corner points, pixel units."""

    class_id: int
    vertices: tuple[tuple[float, float], ...]

    def tight_box(self, image_size: int) -> BoundingBox:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return BoundingBox(
            min(xs) / image_size,
            min(ys) / image_size,
            max(xs) / image_size,
            max(ys) / image_size,
        )


@dataclass(frozen=True)
class SceneSpec:
    organ: OrganSpec
    tools: tuple[ToolSpec, ...]
    interaction_id: int
    image_size: int = IMAGE_SIZE


@dataclass
class VQLASample:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    question: str
    answer_id: int
    box: BoundingBox


def generate_scene(seed: int) -> SceneSpec:
    """Deterministic scene for a seed: one organ ellipse plus one tool triangle."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    rng = np.random.default_rng(seed)
    size = IMAGE_SIZE

    organ_class = int(rng.integers(len(ORGAN_NAMES)))
    rx = rng.uniform(8.0, 14.0)
    ry = rng.uniform(8.0, 14.0)
    cx = rng.uniform(rx + 1.0, size - rx - 1.0)
    cy = rng.uniform(ry + 1.0, size - ry - 1.0)
    organ = OrganSpec(organ_class, cx, cy, rx, ry)

    tool_class = int(rng.integers(len(TOOL_NAMES)))
    # Equilateral triangle with circumradius >= 6 px has a bounding box of at
    # least 1.5 * 6 = 9 px per axis, clearing MIN_EXTENT_PX at any rotation.
    radius = rng.uniform(6.0, 11.0)
    tx = rng.uniform(radius + 1.0, size - radius - 1.0)
    ty = rng.uniform(radius + 1.0, size - radius - 1.0)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    vertices = tuple(
        (tx + radius * np.cos(theta + k * 2.0 * np.pi / 3.0),
         ty + radius * np.sin(theta + k * 2.0 * np.pi / 3.0))
        for k in range(3)
    )
    tool = ToolSpec(tool_class, vertices)

    return SceneSpec(organ=organ, tools=(tool,), interaction_id=tool_class)


def _triangle_mask(vertices, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    (x0, y0), (x1, y1), (x2, y2) = vertices

    def edge(ax, ay, bx, by):
        return (px - ax) * (by - ay) - (py - ay) * (bx - ax)

    d0 = edge(x0, y0, x1, y1)
    d1 = edge(x1, y1, x2, y2)
    d2 = edge(x2, y2, x0, y0)
    return ((d0 <= 0) & (d1 <= 0) & (d2 <= 0)) | ((d0 >= 0) & (d1 >= 0) & (d2 >= 0))


def render_scene(scene: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Rasterize a scene at pixel centers over a textured noise background."""
    size = scene.image_size
    image = rng.uniform(0.20, 0.45, size=(size, size, 3))
    yy, xx = np.mgrid[0:size, 0:size]
    px = xx + 0.5
    py = yy + 0.5

    organ = scene.organ
    inside = ((px - organ.cx) / organ.rx) ** 2 + ((py - organ.cy) / organ.ry) ** 2 <= 1.0
    image[inside] = ORGAN_COLORS[organ.class_id]
    for tool in scene.tools:
        image[_triangle_mask(tool.vertices, px, py)] = TOOL_COLORS[tool.class_id]
    return image.astype(np.float32)


def render_sample(scene: SceneSpec, question_kind: str, seed: int) -> VQLASample:
    """Render the scene and attach a question of the given kind with its answer and box."""
    if question_kind not in QUESTION_KINDS:
        raise ValueError(f"unknown question kind: {question_kind!r}")
    rng = np.random.default_rng(seed)
    image = render_scene(scene, rng)
    question = QUESTION_TEMPLATES[question_kind][int(rng.integers(3))]

    size = scene.image_size
    tool = scene.tools[0]
    if question_kind == "organ":
        answer_id = scene.organ.class_id
        box = scene.organ.tight_box(size)
    elif question_kind == "tool":
        answer_id = len(ORGAN_NAMES) + tool.class_id
        box = tool.tight_box(size)
    else:
        answer_id = len(ORGAN_NAMES) + len(TOOL_NAMES) + scene.interaction_id
        box = tool.tight_box(size).union(scene.organ.tight_box(size))
    return VQLASample(image=image, question=question, answer_id=answer_id, box=box)


def make_sample(seed: int, index: int) -> VQLASample:
    """Pure function of (seed, index); safe to parallelize over indices."""
    state = np.random.SeedSequence([seed, index]).generate_state(3)
    kind = QUESTION_KINDS[int(state[2]) % len(QUESTION_KINDS)]
    scene = generate_scene(int(state[0]))
    return render_sample(scene, kind, int(state[1]))


def generate_dataset(num_samples: int, seed: int) -> list[VQLASample]:
    return [make_sample(seed, index) for index in range(num_samples)]


# On-disk format: a directory with manifest.jsonl (one record per sample) plus
# one binary image file per sample: magic "VQLA", three little-endian uint32
# (H, W, C), then H*W*C little-endian float32 values in row-major order.

MAGIC = b"VQLA"
MANIFEST_NAME = "manifest.jsonl"
_HEADER_SIZE = len(MAGIC) + 12


class DatasetFormatError(ValueError):
    """Raised when a dataset file violates the on-disk format."""


def write_image(path, image: np.ndarray) -> None:
    arr = np.ascontiguousarray(image, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"expected an (H, W, C) image, got shape {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(arr.tobytes())


def read_image(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {blob[:len(MAGIC)]!r} at byte offset 0")
    if len(blob) < _HEADER_SIZE:
        raise DatasetFormatError(f"{path}: truncated header, file ends at byte offset {len(blob)}")
    h, w, c = struct.unpack("<III", blob[len(MAGIC):_HEADER_SIZE])
    expected = _HEADER_SIZE + h * w * c * 4
    if len(blob) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes for a {h}x{w}x{c} image, "
            f"file ends at byte offset {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER_SIZE)
    return data.reshape(h, w, c).copy()


def write_dataset(samples, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for index, sample in enumerate(samples):
        name = f"sample_{index:06d}.bin"
        write_image(root / name, sample.image)
        lines.append(json.dumps({
            "question": sample.question,
            "answer_id": int(sample.answer_id),
            "box": [sample.box.x1, sample.box.y1, sample.box.x2, sample.box.y2],
            "image": name,
        }))
    (root / MANIFEST_NAME).write_text("".join(line + "\n" for line in lines))


def read_dataset(path) -> list[VQLASample]:
    root = Path(path)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise DatasetFormatError(f"{manifest}: missing manifest")
    samples = []
    for line_no, line in enumerate(manifest.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{manifest}:{line_no}: malformed record: {exc}") from exc
        samples.append(VQLASample(
            image=read_image(root / record["image"]),
            question=record["question"],
            answer_id=int(record["answer_id"]),
            box=BoundingBox(*record["box"]),
        ))
    return samples
