"""Image datasets: CIFAR-10 binary batches, a procedural toy set, and the
labeled/unlabeled supervised split.

Pixels are float32 in [-1, 1], channels-last (H, W, 3). Labels are binary
indicator vectors over ``class_count`` classes; an unlabeled example carries
the all-zero vector. Every dataset also keeps a hidden ``true_labels`` array
that survives label zeroing — it exists purely so retrieval quality can be
measured on the full pool and must never feed training.
"""

from __future__ import annotations

import colorsys
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigError,
    InfeasibleSplitError,
    InvalidLabelError,
    MalformedFileError,
)
from .io import load_arrays, save_arrays

SOURCE_REAL = "real"
SOURCE_SYNTHETIC = "synthetic"

CIFAR10_CLASSES = 10
CIFAR10_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes, channel-planar


@dataclass(frozen=True)
class ImageExample:
    """One image with its label vector and provenance flags."""

    pixels: np.ndarray  # (H, W, 3) float32 in [-1, 1]
    label: np.ndarray  # (c,) uint8 indicator vector
    is_labeled: bool
    source: str  # SOURCE_REAL or SOURCE_SYNTHETIC
    id: int
    true_label: np.ndarray | None = None  # evaluation-only ground truth


@dataclass
class Dataset:
    """Array-backed collection of examples sharing one label space."""

    pixels: np.ndarray  # (N, H, W, 3) float32
    labels: np.ndarray  # (N, c) uint8, zero rows for unlabeled examples
    is_labeled: np.ndarray  # (N,) bool
    ids: np.ndarray  # (N,) int64, unique
    class_count: int
    label_mode: str  # "single" | "multi"
    true_labels: np.ndarray = None  # (N, c) uint8, evaluation-only
    seed: int | None = None

    def __post_init__(self):
        if self.true_labels is None:
            self.true_labels = self.labels.copy()
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("dataset ids must be unique")

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def __getitem__(self, i: int) -> ImageExample:
        return ImageExample(
            pixels=self.pixels[i],
            label=self.labels[i],
            is_labeled=bool(self.is_labeled[i]),
            source=SOURCE_REAL,
            id=int(self.ids[i]),
            true_label=self.true_labels[i],
        )

    @property
    def image_size(self) -> int:
        return self.pixels.shape[1]

    def class_indices(self, j: int, labels: np.ndarray | None = None) -> np.ndarray:
        """Positions of examples whose label vector includes class ``j``."""
        labels = self.labels if labels is None else labels
        return np.nonzero(labels[:, j] > 0)[0]

    def select(self, idx: np.ndarray) -> "Dataset":
        return replace(
            self,
            pixels=self.pixels[idx],
            labels=self.labels[idx],
            is_labeled=self.is_labeled[idx],
            ids=self.ids[idx],
            true_labels=self.true_labels[idx],
        )


def _empty_dataset(image_size: int, class_count: int, label_mode: str) -> Dataset:
    return Dataset(
        pixels=np.zeros((0, image_size, image_size, 3), dtype=np.float32),
        labels=np.zeros((0, class_count), dtype=np.uint8),
        is_labeled=np.zeros((0,), dtype=bool),
        ids=np.zeros((0,), dtype=np.int64),
        class_count=class_count,
        label_mode=label_mode,
    )


# ---------------------------------------------------------------------------
# CIFAR-10 binary batch format
# ---------------------------------------------------------------------------

def load_cifar10(path) -> Dataset:
    """Read CIFAR-10 binary batches from a file or a directory of ``*.bin``.

    Each record is 3073 bytes: one label byte in [0, 9] followed by 3072
    pixel bytes laid out as three 32x32 row-major planes (R, G, B). Pixel
    bytes map linearly onto [-1, 1] (0 -> -1.0, 255 -> +1.0).
    """
    if os.path.isdir(path):
        files = sorted(
            os.path.join(path, f) for f in os.listdir(path) if f.endswith(".bin")
        )
        if not files:
            raise MalformedFileError(f"{path}: no CIFAR-10 .bin batch files found")
    else:
        files = [path]

    raws = []
    for f in files:
        raw = np.fromfile(f, dtype=np.uint8)
        if raw.size % CIFAR10_RECORD_BYTES != 0:
            raise MalformedFileError(
                f"{f}: {raw.size} bytes is not a multiple of {CIFAR10_RECORD_BYTES}"
            )
        raws.append(raw.reshape(-1, CIFAR10_RECORD_BYTES))
    records = np.concatenate(raws, axis=0)

    n = records.shape[0]
    if n == 0:
        return _empty_dataset(32, CIFAR10_CLASSES, "single")

    label_bytes = records[:, 0]
    if label_bytes.max() >= CIFAR10_CLASSES:
        bad = int(label_bytes.max())
        raise InvalidLabelError(f"label byte {bad} out of range [0, 9]")

    planes = records[:, 1:].reshape(n, 3, 32, 32)
    pixels = planes.transpose(0, 2, 3, 1).astype(np.float32) / 255.0 * 2.0 - 1.0
    labels = np.zeros((n, CIFAR10_CLASSES), dtype=np.uint8)
    labels[np.arange(n), label_bytes] = 1
    return Dataset(
        pixels=pixels,
        labels=labels,
        is_labeled=np.ones(n, dtype=bool),
        ids=np.arange(n, dtype=np.int64),
        class_count=CIFAR10_CLASSES,
        label_mode="single",
    )


def save_cifar10(path, ds: Dataset) -> None:
    """Write a single-label 32x32 dataset back to CIFAR-10 binary records."""
    if ds.label_mode != "single" or ds.class_count != CIFAR10_CLASSES:
        raise ValueError("CIFAR-10 records require single-label mode with 10 classes")
    if ds.pixels.shape[1:] != (32, 32, 3):
        raise ValueError("CIFAR-10 records require 32x32x3 pixels")
    n = len(ds)
    records = np.empty((n, CIFAR10_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = np.argmax(ds.labels, axis=1)
    planes = np.rint((ds.pixels + 1.0) / 2.0 * 255.0).astype(np.uint8)
    records[:, 1:] = planes.transpose(0, 3, 1, 2).reshape(n, 3072)
    records.tofile(path)


# ---------------------------------------------------------------------------
# Procedural toy dataset
# ---------------------------------------------------------------------------

def _mask_disk(xx, yy, p):
    r2 = (xx - p["cx"]) ** 2 + (yy - p["cy"]) ** 2
    return r2 <= (0.30 * p["scale"]) ** 2


def _mask_frame(xx, yy, p):
    half = 0.34 * p["scale"]
    dx = np.abs(xx - p["cx"])
    dy = np.abs(yy - p["cy"])
    outer = (dx <= half) & (dy <= half)
    inner = (dx <= half - 0.14) & (dy <= half - 0.14)
    return outer & ~inner


def _mask_diag(xx, yy, p):
    return ((xx + yy) * 2.0 * p["scale"] + p["phase"]) % 1.0 < 0.5


def _mask_cross(xx, yy, p):
    w = 0.12 * p["scale"]
    arm = 0.36 * p["scale"]
    dx = np.abs(xx - p["cx"])
    dy = np.abs(yy - p["cy"])
    return ((dx <= w) & (dy <= arm)) | ((dy <= w) & (dx <= arm))


def _mask_checker(xx, yy, p):
    fx = np.floor((xx * 2.0 * p["scale"] + p["phase"]) * 2.0)
    fy = np.floor((yy * 2.0 * p["scale"]) * 2.0)
    return (fx + fy) % 2 < 1


def _mask_triangle(xx, yy, p):
    return (yy - p["cy"] + 0.35) >= (np.abs(xx - p["cx"]) * 1.8 / p["scale"])


def _mask_hbars(xx, yy, p):
    return (yy * 2.0 * p["scale"] + p["phase"]) % 1.0 < 0.5


def _mask_ring(xx, yy, p):
    r2 = (xx - p["cx"]) ** 2 + (yy - p["cy"]) ** 2
    outer = (0.38 * p["scale"]) ** 2
    inner = (0.20 * p["scale"]) ** 2
    return (r2 <= outer) & (r2 >= inner)


_TOY_PATTERNS = [
    _mask_disk,
    _mask_frame,
    _mask_diag,
    _mask_cross,
    _mask_checker,
    _mask_triangle,
    _mask_hbars,
    _mask_ring,
]


def _render_pattern(size: int, class_id: int, class_count: int, rng) -> tuple:
    """Returns (mask, rgb) for one jittered instance of a class pattern."""
    base_hue = class_id / class_count
    hue = (base_hue + rng.uniform(-0.04, 0.04)) % 1.0
    sat = rng.uniform(0.7, 1.0)
    val = rng.uniform(0.55, 1.0)  # brightness jitter; defeats raw-pixel projections
    rgb = np.array(colorsys.hsv_to_rgb(hue, sat, val), dtype=np.float32) * 2.0 - 1.0

    params = {
        "cx": 0.5 + rng.uniform(-0.12, 0.12),
        "cy": 0.5 + rng.uniform(-0.12, 0.12),
        "scale": rng.uniform(0.8, 1.2),
        "phase": rng.uniform(0.0, 1.0),
    }
    coords = (np.arange(size, dtype=np.float64) + 0.5) / size
    xx, yy = np.meshgrid(coords, coords)
    mask = _TOY_PATTERNS[class_id](xx, yy, params)
    return mask, rgb


def make_toy_dataset(
    class_count: int,
    per_class: int,
    image_size: int,
    label_mode: str = "single",
    seed: int = 0,
) -> Dataset:
    """Procedural dataset: each class is a distinct hue + shape pattern.

    Deterministic given ``seed``. In multi mode each example carries 1-3
    labels and renders the union of the corresponding patterns.
    """
    if class_count < 2 or per_class < 1 or image_size < 8:
        raise ValueError("need class_count >= 2, per_class >= 1, image_size >= 8")
    if class_count > len(_TOY_PATTERNS):
        raise ConfigError(
            f"class_count {class_count} exceeds the {len(_TOY_PATTERNS)} available patterns"
        )
    if label_mode not in ("single", "multi"):
        raise ConfigError(f"unknown label_mode {label_mode!r}")

    rng = np.random.default_rng(seed)
    n = class_count * per_class
    pixels = np.empty((n, image_size, image_size, 3), dtype=np.float32)
    labels = np.zeros((n, class_count), dtype=np.uint8)

    for i in range(n):
        if label_mode == "single":
            classes = [i // per_class]
        else:
            k = int(rng.integers(1, min(3, class_count) + 1))
            classes = list(rng.choice(class_count, size=k, replace=False))
        labels[i, classes] = 1

        bg = rng.uniform(-0.9, -0.5)
        img = np.full((image_size, image_size, 3), bg, dtype=np.float32)
        for cls in classes:
            mask, rgb = _render_pattern(image_size, cls, class_count, rng)
            img[mask] = rgb
        img += rng.normal(0.0, 0.08, size=img.shape).astype(np.float32)
        pixels[i] = np.clip(img, -1.0, 1.0)

    return Dataset(
        pixels=pixels,
        labels=labels,
        is_labeled=np.ones(n, dtype=bool),
        ids=np.arange(n, dtype=np.int64),
        class_count=class_count,
        label_mode=label_mode,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Supervised split
# ---------------------------------------------------------------------------

def split_supervised(
    ds: Dataset, labeled_per_class: int, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Sample ``labeled_per_class`` examples per class; zero the rest's labels.

    The unlabeled half keeps its hidden true labels for evaluation but its
    visible label vectors become all-zero and ``is_labeled`` flips to False.
    In multi mode the per-class quota is a minimum (picks overlap classes).
    """
    rng = np.random.default_rng(seed)
    candidates = set(np.nonzero(ds.is_labeled)[0].tolist())
    chosen: list = []
    chosen_set: set = set()
    for j in range(ds.class_count):
        members = [
            int(i)
            for i in ds.class_indices(j)
            if int(i) in candidates and int(i) not in chosen_set
        ]
        already = sum(1 for i in chosen if ds.labels[i, j] > 0)
        need = labeled_per_class - already
        if need > len(members):
            raise InfeasibleSplitError(
                f"class {j} has {len(members) + already} available members, "
                f"need {labeled_per_class}"
            )
        if need > 0:
            pick = rng.choice(len(members), size=need, replace=False)
            for k in sorted(int(p) for p in pick):
                chosen.append(members[k])
                chosen_set.add(members[k])

    chosen_idx = np.array(sorted(chosen), dtype=np.int64)
    rest_idx = np.array(
        [i for i in range(len(ds)) if i not in chosen_set], dtype=np.int64
    )

    labeled = ds.select(chosen_idx)
    unlabeled = ds.select(rest_idx)
    unlabeled.labels = np.zeros_like(unlabeled.labels)
    unlabeled.is_labeled = np.zeros(len(unlabeled), dtype=bool)
    return labeled, unlabeled


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_dataset(path, ds: Dataset) -> None:
    """Serialize a dataset to the array-container format."""
    save_arrays(
        path,
        {
            "pixels": ds.pixels,
            "labels": ds.labels,
            "is_labeled": ds.is_labeled,
            "ids": ds.ids,
            "true_labels": ds.true_labels,
        },
        meta={
            "kind": "dataset",
            "class_count": ds.class_count,
            "label_mode": ds.label_mode,
            "seed": ds.seed,
        },
    )


def load_dataset(path) -> Dataset:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "dataset":
        raise MalformedFileError(f"{path}: container does not hold a dataset")
    return Dataset(
        pixels=arrays["pixels"],
        labels=arrays["labels"],
        is_labeled=arrays["is_labeled"].astype(bool),
        ids=arrays["ids"],
        class_count=int(meta["class_count"]),
        label_mode=meta["label_mode"],
        true_labels=arrays["true_labels"],
        seed=meta["seed"],
    )
