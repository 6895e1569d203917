"""Real/synthetic triplet sampling.

Each triplet pairs a real labeled query with a positive sharing its exact
label set and a negative whose labels are disjoint from the query's. With
probability ``synthetic_fraction`` a positive/negative is synthesized by
the generator (fresh noise per slot); otherwise it is drawn from the real
labeled pool under the same label constraints. Negative label sets follow
the empirical label-set distribution of the labeled pool, rejection-sampled
until disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SOURCE_REAL, SOURCE_SYNTHETIC, Dataset, ImageExample
from .errors import InfeasibleSamplingError
from .gan import GanState, generate_batch

MAX_RETRIES = 100


@dataclass(frozen=True)
class RealSyntheticTriplet:
    query: ImageExample
    positive: ImageExample
    negative: ImageExample

    def validate(self) -> None:
        if self.query.source != SOURCE_REAL:
            raise ValueError("triplet query must be a real image")
        if not np.array_equal(self.positive.label, self.query.label):
            raise ValueError("positive label set must equal the query's")
        if np.logical_and(self.negative.label, self.query.label).any():
            raise ValueError("negative label set must be disjoint from the query's")


@dataclass
class TripletBatchSpec:
    """Index/noise description of a triplet batch, before synthesis.

    ``pos_real_idx``/``neg_real_idx`` hold -1 where the slot is synthetic;
    noise rows are drawn for every slot so the random stream advances the
    same way regardless of the real/synthetic decisions.
    """

    query_idx: np.ndarray  # (B,)
    pos_real_idx: np.ndarray  # (B,)
    neg_real_idx: np.ndarray  # (B,)
    neg_labels: np.ndarray  # (B, c) conditioning labels for negatives
    pos_z: np.ndarray  # (B, dz)
    neg_z: np.ndarray  # (B, dz)

    def __len__(self) -> int:
        return self.query_idx.shape[0]


def _sample_positive_index(labels: np.ndarray, qi: int, rng) -> int:
    q = labels[qi]
    for _ in range(MAX_RETRIES):
        j = int(rng.integers(labels.shape[0]))
        if j != qi and np.array_equal(labels[j], q):
            return j
    raise InfeasibleSamplingError(
        f"no real positive found for query {qi} within {MAX_RETRIES} retries"
    )


def _sample_negative_index(labels: np.ndarray, qi: int, rng) -> int:
    q = labels[qi]
    for _ in range(MAX_RETRIES):
        j = int(rng.integers(labels.shape[0]))
        if not np.logical_and(labels[j], q).any():
            return j
    raise InfeasibleSamplingError(
        f"no disjoint negative found for query {qi} within {MAX_RETRIES} retries"
    )


def sample_triplet_batch(
    labeled: Dataset,
    count: int,
    synthetic_fraction: float,
    noise_dim: int,
    rng: np.random.Generator,
) -> TripletBatchSpec:
    """Draw the index/noise plan for ``count`` triplets from one RNG stream."""
    if not 0.0 <= synthetic_fraction <= 1.0:
        raise ValueError("synthetic_fraction must lie in [0, 1]")
    labels = labeled.labels
    n = len(labeled)
    query_idx = np.empty(count, dtype=np.int64)
    pos_real_idx = np.full(count, -1, dtype=np.int64)
    neg_real_idx = np.full(count, -1, dtype=np.int64)
    neg_labels = np.empty((count, labeled.class_count), dtype=np.uint8)
    pos_z = rng.standard_normal((count, noise_dim))
    neg_z = rng.standard_normal((count, noise_dim))

    for i in range(count):
        qi = int(rng.integers(n))
        query_idx[i] = qi
        pos_synthetic = rng.random() < synthetic_fraction
        neg_synthetic = rng.random() < synthetic_fraction
        if not pos_synthetic:
            pos_real_idx[i] = _sample_positive_index(labels, qi, rng)
        nj = _sample_negative_index(labels, qi, rng)
        neg_labels[i] = labels[nj]
        if not neg_synthetic:
            neg_real_idx[i] = nj
    return TripletBatchSpec(
        query_idx=query_idx,
        pos_real_idx=pos_real_idx,
        neg_real_idx=neg_real_idx,
        neg_labels=neg_labels,
        pos_z=pos_z,
        neg_z=neg_z,
    )


def sample_triplets(
    labeled: Dataset,
    gan: GanState,
    count: int,
    synthetic_fraction: float = 1.0,
    seed: int = 0,
) -> list[RealSyntheticTriplet]:
    """Materialized triplet stream; deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    spec = sample_triplet_batch(
        labeled, count, synthetic_fraction, gan.config.noise_dim, rng
    )

    pos_syn = spec.pos_real_idx < 0
    neg_syn = spec.neg_real_idx < 0
    syn_labels = np.concatenate(
        [labeled.labels[spec.query_idx[pos_syn]], spec.neg_labels[neg_syn]]
    )
    syn_z = np.concatenate([spec.pos_z[pos_syn], spec.neg_z[neg_syn]])
    if syn_labels.shape[0] > 0:
        syn_pixels = generate_batch(gan, syn_labels, syn_z)
    else:
        syn_pixels = np.zeros((0,), dtype=np.float32)

    n_pos_syn = int(pos_syn.sum())
    pos_pix_iter = iter(range(n_pos_syn))
    neg_pix_iter = iter(range(n_pos_syn, syn_labels.shape[0]))

    def synthetic_example(pix_idx: int, label: np.ndarray) -> ImageExample:
        return ImageExample(
            pixels=syn_pixels[pix_idx],
            label=label.astype(np.uint8),
            is_labeled=True,
            source=SOURCE_SYNTHETIC,
            id=-1,
            true_label=label.astype(np.uint8),
        )

    triplets = []
    for i in range(count):
        query = labeled[int(spec.query_idx[i])]
        if pos_syn[i]:
            positive = synthetic_example(next(pos_pix_iter), query.label)
        else:
            positive = labeled[int(spec.pos_real_idx[i])]
        if neg_syn[i]:
            negative = synthetic_example(next(neg_pix_iter), spec.neg_labels[i])
        else:
            negative = labeled[int(spec.neg_real_idx[i])]
        t = RealSyntheticTriplet(query=query, positive=positive, negative=negative)
        t.validate()
        triplets.append(t)
    return triplets


def dump_triplet_grid(path, triplets: list[RealSyntheticTriplet], upscale: int = 8) -> None:
    """Debug aid: one row per triplet (query, positive, negative) as PNG."""
    from PIL import Image

    if not triplets:
        raise ValueError("nothing to dump")
    s = triplets[0].query.pixels.shape[0]
    rows = len(triplets)
    canvas = np.zeros((rows * (s + 1) + 1, 3 * (s + 1) + 1, 3), dtype=np.uint8)
    for r, t in enumerate(triplets):
        for c, ex in enumerate((t.query, t.positive, t.negative)):
            tile = np.rint((ex.pixels + 1.0) / 2.0 * 255.0).clip(0, 255).astype(np.uint8)
            y, x = r * (s + 1) + 1, c * (s + 1) + 1
            canvas[y : y + s, x : x + s] = tile
    img = Image.fromarray(canvas)
    img = img.resize((canvas.shape[1] * upscale, canvas.shape[0] * upscale),
                     Image.NEAREST)
    img.save(path)
