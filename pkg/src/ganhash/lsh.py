"""Locality sensitive hashing baseline: Gaussian random projections with
per-bit median thresholds.

At desk scale the input feature space is raw flattened pixels, so model
and baseline are compared on identical inputs. Median thresholding keeps
bits balanced on un-centered features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import EmptyInputError
from .retrieval import HashCode, RetrievalIndex, pack_bits


@dataclass(frozen=True)
class LshModel:
    projection: np.ndarray  # (K, d) standard normal entries
    thresholds: np.ndarray  # (K,) per-bit medians of projected training data

    @property
    def code_bits(self) -> int:
        return self.projection.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.projection.shape[1]


def pixel_features(ds: Dataset) -> np.ndarray:
    """Raw flattened pixels as the baseline feature space."""
    return ds.pixels.reshape(len(ds), -1).astype(np.float64)


def fit_lsh(features: np.ndarray, code_bits: int, seed: int = 0) -> LshModel:
    """Sample a seeded Gaussian projection and median thresholds."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise EmptyInputError("fit_lsh needs a nonempty (N, d) feature matrix")
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((code_bits, features.shape[1]))
    projected = features @ projection.T
    thresholds = np.median(projected, axis=0)
    return LshModel(projection=projection, thresholds=thresholds)


def lsh_encode(model: LshModel, feature: np.ndarray) -> HashCode:
    """bit_i = 1 iff projection_i . feature > threshold_i (strict)."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (model.feature_dim,):
        raise ValueError(f"expected feature of dim {model.feature_dim}, got {feature.shape}")
    bits = (model.projection @ feature) > model.thresholds
    return HashCode(words=pack_bits(bits), nbits=model.code_bits)


def lsh_encode_many(model: LshModel, features: np.ndarray) -> list[HashCode]:
    features = np.asarray(features, dtype=np.float64)
    bits = (features @ model.projection.T) > model.thresholds[None, :]
    packed = pack_bits(bits)
    return [HashCode(packed[i], model.code_bits) for i in range(features.shape[0])]


def build_lsh_index(db: Dataset, model: LshModel) -> RetrievalIndex:
    """Encode the database with the baseline; labels mirror the model index."""
    if len(db) == 0:
        raise EmptyInputError("cannot build an index over an empty dataset")
    codes = pack_bits(
        (pixel_features(db) @ model.projection.T) > model.thresholds[None, :]
    )
    return RetrievalIndex(
        codes=codes,
        ids=db.ids.astype(np.int64),
        labels=db.true_labels.astype(np.uint8),
        nbits=model.code_bits,
    )
