"""Hamming-space retrieval: quantization, packed-code distance, linear-scan
ranking and radius lookup, plus the on-disk code export format.

Codes are stored packed, 64 bits per little-endian word, padding bits zero.
Ranking is a full sort by ascending Hamming distance with ties broken by
ascending id so every downstream metric is reproducible.

Code export file layout (all integers little-endian):

    bytes 0..7   magic ``b"GHCODE1\\n"``
    u32          K (bits per code)
    u32          words per code (= ceil(K / 64))
    u64          entry count N
    u32          label dimension c
    payload      N*W u64 code words, N i64 ids, N*c u8 label vectors
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import EmptyInputError, MalformedFileError
from .model import HashModel, relaxed_codes

CODES_MAGIC = b"GHCODE1\n"


@dataclass(frozen=True)
class HashCode:
    words: np.ndarray  # (W,) uint64, little-endian packed, padding bits zero
    nbits: int

    def __post_init__(self):
        expected = (self.nbits + 63) // 64
        if self.words.shape != (expected,):
            raise ValueError(f"need {expected} words for {self.nbits} bits")

    def bits(self) -> np.ndarray:
        """Unpacked (K,) uint8 view of the code."""
        as_bytes = self.words.astype("<u8").view(np.uint8)
        return np.unpackbits(as_bytes, bitorder="little")[: self.nbits]


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(..., K) 0/1 array -> (..., W) uint64 words, zero padded."""
    bits = np.asarray(bits, dtype=np.uint8)
    nbits = bits.shape[-1]
    nwords = (nbits + 63) // 64
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = nwords * 8 - packed.shape[-1]
    if pad:
        packed = np.concatenate(
            [packed, np.zeros(packed.shape[:-1] + (pad,), dtype=np.uint8)], axis=-1
        )
    return packed.view("<u8").astype(np.uint64)


def quantize(h: np.ndarray) -> HashCode:
    """Threshold a relaxed code: bit i is 1 iff h_i > 0.5 (0.5 maps to 0)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1:
        raise ValueError(f"relaxed code must be 1-D, got shape {h.shape}")
    if not ((h >= 0.0) & (h <= 1.0)).all():
        raise ValueError("relaxed code entries must lie in [0, 1]")
    return HashCode(words=pack_bits(h > 0.5), nbits=h.shape[0])


def hamming_distance(a: HashCode, b: HashCode) -> int:
    if a.nbits != b.nbits:
        raise ValueError(f"code lengths differ: {a.nbits} vs {b.nbits}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


@dataclass
class RetrievalIndex:
    codes: np.ndarray  # (N, W) uint64
    ids: np.ndarray  # (N,) int64, unique
    labels: np.ndarray  # (N, c) uint8 relevance labels
    nbits: int

    def __len__(self) -> int:
        return self.codes.shape[0]

    def entry(self, i: int) -> tuple[int, HashCode, np.ndarray]:
        return int(self.ids[i]), HashCode(self.codes[i], self.nbits), self.labels[i]


def build_index(db: Dataset, model: HashModel) -> RetrievalIndex:
    """Encode every database image (order preserved).

    Index labels are the evaluation labels: hidden true labels, so that
    retrieval quality is measurable over unlabeled pool members too.
    """
    if len(db) == 0:
        raise EmptyInputError("cannot build an index over an empty dataset")
    relaxed = relaxed_codes(model, db.pixels)
    codes = pack_bits(relaxed > 0.5)
    return RetrievalIndex(
        codes=codes,
        ids=db.ids.astype(np.int64),
        labels=db.true_labels.astype(np.uint8),
        nbits=model.cfg.code_bits,
    )


def index_from_codes(
    codes: list[HashCode], ids: np.ndarray, labels: np.ndarray
) -> RetrievalIndex:
    """Assemble an index from precomputed codes (e.g. a baseline encoder)."""
    if not codes:
        raise EmptyInputError("cannot build an index from zero codes")
    nbits = codes[0].nbits
    return RetrievalIndex(
        codes=np.stack([c.words for c in codes]),
        ids=np.asarray(ids, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.uint8),
        nbits=nbits,
    )


def distances_to(index: RetrievalIndex, query: HashCode) -> np.ndarray:
    if query.nbits != index.nbits:
        raise ValueError(f"code lengths differ: {query.nbits} vs {index.nbits}")
    return np.bitwise_count(index.codes ^ query.words[None, :]).sum(axis=1)


def search(index: RetrievalIndex, query: HashCode) -> list[tuple[int, int]]:
    """Full ranking by ascending Hamming distance, ties by ascending id."""
    dists = distances_to(index, query)
    order = np.lexsort((index.ids, dists))
    return [(int(index.ids[i]), int(dists[i])) for i in order]


def lookup_within_radius(index: RetrievalIndex, query: HashCode, r: int) -> set[int]:
    """All ids whose codes lie within Hamming distance ``r`` of the query."""
    if not 0 <= r <= index.nbits:
        raise ValueError(f"radius {r} out of range [0, {index.nbits}]")
    dists = distances_to(index, query)
    return set(int(i) for i in index.ids[dists <= r])


# ---------------------------------------------------------------------------
# Code export
# ---------------------------------------------------------------------------

def save_codes(path, index: RetrievalIndex) -> None:
    n, w = index.codes.shape
    c = index.labels.shape[1]
    with open(path, "wb") as f:
        f.write(CODES_MAGIC)
        f.write(struct.pack("<IIQI", index.nbits, w, n, c))
        f.write(index.codes.astype("<u8").tobytes())
        f.write(index.ids.astype("<i8").tobytes())
        f.write(index.labels.astype(np.uint8).tobytes())


def load_codes(path) -> RetrievalIndex:
    with open(path, "rb") as f:
        magic = f.read(len(CODES_MAGIC))
        if magic != CODES_MAGIC:
            raise MalformedFileError(f"{path}: not a code export file (bad magic)")
        nbits, w, n, c = struct.unpack("<IIQI", f.read(20))
        codes = np.frombuffer(f.read(n * w * 8), dtype="<u8").reshape(n, w)
        ids = np.frombuffer(f.read(n * 8), dtype="<i8")
        labels = np.frombuffer(f.read(n * c), dtype=np.uint8).reshape(n, c)
        if f.read(1):
            raise MalformedFileError(f"{path}: trailing bytes after payload")
    return RetrievalIndex(
        codes=codes.astype(np.uint64),
        ids=ids.astype(np.int64),
        labels=labels.copy(),
        nbits=int(nbits),
    )
