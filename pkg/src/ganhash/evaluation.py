"""Retrieval metrics over Hamming rankings: (truncated) mean average
precision, precision at fixed cutoffs, prefix-averaged precision-recall
curves, and precision within a Hamming-radius ball via hash lookup.

A database item is relevant to a query when their label sets share at
least one label. The stricter containment notion (item labels include
every query label) is reported separately as ``excellent_at_10``. A query
whose radius ball is empty counts as a failed query with precision 0.
Per-query work runs in index order with plain serial accumulation, so
aggregates are reproducible bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import EmptyInputError, InvalidQueryError
from .model import HashModel, relaxed_codes
from .retrieval import HashCode, RetrievalIndex, distances_to, pack_bits


def is_relevant(q: np.ndarray, d: np.ndarray) -> bool:
    """True iff the two label sets intersect."""
    q = np.asarray(q)
    d = np.asarray(d)
    if q.shape != d.shape:
        raise ValueError(f"label shapes differ: {q.shape} vs {d.shape}")
    return bool(np.logical_and(q, d).any())


def average_precision(rels, top_n: int | None = None) -> float:
    """AP of an ordered 0/1 relevance list, optionally truncated."""
    rels = list(rels)
    if not rels:
        raise EmptyInputError("average precision of an empty ranking")
    if top_n is not None:
        rels = rels[:top_n]
    hits = 0
    total = 0.0
    for i, r in enumerate(rels, start=1):
        if r:
            hits += 1
            total += hits / i
    return total / hits if hits else 0.0


def query_codes(model: HashModel, queries: Dataset) -> list[HashCode]:
    """Quantized codes for a query set, in dataset order."""
    relaxed = relaxed_codes(model, queries.pixels)
    packed = pack_bits(relaxed > 0.5)
    return [HashCode(packed[i], model.cfg.code_bits) for i in range(len(queries))]


def _check_labeled(queries: Dataset) -> None:
    if len(queries) == 0:
        raise EmptyInputError("empty query set")
    if not queries.is_labeled.all() or not queries.labels.any(axis=1).all():
        raise InvalidQueryError("every query must carry at least one label")


def _ranked_relevance(
    index: RetrievalIndex, code: HashCode, q_label: np.ndarray
) -> np.ndarray:
    """Relevance flags of the full ranking (ascending distance, then id)."""
    dists = distances_to(index, code)
    order = np.lexsort((index.ids, dists))
    rel = (index.labels @ q_label.astype(np.int64)) > 0
    return rel[order]


# ---------------------------------------------------------------------------
# Code-level metric cores (shared with baselines that have no model)
# ---------------------------------------------------------------------------

def map_from_codes(
    codes: list[HashCode], labels: np.ndarray, index: RetrievalIndex,
    top_n: int | None = None,
) -> float:
    total = 0.0
    for code, lab in zip(codes, labels, strict=True):
        total += average_precision(_ranked_relevance(index, code, lab), top_n)
    return total / len(codes)


def precision_at_k_from_codes(
    codes: list[HashCode], labels: np.ndarray, index: RetrievalIndex, ks
) -> list[tuple[int, float]]:
    ks = list(ks)
    if any(k < 1 or k > len(index) for k in ks):
        raise ValueError(f"every k must lie in [1, {len(index)}]")
    if any(a >= b for a, b in zip(ks, ks[1:])):
        raise ValueError("k values must be strictly increasing")
    sums = {k: 0.0 for k in ks}
    for code, lab in zip(codes, labels, strict=True):
        rel = _ranked_relevance(index, code, lab)
        for k in ks:
            sums[k] += float(rel[:k].sum()) / k
    return [(k, sums[k] / len(codes)) for k in ks]


def pr_curve_from_codes(
    codes: list[HashCode], labels: np.ndarray, index: RetrievalIndex
) -> tuple[list[tuple[float, float]], int]:
    """Prefix-averaged PR points; returns (curve, excluded query count)."""
    n = len(index)
    prec_sum = np.zeros(n)
    rec_sum = np.zeros(n)
    used = 0
    excluded = 0
    depths = np.arange(1, n + 1, dtype=np.float64)
    for code, lab in zip(codes, labels, strict=True):
        rel = _ranked_relevance(index, code, lab).astype(np.float64)
        n_rel = rel.sum()
        if n_rel == 0:
            excluded += 1
            continue
        cum = np.cumsum(rel)
        prec_sum += cum / depths
        rec_sum += cum / n_rel
        used += 1
    if used == 0:
        return [], excluded
    return (
        [(float(rec_sum[i] / used), float(prec_sum[i] / used)) for i in range(n)],
        excluded,
    )


def lookup_precision_from_codes(
    codes: list[HashCode], labels: np.ndarray, index: RetrievalIndex, radius: int
) -> float:
    if not 0 <= radius <= index.nbits:
        raise ValueError(f"radius {radius} out of range [0, {index.nbits}]")
    total = 0.0
    for code, lab in zip(codes, labels, strict=True):
        dists = distances_to(index, code)
        in_ball = dists <= radius
        size = int(in_ball.sum())
        if size == 0:
            continue  # failed query contributes precision 0
        rel = (index.labels[in_ball] @ lab.astype(np.int64)) > 0
        total += float(rel.sum()) / size
    return total / len(codes)


def excellent_at_k_from_codes(
    codes: list[HashCode], labels: np.ndarray, index: RetrievalIndex, k: int = 10
) -> float:
    """Precision@k under the strict rule: item labels contain all query labels."""
    k = min(k, len(index))
    total = 0.0
    for code, lab in zip(codes, labels, strict=True):
        dists = distances_to(index, code)
        order = np.lexsort((index.ids, dists))[:k]
        contains = (index.labels[order] @ lab.astype(np.int64)) >= int(lab.sum())
        total += float(contains.sum()) / k
    return total / len(codes)


# ---------------------------------------------------------------------------
# Model-level operations
# ---------------------------------------------------------------------------

def mean_average_precision(
    queries: Dataset, index: RetrievalIndex, model: HashModel,
    top_n: int | None = None,
) -> float:
    _check_labeled(queries)
    return map_from_codes(query_codes(model, queries), queries.labels, index, top_n)


def precision_at_k(
    queries: Dataset, index: RetrievalIndex, model: HashModel, ks
) -> list[tuple[int, float]]:
    _check_labeled(queries)
    return precision_at_k_from_codes(query_codes(model, queries), queries.labels, index, ks)


def precision_recall_curve(
    queries: Dataset, index: RetrievalIndex, model: HashModel
) -> list[tuple[float, float]]:
    _check_labeled(queries)
    curve, _ = pr_curve_from_codes(query_codes(model, queries), queries.labels, index)
    return curve


def hash_lookup_precision(
    queries: Dataset, index: RetrievalIndex, model: HashModel, radius: int = 2
) -> float:
    _check_labeled(queries)
    return lookup_precision_from_codes(
        query_codes(model, queries), queries.labels, index, radius
    )


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    map: float
    precision_at_k: list  # [(k, precision)]
    pr_curve: list  # [(recall, precision)]
    lookup_precision: float
    lookup_radius: int
    excellent_at_10: float
    pr_excluded_queries: int
    top_n: int | None
    per_query: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "map": self.map,
            "precision_at_k": [[int(k), p] for k, p in self.precision_at_k],
            "pr_curve": [[r, p] for r, p in self.pr_curve],
            "lookup_precision": self.lookup_precision,
            "lookup_radius": self.lookup_radius,
            "excellent_at_10": self.excellent_at_10,
            "pr_excluded_queries": self.pr_excluded_queries,
            "top_n": self.top_n,
            "per_query": self.per_query,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)


def evaluate_codes(
    codes: list[HashCode],
    labels: np.ndarray,
    ids,
    index: RetrievalIndex,
    ks,
    radius: int = 2,
    top_n: int | None = None,
) -> EvalReport:
    """Full report for precomputed query codes."""
    if not codes:
        raise EmptyInputError("empty query set")
    curve, excluded = pr_curve_from_codes(codes, labels, index)
    per_query = []
    for qid, code, lab in zip(ids, codes, labels, strict=True):
        dists = distances_to(index, code)
        in_ball = dists <= radius
        size = int(in_ball.sum())
        rel_ball = (
            float(((index.labels[in_ball] @ lab.astype(np.int64)) > 0).sum()) / size
            if size
            else 0.0
        )
        per_query.append({
            "id": int(qid),
            "ap": average_precision(_ranked_relevance(index, code, lab), top_n),
            "lookup_precision": rel_ball,
            "ball_size": size,
            "relevant_in_db": int(((index.labels @ lab.astype(np.int64)) > 0).sum()),
        })
    return EvalReport(
        map=map_from_codes(codes, labels, index, top_n),
        precision_at_k=precision_at_k_from_codes(codes, labels, index, ks),
        pr_curve=curve,
        lookup_precision=lookup_precision_from_codes(codes, labels, index, radius),
        lookup_radius=radius,
        excellent_at_10=excellent_at_k_from_codes(codes, labels, index, 10),
        pr_excluded_queries=excluded,
        top_n=top_n,
        per_query=per_query,
    )


def evaluate(
    queries: Dataset,
    index: RetrievalIndex,
    model: HashModel,
    ks,
    radius: int = 2,
    top_n: int | None = None,
) -> EvalReport:
    """Full report for a query dataset against a built index."""
    _check_labeled(queries)
    return evaluate_codes(
        query_codes(model, queries), queries.labels, queries.ids, index,
        ks, radius, top_n,
    )
