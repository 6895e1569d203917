"""Independent brute-force oracles used by the tests.

Everything here is deliberately naive: plain Python loops over unpacked
bits and label sets, and central finite differences for gradients. None of
it shares code with the package paths it checks.
"""

from __future__ import annotations

import numpy as np
import torch


# ---------------------------------------------------------------------------
# Bit-level retrieval oracles
# ---------------------------------------------------------------------------

def brute_hamming(a, b) -> int:
    assert len(a) == len(b)
    return sum(1 for x, y in zip(a, b) if x != y)


def brute_rank(db_bits, ids, query_bits):
    """Full ranking as [(id, distance)] sorted by (distance, id)."""
    rows = [(brute_hamming(bits, query_bits), int(i)) for bits, i in zip(db_bits, ids)]
    rows.sort()
    return [(i, d) for d, i in rows]


def brute_lookup(db_bits, ids, query_bits, radius):
    return {
        int(i)
        for bits, i in zip(db_bits, ids)
        if brute_hamming(bits, query_bits) <= radius
    }


# ---------------------------------------------------------------------------
# Metric oracles (operate on ranked relevance lists derived by brute force)
# ---------------------------------------------------------------------------

def brute_relevant(q_label, d_label) -> bool:
    return any(a and b for a, b in zip(q_label, d_label))


def brute_ranked_rels(db_bits, ids, db_labels, query_bits, q_label):
    ranking = brute_rank(db_bits, ids, query_bits)
    by_id = {int(i): lab for i, lab in zip(ids, db_labels)}
    return [1 if brute_relevant(q_label, by_id[i]) else 0 for i, _ in ranking]


def brute_ap(rels, top_n=None) -> float:
    if top_n is not None:
        rels = rels[:top_n]
    hits = 0
    acc = 0.0
    for i, r in enumerate(rels, start=1):
        if r:
            hits += 1
            acc += hits / i
    return acc / hits if hits else 0.0


def brute_map(db_bits, ids, db_labels, q_bits_list, q_labels, top_n=None) -> float:
    aps = [
        brute_ap(brute_ranked_rels(db_bits, ids, db_labels, qb, ql), top_n)
        for qb, ql in zip(q_bits_list, q_labels)
    ]
    return sum(aps) / len(aps)


def brute_precision_at_k(db_bits, ids, db_labels, q_bits_list, q_labels, k) -> float:
    total = 0.0
    for qb, ql in zip(q_bits_list, q_labels):
        rels = brute_ranked_rels(db_bits, ids, db_labels, qb, ql)
        total += sum(rels[:k]) / k
    return total / len(q_bits_list)


def brute_pr_curve(db_bits, ids, db_labels, q_bits_list, q_labels):
    """Prefix-averaged PR points over queries with >= 1 relevant item."""
    n = len(db_bits)
    used = []
    for qb, ql in zip(q_bits_list, q_labels):
        rels = brute_ranked_rels(db_bits, ids, db_labels, qb, ql)
        if sum(rels) > 0:
            used.append(rels)
    if not used:
        return [], len(q_bits_list)
    curve = []
    for depth in range(1, n + 1):
        precs = [sum(r[:depth]) / depth for r in used]
        recs = [sum(r[:depth]) / sum(r) for r in used]
        curve.append((sum(recs) / len(used), sum(precs) / len(used)))
    return curve, len(q_bits_list) - len(used)


def brute_lookup_precision(db_bits, ids, db_labels, q_bits_list, q_labels, radius) -> float:
    by_id = {int(i): lab for i, lab in zip(ids, db_labels)}
    total = 0.0
    for qb, ql in zip(q_bits_list, q_labels):
        ball = brute_lookup(db_bits, ids, qb, radius)
        if not ball:
            continue  # failed query: precision 0
        rel = sum(1 for i in ball if brute_relevant(ql, by_id[i]))
        total += rel / len(ball)
    return total / len(q_bits_list)


# ---------------------------------------------------------------------------
# Random retrieval instances
# ---------------------------------------------------------------------------

def random_instance(rng, *, nbits, max_entries=16, max_queries=5, c=3):
    """Random (db_bits, ids, labels, query_bits, query_labels) instance."""
    n = int(rng.integers(1, max_entries + 1))
    q = int(rng.integers(1, max_queries + 1))
    db_bits = [tuple(int(b) for b in rng.integers(0, 2, nbits)) for _ in range(n)]
    ids = list(rng.choice(10 * max_entries, size=n, replace=False).astype(int))
    labels = []
    for _ in range(n):
        lab = rng.integers(0, 2, c)
        labels.append(tuple(int(x) for x in lab))
    q_bits = [tuple(int(b) for b in rng.integers(0, 2, nbits)) for _ in range(q)]
    q_labels = []
    for _ in range(q):
        lab = np.zeros(c, dtype=int)
        lab[rng.integers(c)] = 1  # queries always carry one label
        extra = rng.integers(0, 2, c)
        lab = np.maximum(lab, extra * (rng.random() < 0.3))
        q_labels.append(tuple(int(x) for x in lab))
    return db_bits, ids, labels, q_bits, q_labels


def pack_instance(db_bits, ids, labels, nbits):
    """Build a package RetrievalIndex from bit tuples."""
    from ganhash.retrieval import RetrievalIndex, pack_bits

    bits = np.array(db_bits, dtype=np.uint8)
    return RetrievalIndex(
        codes=pack_bits(bits),
        ids=np.array(ids, dtype=np.int64),
        labels=np.array(labels, dtype=np.uint8),
        nbits=nbits,
    )


def code_of(bits):
    from ganhash.retrieval import HashCode, pack_bits

    arr = np.array(bits, dtype=np.uint8)
    return HashCode(pack_bits(arr), len(bits))


# ---------------------------------------------------------------------------
# Finite-difference gradients
# ---------------------------------------------------------------------------

def fd_grads(f, params, eps=1e-5):
    """Central-difference gradients of scalar f() w.r.t. each tensor."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                fp = float(f())
                flat[i] = orig - eps
                fm = float(f())
                flat[i] = orig
                gflat[i] = (fp - fm) / (2.0 * eps)
            grads.append(g)
    return grads


def grad_rel_error(analytic, numeric, floor: float = 1e-4) -> float:
    """Worst per-tensor relative L2 error between two gradient lists.

    The denominator is floored at ``floor`` so tensors whose true gradient
    is numerically zero (e.g. heads outside an inactive hinge) are compared
    absolutely at that scale instead of amplifying FD roundoff; a genuinely
    missing gradient term still registers as a large error.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = torch.zeros_like(n) if a is None else a
        denom = max(a.norm().item(), n.norm().item(), floor)
        worst = max(worst, (a - n).norm().item() / denom)
    return worst
