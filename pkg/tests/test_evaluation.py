import json

import numpy as np
import pytest

from ganhash.errors import EmptyInputError, InvalidQueryError
from ganhash.evaluation import (
    average_precision,
    evaluate,
    evaluate_codes,
    excellent_at_k_from_codes,
    hash_lookup_precision,
    is_relevant,
    lookup_precision_from_codes,
    map_from_codes,
    mean_average_precision,
    pr_curve_from_codes,
    precision_at_k,
    precision_at_k_from_codes,
    precision_recall_curve,
)
from ganhash.retrieval import build_index
from oracles import (
    brute_ap,
    brute_lookup_precision,
    brute_map,
    brute_pr_curve,
    brute_precision_at_k,
    code_of,
    pack_instance,
    random_instance,
)


class TestIsRelevant:
    def test_identical_one_hot(self):
        assert is_relevant(np.array([0, 1, 0]), np.array([0, 1, 0]))

    def test_disjoint(self):
        assert not is_relevant(np.array([1, 0, 0]), np.array([0, 1, 1]))

    def test_partial_overlap(self):
        # {clouds, sunset} vs {clouds}
        assert is_relevant(np.array([1, 1, 0]), np.array([1, 0, 0]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            is_relevant(np.array([1, 0]), np.array([1, 0, 0]))


class TestAveragePrecision:
    def test_all_relevant(self):
        assert average_precision([1, 1, 1, 1]) == 1.0

    def test_none_relevant(self):
        assert average_precision([0, 0, 0]) == 0.0

    def test_prefix_oracle(self):
        assert average_precision([1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-12)

    def test_truncation_equals_full_at_list_length(self, rng):
        for _ in range(30):
            rels = rng.integers(0, 2, int(rng.integers(1, 20))).tolist()
            assert average_precision(rels, top_n=len(rels)) == average_precision(rels)

    def test_truncation_matches_oracle(self, rng):
        for _ in range(30):
            rels = rng.integers(0, 2, 12).tolist()
            n = int(rng.integers(1, 14))
            assert average_precision(rels, top_n=n) == pytest.approx(
                brute_ap(rels, n), abs=1e-12
            )

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            average_precision([])


class TestModelLevelOps:
    def test_all_relevant_index_gives_map_one(self, toy_small, tiny_model):
        index = build_index(toy_small, tiny_model)
        index.labels = np.ones_like(index.labels)  # every entry relevant
        queries = toy_small.select(np.arange(5))
        assert mean_average_precision(queries, index, tiny_model) == 1.0

    def test_nothing_relevant_gives_zero(self, toy_small, tiny_model):
        index = build_index(toy_small, tiny_model)
        index.labels = np.zeros_like(index.labels)
        queries = toy_small.select(np.arange(5))
        assert mean_average_precision(queries, index, tiny_model) == 0.0

    def test_unlabeled_query_rejected(self, toy_small, tiny_model):
        from ganhash.data import split_supervised

        index = build_index(toy_small, tiny_model)
        _, unlabeled = split_supervised(toy_small, 4, seed=0)
        with pytest.raises(InvalidQueryError):
            mean_average_precision(unlabeled.select(np.arange(3)), index, tiny_model)

    def test_precision_at_k_domain(self, toy_small, tiny_model):
        index = build_index(toy_small, tiny_model)
        queries = toy_small.select(np.arange(3))
        with pytest.raises(ValueError):
            precision_at_k(queries, index, tiny_model, [1, len(index) + 1])
        with pytest.raises(ValueError):
            precision_at_k(queries, index, tiny_model, [5, 5])

    def test_full_k_with_all_relevant(self, toy_small, tiny_model):
        index = build_index(toy_small, tiny_model)
        index.labels = np.ones_like(index.labels)
        queries = toy_small.select(np.arange(4))
        [(k, p)] = precision_at_k(queries, index, tiny_model, [len(index)])
        assert k == len(index) and p == 1.0

    def test_pr_final_point_recall_one(self, toy_small, tiny_model):
        index = build_index(toy_small, tiny_model)
        queries = toy_small.select(np.arange(6))
        curve = precision_recall_curve(queries, index, tiny_model)
        assert curve[-1][0] == pytest.approx(1.0, abs=1e-12)

    def test_lookup_full_radius_equals_full_precision(self, toy_small, tiny_model):
        index = build_index(toy_small, tiny_model)
        queries = toy_small.select(np.arange(6))
        k = tiny_model.cfg.code_bits
        full = hash_lookup_precision(queries, index, tiny_model, radius=k)
        rel = (index.labels @ queries.labels.T > 0).astype(float)
        assert full == pytest.approx(float(rel.mean(axis=0).mean()), abs=1e-12)


class TestBruteForceEquivalence:
    N_INSTANCES = 200

    def test_all_metrics_match_oracles(self):
        rng = np.random.default_rng(2024)
        for case in range(self.N_INSTANCES):
            nbits = int(rng.choice([4, 8, 12, 16]))
            db_bits, ids, labels, q_bits, q_labels = random_instance(
                rng, nbits=nbits, c=3
            )
            index = pack_instance(db_bits, ids, labels, nbits)
            codes = [code_of(b) for b in q_bits]
            qlab = np.array(q_labels, dtype=np.uint8)

            got_map = map_from_codes(codes, qlab, index)
            assert got_map == pytest.approx(
                brute_map(db_bits, ids, labels, q_bits, q_labels), abs=1e-12
            )

            top_n = int(rng.integers(1, len(db_bits) + 1))
            got_map_t = map_from_codes(codes, qlab, index, top_n=top_n)
            assert got_map_t == pytest.approx(
                brute_map(db_bits, ids, labels, q_bits, q_labels, top_n), abs=1e-12
            )

            ks = sorted(set(rng.integers(1, len(db_bits) + 1, size=2).tolist()))
            got_pk = precision_at_k_from_codes(codes, qlab, index, ks)
            for k, p in got_pk:
                assert p == pytest.approx(
                    brute_precision_at_k(db_bits, ids, labels, q_bits, q_labels, k),
                    abs=1e-12,
                )

            got_curve, got_excluded = pr_curve_from_codes(codes, qlab, index)
            exp_curve, exp_excluded = brute_pr_curve(db_bits, ids, labels, q_bits, q_labels)
            assert got_excluded == exp_excluded
            assert len(got_curve) == len(exp_curve)
            for (gr, gp), (er, ep) in zip(got_curve, exp_curve):
                assert gr == pytest.approx(er, abs=1e-12)
                assert gp == pytest.approx(ep, abs=1e-12)

            radius = int(rng.integers(0, nbits + 1))
            got_lp = lookup_precision_from_codes(codes, qlab, index, radius)
            assert got_lp == pytest.approx(
                brute_lookup_precision(db_bits, ids, labels, q_bits, q_labels, radius),
                abs=1e-12,
            )

    def test_excellent_at_k_strict_containment(self, rng):
        db_bits = [(0, 0), (0, 1), (1, 1)]
        labels = [(1, 1, 0), (1, 0, 0), (0, 1, 1)]
        index = pack_instance(db_bits, [0, 1, 2], labels, 2)
        q = code_of((0, 0))
        qlab = np.array([[1, 1, 0]], dtype=np.uint8)
        # only entry 0 contains both query labels
        got = excellent_at_k_from_codes([q], qlab, index, k=3)
        assert got == pytest.approx(1 / 3, abs=1e-12)


class TestEvalReports:
    def test_report_fields_and_json(self, toy_small, tiny_model):
        index = build_index(toy_small, tiny_model)
        queries = toy_small.select(np.arange(8))
        rep = evaluate(queries, index, tiny_model, ks=[1, 5, 10], radius=2)
        assert 0.0 <= rep.map <= 1.0
        assert [k for k, _ in rep.precision_at_k] == [1, 5, 10]
        assert all(0.0 <= p <= 1.0 for _, p in rep.precision_at_k)
        assert all(0.0 <= r <= 1.0 and 0.0 <= p <= 1.0 for r, p in rep.pr_curve)
        assert 0.0 <= rep.lookup_precision <= 1.0
        assert len(rep.per_query) == 8
        parsed = json.loads(rep.to_json())
        assert parsed["map"] == rep.map
        assert parsed["lookup_radius"] == 2

    def test_failed_queries_count_as_zero(self):
        db_bits = [(0,) * 8]
        index = pack_instance(db_bits, [0], [(0, 1)], 8)
        q = code_of((1,) * 8)
        qlab = np.array([[1, 0]], dtype=np.uint8)
        assert lookup_precision_from_codes([q], qlab, index, radius=2) == 0.0

    def test_evaluate_codes_matches_model_path(self, toy_small, tiny_model):
        from ganhash.evaluation import query_codes

        index = build_index(toy_small, tiny_model)
        queries = toy_small.select(np.arange(5))
        a = evaluate(queries, index, tiny_model, ks=[1, 3], radius=2)
        b = evaluate_codes(query_codes(tiny_model, queries), queries.labels,
                           queries.ids, index, ks=[1, 3], radius=2)
        assert a.map == b.map and a.precision_at_k == b.precision_at_k
