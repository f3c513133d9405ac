import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sigmoidf1.metrics import (
    ConfusionCounts,
    EmptySupportWarning,
    aggregate,
    average_precision,
    evaluate,
    hard_confusion,
    mean_ap,
    prf_from_counts,
)
from oracles import brute_ap, brute_counts, brute_map, brute_metrics

Y4 = np.array([1, 0, 1, 0])
P4 = np.array([0.9, 0.6, 0.4, 0.1])


def counts_of(*rows):
    return ConfusionCounts(*(np.array(col) for col in zip(*rows)))


def random_instance(seed, n=50, C=8):
    r = np.random.default_rng(seed)
    Y = (r.uniform(size=(n, C)) < r.uniform(0.05, 0.6, size=C)).astype(np.int64)
    # coarse grid of scores so that ties (both at the threshold and between examples) occur
    P = np.round(r.uniform(size=(n, C)), 1)
    return Y, P


label_mats = st.integers(1, 12).flatmap(
    lambda n: st.integers(1, 5).flatmap(
        lambda C: st.tuples(
            arrays(np.int64, (n, C), elements=st.integers(0, 1)),
            arrays(np.float64, (n, C), elements=st.floats(0, 1)),
        )
    )
)


class TestHardConfusion:
    def test_example(self):
        c = hard_confusion(Y4, P4, 0.5)
        assert (c.tp[0], c.fp[0], c.fn[0], c.tn[0]) == (1, 1, 1, 1)

    def test_perfect(self):
        Y = np.array([[1, 0], [0, 0], [1, 1]])
        c = hard_confusion(Y, Y.astype(float), 0.5)
        assert np.all(c.fp == 0) and np.all(c.fn == 0)
        np.testing.assert_array_equal(c.tp, Y.sum(0))
        np.testing.assert_array_equal(c.tn, (1 - Y).sum(0))

    def test_zero_threshold(self):
        c = hard_confusion(Y4, P4, 0.0)
        assert c.tp[0] + c.fp[0] == 4 and c.fn[0] == 0 and c.tn[0] == 0

    def test_tie_counts_positive(self):
        c = hard_confusion([1, 0], [0.5, 0.5], 0.5)
        assert c.tp[0] == 1 and c.fp[0] == 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            hard_confusion(np.ones((3, 2)), np.ones((3, 3)))

    def test_non_binary_labels(self):
        with pytest.raises(ValueError):
            hard_confusion([2, 0], [0.5, 0.5])

    @given(label_mats, st.floats(0, 1))
    def test_conservation(self, yp, t):
        Y, P = yp
        c = hard_confusion(Y, P, t)
        np.testing.assert_array_equal(c.tp + c.fp + c.fn + c.tn, Y.shape[0])

    @given(label_mats, st.floats(0, 1), st.floats(0, 1))
    def test_threshold_monotone(self, yp, t1, t2):
        Y, P = yp
        lo, hi = sorted((t1, t2))
        a, b = hard_confusion(Y, P, lo), hard_confusion(Y, P, hi)
        assert np.all(b.tp <= a.tp) and np.all(b.tn >= a.tn)

    @pytest.mark.parametrize("seed", range(10))
    def test_brute_force(self, seed):
        Y, P = random_instance(seed)
        c = hard_confusion(Y, P, 0.5)
        assert list(zip(c.tp, c.fp, c.fn, c.tn)) == brute_counts(Y, P, 0.5)


class TestPRF:
    def test_balanced(self):
        p, r, f = prf_from_counts(counts_of((1, 1, 1, 1)))
        assert (p[0], r[0], f[0]) == (0.5, 0.5, 0.5)

    @pytest.mark.parametrize("k", [1, 3, 100])
    def test_perfect_class(self, k):
        p, r, f = prf_from_counts(counts_of((k, 0, 0, 7)))
        assert p[0] == pytest.approx(1.0) and r[0] == pytest.approx(1.0) and f[0] == pytest.approx(1.0)

    def test_absent_class_is_zero(self):
        out = prf_from_counts(counts_of((0, 0, 0, 5)))
        for v in out:
            assert v[0] == 0.0


class TestAggregate:
    def test_identical_classes(self):
        c = counts_of((2, 1, 1, 3), (2, 1, 1, 3))
        vals = {m: aggregate(c, mode=m) for m in ("micro", "macro", "weighted")}
        assert vals["micro"] == pytest.approx(vals["macro"]) == pytest.approx(vals["weighted"])

    def test_micro_macro_example(self):
        c = counts_of((1, 0, 0, 0), (0, 1, 1, 0))
        assert aggregate(c, [1, 1], "macro") == pytest.approx(0.5)
        assert aggregate(c, [1, 1], "micro") == pytest.approx(0.5)

    def test_weighted_example(self):
        c = counts_of((3, 0, 0, 1), (0, 1, 1, 2))
        assert aggregate(c, [3, 1], "weighted") == pytest.approx(0.75)
        assert aggregate(c, [3, 1], "macro") == pytest.approx(0.5)

    def test_weighted_equals_macro_for_equal_support(self):
        c = counts_of((2, 5, 1, 0), (1, 0, 2, 4), (3, 3, 0, 1))
        assert aggregate(c, [3, 3, 3], "weighted") == pytest.approx(aggregate(c, [3, 3, 3], "macro"))

    def test_zero_support_flagged(self):
        c = counts_of((0, 2, 0, 3), (0, 0, 0, 5))
        with pytest.warns(EmptySupportWarning):
            assert aggregate(c, mode="weighted") == 0.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            aggregate(counts_of((1, 0, 0, 0)), mode="samples")


class TestAveragePrecision:
    def test_example(self):
        assert average_precision(Y4, P4) == pytest.approx((1 + 2 / 3) / 2)

    def test_perfect_ranking(self):
        assert average_precision([0, 1, 1, 0], [0.1, 0.8, 0.9, 0.2]) == 1.0

    @pytest.mark.parametrize("n", [1, 2, 7, 50])
    def test_single_positive_last(self, n):
        y = np.zeros(n, dtype=int)
        y[-1] = 1
        assert average_precision(y, np.linspace(1, 0, n)) == pytest.approx(1 / n)

    def test_ties_by_index(self):
        # equal scores: the earlier example is ranked first
        assert average_precision([1, 0], [0.5, 0.5]) == 1.0
        assert average_precision([0, 1], [0.5, 0.5]) == 0.5

    def test_all_negative_excluded(self):
        Y = np.array([[1, 0], [0, 0], [1, 0]])
        S = np.array([[0.9, 0.3], [0.2, 0.4], [0.8, 0.1]])
        value, ap, excluded = mean_ap(Y, S)
        assert excluded == 1 and np.isnan(ap[1]) and value == 1.0

    @pytest.mark.parametrize("transform", [np.exp, lambda s: 3 * s - 7, lambda s: s**3, np.arctan])
    def test_monotone_transform_invariance(self, transform):
        Y, S = random_instance(5)
        S = S + np.random.default_rng(0).uniform(0, 1e-3, S.shape)
        assert mean_ap(Y, transform(S))[0] == mean_ap(Y, S)[0]


class TestPermutation:
    def test_example_order(self):
        Y, P = random_instance(1)
        P = P + np.random.default_rng(1).uniform(0, 1e-3, P.shape)  # keep rank ties out of the picture
        perm = np.random.default_rng(2).permutation(len(Y))
        a, b = evaluate(Y, P).to_record(), evaluate(Y[perm], P[perm]).to_record()
        for k in a:
            assert a[k] == pytest.approx(b[k], abs=1e-14)

    def test_class_order(self):
        Y, P = random_instance(3)
        perm = np.random.default_rng(4).permutation(Y.shape[1])
        a, b = evaluate(Y, P), evaluate(Y[:, perm], P[:, perm])
        np.testing.assert_array_equal(a.f1_per_class[perm], b.f1_per_class)
        np.testing.assert_array_equal(a.precision_per_class[perm], b.precision_per_class)
        assert a.microF1 == b.microF1
        assert a.macroF1 == pytest.approx(b.macroF1, abs=1e-15)


class TestEvaluate:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        Y, P = random_instance(seed)
        report = evaluate(Y, P, 0.5)
        ref = brute_metrics(Y, P, 0.5)
        for key in ("macroF1", "microF1", "weightedF1", "precision", "recall"):
            assert abs(getattr(report, key) - ref[key]) <= 1e-12, key
        np.testing.assert_allclose(report.f1_per_class, ref["f1_per_class"], rtol=0, atol=1e-12)
        assert abs(report.mAP - brute_map(Y.tolist(), P.tolist())[0]) <= 1e-12

    def test_record_is_flat(self):
        rec = evaluate(Y4, P4).to_record()
        assert rec["support_0"] == 2 and rec["f1_0"] == pytest.approx(0.5)
        assert all(isinstance(v, (int, float)) for v in rec.values())

    @given(label_mats, st.floats(0, 1))
    @settings(max_examples=50)
    def test_range(self, yp, t):
        Y, P = yp
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rec = evaluate(Y, P, t).to_record()
        for k in ("weightedF1", "microF1", "macroF1", "precision", "recall", "mAP"):
            assert 0 <= rec[k] <= 1 + 1e-12


def test_brute_ap_matches_example():
    assert brute_ap(list(Y4), list(P4)) == pytest.approx((1 + 2 / 3) / 2)
