import itertools
import math

import numpy as np
import pytest

from cropgcn.errors import InputError
from cropgcn.metrics import ConfusionCounts, Mode, accuracy, confusion, evaluate, f_score, mcc, summarize


def naive_counts(pred, gt, excl=None):
    tp = fp = tn = fn = 0
    for i in range(gt.shape[0]):
        for j in range(gt.shape[1]):
            g = int(gt[i, j])
            if g == 255 or (excl is not None and excl[i, j]):
                continue
            p = int(pred[i, j])
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
    return tp, fp, tn, fn


def naive_scores(tp, fp, tn, fn):
    denom = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    m = (tp * tn - fp * fn) / denom if denom else 0.0
    f = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    a = (tp + tn) / (tp + fp + tn + fn) if (tp + fp + tn + fn) else 0.0
    return m, f, a


def random_pair(rng):
    pred = rng.integers(0, 2, (16, 16))
    gt = rng.choice([0, 1, 255], size=(16, 16), p=[0.45, 0.45, 0.1])
    excl = rng.random((16, 16)) < 0.2
    return pred, gt, excl


def test_examples():
    c = ConfusionCounts(tp=3, fp=1, tn=4, fn=2)
    assert f_score(c) == pytest.approx(0.6667, abs=1e-4)
    assert accuracy(c) == 0.7
    assert mcc(ConfusionCounts(1, 1, 1, 1)) == 0.0
    assert mcc(ConfusionCounts(5, 0, 7, 0)) == 1.0
    assert mcc(ConfusionCounts(0, 5, 0, 7)) == -1.0
    assert mcc(ConfusionCounts(5, 0, 0, 0)) == 0.0


def test_perfect_and_inverted_maps_are_exact():
    rng = np.random.default_rng(0)
    for _ in range(50):
        gt = rng.integers(0, 2, (int(rng.integers(2, 30)), 7))
        if gt.min() == gt.max():
            continue
        assert evaluate(gt, gt).mcc_full == 1.0
        assert evaluate(1 - gt, gt).mcc_full == -1.0


def test_matches_naive_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pred, gt, excl = random_pair(rng)
        report = evaluate(pred, gt, excl)
        for counts, mask in ((report.full, None), (report.mask, excl)):
            tp, fp, tn, fn = naive_counts(pred, gt, mask)
            assert (counts.tp, counts.fp, counts.tn, counts.fn) == (tp, fp, tn, fn)
        for suffix, mask in (("full", None), ("mask", excl)):
            m, f, a = naive_scores(*naive_counts(pred, gt, mask))
            assert abs(getattr(report, f"mcc_{suffix}") - m) <= 1e-12
            assert abs(getattr(report, f"f1_{suffix}") - f) <= 1e-12
            assert abs(getattr(report, f"acc_{suffix}") - a) <= 1e-12


def test_full_with_empty_exclusion_equals_mask():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pred, gt, _ = random_pair(rng)
        empty = np.zeros_like(gt)
        assert confusion(pred, gt, Mode.FULL, empty) == confusion(pred, gt, Mode.MASK, empty)
        assert confusion(pred, gt, Mode.FULL) == confusion(pred, gt, Mode.MASK, empty)


def test_mcc_class_swap_invariant():
    for tp, fp, tn, fn in itertools.product(range(4), repeat=4):
        c = ConfusionCounts(tp, fp, tn, fn)
        assert mcc(c) == pytest.approx(mcc(ConfusionCounts(tn, fn, tp, fp)), abs=1e-15)


def test_mcc_monotone_in_correct_counts():
    # moving one error into the matching correct cell never lowers MCC
    for tp, fp, tn, fn in itertools.product(range(5), repeat=4):
        c = ConfusionCounts(tp, fp, tn, fn)
        if fp:
            assert mcc(ConfusionCounts(tp, fp - 1, tn + 1, fn)) >= mcc(c) - 1e-15 or tp + fn == 0
        if fn:
            assert mcc(ConfusionCounts(tp + 1, fp, tn, fn - 1)) >= mcc(c) - 1e-15 or tn + fp == 0
        assert -1.0 <= mcc(c) <= 1.0


def test_shape_mismatch():
    with pytest.raises(InputError):
        evaluate(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(InputError):
        evaluate(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 3)))


def test_summarize_population_std():
    rng = np.random.default_rng(3)
    reports = [evaluate(*random_pair(rng)) for _ in range(5)]
    stats = summarize(reports)
    vals = [r.mcc_mask for r in reports]
    mean = sum(vals) / 5
    assert stats["mcc_mask"][0] == pytest.approx(mean, abs=1e-15)
    assert stats["mcc_mask"][1] == pytest.approx(math.sqrt(sum((v - mean) ** 2 for v in vals) / 5), abs=1e-15)
    with pytest.raises(InputError):
        summarize([])
