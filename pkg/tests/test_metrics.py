import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitshap.errors import EmptyInput, EmptyMatrix, LengthMismatch, OneClassOnly
from gaitshap.metrics import (
    ConfusionMatrix,
    EvalReport,
    auc_trapezoid,
    classification_metrics,
    confusion_matrix,
    evaluate,
    roc_points,
)
from gaitshap.preprocessing import Group


def concordance(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t == 1]
    neg = [s for s, t in zip(scores, truth) if t == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def test_confusion_examples():
    cm = confusion_matrix([1, 1, 0, 0], [1, 1, 0, 0])
    assert cm == ConfusionMatrix(tp=2, fp=0, tn=2, fn=0)
    cm = confusion_matrix([Group.ADULT] * 4, [Group.OLDER_ADULT] * 3 + [Group.ADULT])
    assert (cm.fn, cm.tn, cm.tp, cm.fp) == (3, 1, 0, 0)


def test_confusion_matches_loop():
    rng = np.random.default_rng(0)
    p, t = rng.integers(0, 2, 100), rng.integers(0, 2, 100)
    cm = confusion_matrix(p, t)
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for a, b in zip(p, t):
        key = ("t" if a == b else "f") + ("p" if a == 1 else "n")
        counts[key] += 1
    assert cm == ConfusionMatrix(**counts)


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion_matrix([0, 1], [0])
    with pytest.raises(EmptyInput):
        confusion_matrix([], [])


def test_metrics_from_published_rates():
    cm = ConfusionMatrix.from_rates(0.859, 0.763, 26 * 80, 23 * 80)
    m = classification_metrics(cm)
    assert abs(m.precision - 0.827) <= 0.005
    assert abs(m.recall - 0.763) <= 0.001


def test_metrics_guards():
    assert classification_metrics(ConfusionMatrix(5, 0, 5, 0)) == (1.0, 1.0, 1.0, 1.0)
    m = classification_metrics(ConfusionMatrix(0, 0, 3, 2))
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
    with pytest.raises(EmptyMatrix):
        classification_metrics(ConfusionMatrix(0, 0, 0, 0))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 50), st.integers(0, 50), st.integers(1, 50), st.integers(0, 50))
def test_accuracy_identity(tp, fn, tn, fp):
    cm = ConfusionMatrix(tp, fp, tn, fn)
    m = classification_metrics(cm)
    P, N = tp + fn, tn + fp
    spec = tn / N
    assert m.accuracy == pytest.approx((m.recall * P + spec * N) / (P + N), abs=1e-12)


def test_roc_examples():
    assert roc_points([0.9, 0.1], [1, 0]) == [(0, 0), (0, 1), (1, 1)]
    assert roc_points([0.4] * 4, [1, 0, 1, 0]) == [(0, 0), (1, 1)]
    with pytest.raises(OneClassOnly):
        roc_points([0.1, 0.2], [1, 1])


def test_roc_matches_threshold_brute_force():
    rng = np.random.default_rng(3)
    s = np.round(rng.random(10), 1)
    t = np.array([1, 0] * 5)
    P, N = 5, 5
    brute = {(0.0, 0.0), (1.0, 1.0)}
    for thr in np.unique(s):
        pred = s >= thr
        brute.add((float(np.sum(pred & (t == 0)) / N), float(np.sum(pred & (t == 1)) / P)))
    assert set(roc_points(s, t)) == brute


def test_auc_simple():
    assert auc_trapezoid([(0, 0), (0, 1), (1, 1)]) == 1.0
    assert auc_trapezoid([(0, 0), (1, 1)]) == 0.5


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1), st.sampled_from([2, 5, 20, 0]))
def test_auc_equals_concordance(n, seed, levels):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, 2, n)
    t[0], t[1] = 0, 1
    s = rng.integers(0, levels, n) / levels if levels else rng.random(n)
    assert abs(auc_trapezoid(roc_points(s, t)) - concordance(s, t)) <= 1e-12


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(1)
    s, t = rng.random(60), rng.integers(0, 2, 60)
    perm = rng.permutation(60)
    a, b = evaluate(s, t), evaluate(s[perm], t[perm])
    assert a.confusion == b.confusion and a.auc == b.auc


def test_report_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    rep = evaluate(rng.random(30), rng.integers(0, 2, 30))
    rep.save(tmp_path / "r.json")
    assert EvalReport.load(tmp_path / "r.json") == rep
    rep.save_roc_csv(tmp_path / "roc.csv")
    rows = (tmp_path / "roc.csv").read_text().splitlines()
    assert rows[0] == "fpr,tpr" and len(rows) == len(rep.roc) + 1
