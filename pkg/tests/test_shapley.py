import itertools
import math

import numpy as np
import pytest

from gaitshap.errors import EmptyInput, InvalidWindow, ShapeMismatch, TooManyFeatures
from gaitshap.shapley import (
    Granularity,
    ShapAttribution,
    all_coalitions,
    background_baseline,
    check_game_properties,
    check_shapley_properties,
    exact_shapley,
    mask_with_coalition,
    mean_abs_aggregate,
    partition_features,
    permutation_shapley,
    read_attributions_csv,
    shapley_exact_game,
    shapley_permutation_game,
    write_attributions_csv,
    write_heatmap_csv,
)


def brute_shapley(v, n):
    """Shapley values by averaging over all n! orderings."""
    phi = np.zeros(n)
    for order in itertools.permutations(range(n)):
        mask = np.zeros(n, dtype=bool)
        prev = v(mask[None])[0]
        for i in order:
            mask[i] = True
            cur = v(mask[None])[0]
            phi[i] += cur - prev
            prev = cur
    return phi / math.factorial(n)


def random_game(n, rng):
    table = rng.normal(size=2**n)
    weights = 1 << np.arange(n)
    return lambda m: table[np.asarray(m, dtype=np.int64) @ weights]


# -- partitions and masking --------------------------------------------------

def test_partition_counts():
    assert partition_features((128, 3), "cell").n_features == 384
    assert partition_features((128, 3), "window", 16).n_features == 24
    assert partition_features((128, 3), Granularity.AXIS).n_features == 3
    assert partition_features((10, 3), "window", 4).n_features == 9
    with pytest.raises(InvalidWindow):
        partition_features((128, 3), "window", 0)


@pytest.mark.parametrize("gran,w", [("cell", None), ("window", 7), ("axis", None)])
def test_partition_is_disjoint_cover(gran, w):
    p = partition_features((20, 3), gran, w)
    counts = np.bincount(p.labels.ravel(), minlength=p.n_features)
    assert counts.sum() == 60 and np.all(counts > 0)
    for g, (a, lo, hi) in enumerate(p.spans):
        assert np.all(p.labels[lo:hi, a] == g) and counts[g] == hi - lo


def test_masking():
    rng = np.random.default_rng(0)
    seg, base = rng.normal(size=(2, 16, 3))
    p = partition_features((16, 3), "axis")
    np.testing.assert_array_equal(mask_with_coalition(seg, [1, 1, 1], p, base), seg)
    np.testing.assert_array_equal(mask_with_coalition(seg, [0, 0, 0], p, base), base)
    out = mask_with_coalition(seg, [1, 0, 1], p, base)
    np.testing.assert_array_equal(out[:, [0, 2]], seg[:, [0, 2]])
    np.testing.assert_array_equal(out[:, 1], base[:, 1])
    with pytest.raises(ShapeMismatch):
        mask_with_coalition(seg, [1, 1, 1], p, base[:8])


# -- exact estimator ---------------------------------------------------------

def test_exact_additive_closed_form():
    rng = np.random.default_rng(1)
    seg = rng.uniform(-1, 1, (32, 3))
    p = partition_features((32, 3), "window", 8)
    w = rng.normal(size=p.n_features)
    labels = p.labels

    def f(X):
        means = np.stack([X[:, labels == g].mean(axis=1) for g in range(p.n_features)], axis=1)
        return means @ w

    att = exact_shapley(f, seg, p, np.zeros((32, 3)))
    want = w * np.array([seg[labels == g].mean() for g in range(p.n_features)])
    np.testing.assert_allclose(att.phi, want, atol=1e-12)
    assert att.phi0 == 0.0
    assert abs(att.efficiency_gap) <= 1e-12


def test_exact_matches_all_orderings():
    rng = np.random.default_rng(2)
    v = random_game(5, rng)
    phi, v0, vfull = shapley_exact_game(v, 5)
    np.testing.assert_allclose(phi, brute_shapley(v, 5), atol=1e-12)
    assert v0 + phi.sum() == pytest.approx(vfull, abs=1e-12)


def test_dummy_and_symmetric_groups():
    seg = np.ones((8, 3))
    p = partition_features((8, 3), "axis")
    # axis 2 never matters; axes 0 and 1 enter symmetrically
    f = lambda X: X[:, :, 0].sum(1) * X[:, :, 1].sum(1) + X[:, :, 0].sum(1) + X[:, :, 1].sum(1)  # noqa: E731
    base = np.zeros((8, 3))
    att = exact_shapley(f, seg, p, base)
    assert att.phi[2] == 0.0
    assert att.phi[0] == pytest.approx(att.phi[1], abs=1e-12)
    rep = check_shapley_properties(f, seg, p, base, att)
    assert rep.dummy_groups == [2] and (0, 1) in rep.symmetric_pairs and rep.all_ok


def test_too_many_features():
    p = partition_features((64, 3), "window", 8)
    with pytest.raises(TooManyFeatures):
        exact_shapley(lambda X: X.sum((1, 2)), np.zeros((64, 3)), p, np.zeros((64, 3)))
    with pytest.raises(TooManyFeatures):
        check_game_properties(lambda m: m.sum(1), 16, np.zeros(16), 0.0)


def test_baseline_segment_has_zero_attribution():
    rng = np.random.default_rng(3)
    base = rng.uniform(-1, 1, (16, 3))
    p = partition_features((16, 3), "window", 4)
    w = rng.normal(size=(16, 3))
    f = lambda X: np.tanh((X * w).sum((1, 2)))  # noqa: E731
    np.testing.assert_array_equal(exact_shapley(f, base, p, base).phi, 0.0)
    np.testing.assert_array_equal(permutation_shapley(f, base, p, base, n_perm=20).phi, 0.0)


# -- axioms ------------------------------------------------------------------

def test_axioms_linear_game():
    rng = np.random.default_rng(4)
    w = rng.normal(size=6)
    v = lambda m: m @ w  # noqa: E731
    phi, v0, _ = shapley_exact_game(v, 6)
    rep = check_game_properties(v, 6, phi, v0, components=(lambda m: m @ (w / 2), lambda m: m @ (w / 2)))
    assert rep.all_ok and rep.additivity_ok


def test_axioms_hard_coded_dummy():
    rng = np.random.default_rng(5)
    base = random_game(4, rng)
    v = lambda m: base(np.asarray(m)[:, :4])  # player 4 is ignored  # noqa: E731
    phi, v0, _ = shapley_exact_game(v, 5)
    rep = check_game_properties(v, 5, phi, v0)
    assert 4 in rep.dummy_groups and phi[4] == 0.0 and rep.dummy_ok


def test_additivity_random_games():
    rng = np.random.default_rng(6)
    f1, f2 = random_game(7, rng), random_game(7, rng)
    total = lambda m: f1(m) + f2(m)  # noqa: E731
    phi, v0, _ = shapley_exact_game(total, 7)
    rep = check_game_properties(total, 7, phi, v0, components=(f1, f2))
    assert rep.additivity_residual <= 1e-9


def test_property_report_flags_wrong_attribution():
    v = lambda m: m @ np.arange(1.0, 5.0)  # noqa: E731
    rep = check_game_properties(v, 4, np.array([1.0, 2.0, 3.0, 5.0]), 0.0)
    assert not rep.efficiency_ok


# -- permutation estimator ---------------------------------------------------

def test_permutation_close_to_exact():
    rng = np.random.default_rng(7)
    w = rng.normal(size=8)
    inter = rng.normal(size=(8, 8)) * 0.3
    v = lambda m: m @ w + np.einsum("bi,ij,bj->b", m.astype(float), inter, m.astype(float))  # noqa: E731
    exact, _, _ = shapley_exact_game(v, 8)
    est, se, _, _ = shapley_permutation_game(v, 8, n_perm=2000, seed=0)
    assert np.all(np.abs(est - exact) < 3 * se)


def test_single_permutation_telescopes():
    v = random_game(6, np.random.default_rng(8))
    phi, _, v0, vfull = shapley_permutation_game(v, 6, n_perm=1, seed=3)
    assert phi.sum() == pytest.approx(vfull - v0, abs=1e-12)


def test_permutation_deterministic_and_chunk_independent():
    v = random_game(6, np.random.default_rng(9))
    a = shapley_permutation_game(v, 6, n_perm=50, seed=11)
    b = shapley_permutation_game(v, 6, n_perm=50, seed=11, chunk=7)
    np.testing.assert_array_equal(a[0], b[0])
    c = shapley_permutation_game(v, 6, n_perm=50, seed=12)
    assert not np.array_equal(a[0], c[0])


# -- aggregation and export --------------------------------------------------

def test_mean_abs_aggregate():
    p = partition_features((8, 3), "window", 4)
    a = ShapAttribution(np.arange(6.0) - 2, 0.0, 0.0)
    b = ShapAttribution(-(np.arange(6.0) - 2), 0.0, 0.0)
    agg = mean_abs_aggregate([a, b], p)
    np.testing.assert_array_equal(agg, np.abs(np.arange(6.0) - 2)[p.labels])
    rng = np.random.default_rng(10)
    atts = [ShapAttribution(rng.normal(size=6), 0.0, 0.0) for _ in range(10)]
    agg = mean_abs_aggregate(atts, p)
    for t in range(8):
        for ax in range(3):
            g = p.labels[t, ax]
            assert agg[t, ax] == pytest.approx(np.mean([abs(x.phi[g]) for x in atts]), abs=1e-15)
    with pytest.raises(EmptyInput):
        mean_abs_aggregate([], p)


def test_background_baseline():
    X = np.arange(300 * 4 * 3, dtype=float).reshape(300, 4, 3)
    base = background_baseline(X, 100, seed=0)
    assert base.shape == (4, 3)
    np.testing.assert_array_equal(base, background_baseline(X, 100, seed=0))
    np.testing.assert_allclose(background_baseline(X[:5], 100), X[:5].mean(axis=0))


def test_attribution_csv(tmp_path):
    p = partition_features((16, 3), "window", 8)
    rng = np.random.default_rng(11)
    atts = [ShapAttribution(rng.normal(size=6), 0.0, 0.0) for _ in range(2)]
    write_attributions_csv(tmp_path / "a.csv", ["x", "y"], atts, p)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "segment_id,group_index,axis,time_start,time_end,phi"
    assert lines[1].startswith("x,0,v,0,8,")
    back = read_attributions_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(back["y"], atts[1].phi)
    write_heatmap_csv(tmp_path / "h.csv", mean_abs_aggregate(atts, p))
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 17


def test_all_coalitions_order():
    m = all_coalitions(3)
    assert m.shape == (8, 3)
    assert m[5].tolist() == [True, False, True]
