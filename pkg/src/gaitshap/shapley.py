"""Shapley-value attribution over groups of input cells.

A segment (time x 3 axes) is split into feature groups. A coalition keeps
the cells of its present groups and replaces all other cells by a baseline;
the value of a coalition is the model score of the masked segment. The
exact estimator enumerates every coalition (up to 15 groups), the sampled
one averages marginal contributions along random orderings of the groups.

Model functions take a batch of segments, shape (m, time, 3), and return
one score per segment, shape (m,).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EmptyInput, GaitShapError, InvalidWindow, ShapeMismatch, TooManyFeatures

MAX_EXACT_FEATURES = 15
AXIS_NAMES = ("v", "ap", "ml")

ModelFn = Callable[[np.ndarray], np.ndarray]
ValueFn = Callable[[np.ndarray], np.ndarray]


class Granularity(str, enum.Enum):
    CELL = "cell"
    WINDOW = "window"
    AXIS = "axis"


@dataclass(frozen=True)
class FeaturePartition:
    """Disjoint cover of a (time, axes) grid by feature groups.

    ``labels[t, a]`` is the group of cell (t, a). ``spans[g]`` gives
    ``(axis, time_start, time_end)`` for group ``g`` (end exclusive).
    """

    segment_shape: tuple
    labels: np.ndarray
    spans: tuple
    granularity: Granularity
    window: Optional[int] = None

    @property
    def n_features(self) -> int:
        return len(self.spans)


def partition_features(shape=(128, 3), granularity: Granularity | str = Granularity.WINDOW,
                       window: int = 8) -> FeaturePartition:
    """Group the cells of a segment.

    ``cell`` gives one group per (time, axis) cell, ``window`` splits each
    axis into ``ceil(time / window)`` contiguous windows, ``axis`` gives one
    group per axis. Groups are numbered axis by axis, then in time order.
    """
    granularity = Granularity(granularity)
    T, A = (int(s) for s in shape)
    if T < 1 or A < 1:
        raise GaitShapError(f"invalid segment shape {shape}")
    if granularity is Granularity.CELL:
        w = 1
    elif granularity is Granularity.AXIS:
        w = T
    else:
        if window is None or int(window) < 1:
            raise InvalidWindow(f"window length must be >= 1, got {window}")
        w = int(window)
    per_axis = -(-T // w)
    labels = np.empty((T, A), dtype=np.int64)
    spans = []
    for a in range(A):
        for k in range(per_axis):
            lo, hi = k * w, min((k + 1) * w, T)
            labels[lo:hi, a] = a * per_axis + k
            spans.append((a, lo, hi))
    labels.setflags(write=False)
    return FeaturePartition((T, A), labels, tuple(spans), granularity,
                            w if granularity is Granularity.WINDOW else None)


def mask_with_coalition(segment, coalition, partition: FeaturePartition, baseline) -> np.ndarray:
    """Cells of present groups come from ``segment``, the rest from ``baseline``.

    ``coalition`` may be one mask (N,) or a batch (m, N); the result has a
    matching leading batch axis.
    """
    segment = np.asarray(segment, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if segment.shape != partition.segment_shape or baseline.shape != segment.shape:
        raise ShapeMismatch(
            f"segment {segment.shape} / baseline {baseline.shape} vs partition {partition.segment_shape}")
    c = np.asarray(coalition).astype(bool)
    if c.shape[-1] != partition.n_features:
        raise ShapeMismatch(f"coalition has {c.shape[-1]} entries, partition {partition.n_features}")
    keep = c[..., partition.labels]
    return np.where(keep, segment, baseline)


def segment_game(model_fn: ModelFn, segment, partition: FeaturePartition, baseline,
                 batch_size: int = 4096) -> ValueFn:
    """Coalition value function ``masks (m, N) -> f(h_x(masks)) (m,)``."""

    def value(masks):
        masks = np.atleast_2d(masks)
        out = [np.asarray(model_fn(mask_with_coalition(segment, masks[i:i + batch_size],
                                                        partition, baseline)), dtype=np.float64)
               for i in range(0, len(masks), batch_size)]
        return np.concatenate(out).reshape(-1)

    return value


@dataclass
class ShapAttribution:
    phi: np.ndarray
    phi0: float
    fx: float
    output_class: Optional[int] = None
    estimator: str = "exact"
    n_perm: Optional[int] = None
    seed: Optional[int] = None
    stderr: Optional[np.ndarray] = None

    @property
    def efficiency_gap(self) -> float:
        """``f(x) - phi0 - sum(phi)``."""
        return float(self.fx - self.phi0 - math.fsum(self.phi))


def all_coalitions(n: int) -> np.ndarray:
    """Every mask of ``n`` players, row ``k`` being the binary digits of ``k``."""
    k = np.arange(2**n)[:, None]
    return ((k >> np.arange(n)) & 1).astype(bool)


def shapley_from_values(values: np.ndarray, n: int) -> np.ndarray:
    """Exact Shapley values from coalition values indexed as in :func:`all_coalitions`."""
    values = np.asarray(values, dtype=np.float64)
    idx = np.arange(2**n)
    sizes = np.array([bin(k).count("1") for k in range(2**n)])
    weight = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
                       if s < n else 0.0 for s in range(n + 1)])
    phi = np.empty(n)
    for i in range(n):
        without = idx[(idx >> i) & 1 == 0]
        with_i = without | (1 << i)
        phi[i] = math.fsum(weight[sizes[without]] * (values[with_i] - values[without]))
    return phi


def shapley_exact_game(value_fn: ValueFn, n: int):
    """Exact Shapley values of an ``n``-player game. Returns ``(phi, v_empty, v_full)``."""
    if n > MAX_EXACT_FEATURES:
        raise TooManyFeatures(f"exact enumeration limited to {MAX_EXACT_FEATURES} features, got {n}")
    values = np.asarray(value_fn(all_coalitions(n)), dtype=np.float64)
    return shapley_from_values(values, n), float(values[0]), float(values[-1])


def _permutation_masks(ranks: np.ndarray) -> np.ndarray:
    # ranks (c, n) -> prefix masks (c, n + 1, n); row k holds the first k players
    n = ranks.shape[1]
    return ranks[:, None, :] < np.arange(n + 1)[None, :, None]


def shapley_permutation_game(value_fn: ValueFn, n: int, n_perm: int = 512, seed=0,
                             chunk: int = 64):
    """Monte Carlo Shapley values from ``n_perm`` random player orderings.

    Permutation ``p`` is drawn from its own stream derived from
    ``(seed, p)``, so estimates do not depend on chunking. Returns
    ``(phi, stderr, v_empty, v_full)``.
    """
    if n_perm < 1:
        raise GaitShapError("n_perm must be >= 1")
    root = np.random.SeedSequence(seed)
    marg = np.empty((n_perm, n))
    v0 = vfull = None
    for start in range(0, n_perm, chunk):
        stop = min(start + chunk, n_perm)
        perms = np.stack([np.random.default_rng(np.random.SeedSequence(
            root.entropy, spawn_key=(p,))).permutation(n) for p in range(start, stop)])
        ranks = np.argsort(perms, axis=1)
        masks = _permutation_masks(ranks)
        vals = value_fn(masks.reshape(-1, n)).reshape(stop - start, n + 1)
        steps = np.diff(vals, axis=1)
        np.put_along_axis(marg[start:stop], perms, steps, axis=1)
        if v0 is None:
            v0, vfull = float(vals[0, 0]), float(vals[0, -1])
    phi = marg.mean(axis=0)
    stderr = marg.std(axis=0, ddof=1) / np.sqrt(n_perm) if n_perm > 1 else np.full(n, np.nan)
    return phi, stderr, v0, vfull


def exact_shapley(model_fn: ModelFn, segment, partition: FeaturePartition, baseline,
                  output_class: Optional[int] = None) -> ShapAttribution:
    """Exact attribution by enumerating all ``2**N`` coalitions (N <= 15)."""
    if partition.n_features > MAX_EXACT_FEATURES:
        raise TooManyFeatures(
            f"exact enumeration limited to {MAX_EXACT_FEATURES} features, got {partition.n_features}")
    game = segment_game(model_fn, segment, partition, baseline)
    phi, v0, vfull = shapley_exact_game(game, partition.n_features)
    return ShapAttribution(phi, v0, vfull, output_class, "exact")


def permutation_shapley(model_fn: ModelFn, segment, partition: FeaturePartition, baseline,
                        n_perm: int = 512, seed=0,
                        output_class: Optional[int] = None) -> ShapAttribution:
    """Sampled attribution; unbiased for the exact value, deterministic per seed."""
    game = segment_game(model_fn, segment, partition, baseline)
    phi, se, v0, vfull = shapley_permutation_game(game, partition.n_features, n_perm, seed)
    return ShapAttribution(phi, v0, vfull, output_class, "permutation", n_perm,
                           seed if isinstance(seed, int) else None, se)


def explain(model_fn: ModelFn, segment, partition: FeaturePartition, baseline,
            n_perm: int = 512, seed=0, output_class=None) -> ShapAttribution:
    """Exact attribution for small partitions, sampled otherwise."""
    if partition.n_features <= MAX_EXACT_FEATURES:
        return exact_shapley(model_fn, segment, partition, baseline, output_class)
    return permutation_shapley(model_fn, segment, partition, baseline, n_perm, seed, output_class)


def mean_abs_aggregate(attributions: Sequence[ShapAttribution],
                       partition: FeaturePartition) -> np.ndarray:
    """Mean |phi| per group over segments, painted onto a (time, 3) grid."""
    if not attributions:
        raise EmptyInput("no attributions to aggregate")
    phis = np.stack([np.asarray(a.phi) for a in attributions])
    if phis.shape[1] != partition.n_features:
        raise ShapeMismatch("attributions do not match the partition")
    return np.abs(phis).mean(axis=0)[partition.labels]


def background_baseline(X, n: int = 100, seed: int = 0) -> np.ndarray:
    """Per-cell mean of ``n`` randomly chosen background segments."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise EmptyInput("empty background set")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(X), size=min(n, len(X)), replace=False)
    return X[np.sort(idx)].mean(axis=0)


# --------------------------------------------------------------------------
# axiom checks
# --------------------------------------------------------------------------

@dataclass
class PropertyReport:
    efficiency_ok: bool
    efficiency_residual: float
    dummy_ok: bool
    dummy_groups: list
    dummy_max_abs_phi: float
    symmetry_ok: bool
    symmetric_pairs: list
    symmetry_max_gap: float
    additivity_ok: Optional[bool] = None
    additivity_residual: Optional[float] = None

    @property
    def all_ok(self) -> bool:
        return (self.efficiency_ok and self.dummy_ok and self.symmetry_ok
                and self.additivity_ok is not False)


def check_game_properties(value_fn: ValueFn, n: int, phi, phi0: float,
                          components: Optional[tuple] = None, detect_tol: float = 1e-12,
                          efficiency_tol: float = 1e-6, axiom_tol: float = 1e-9) -> PropertyReport:
    """Check the four Shapley axioms for an attribution of an ``n``-player game.

    Dummy players and symmetric pairs are found by enumerating every
    coalition. ``components``, when given, is a pair of value functions
    whose sum is ``value_fn``; their exact attributions must add up.
    """
    if n > MAX_EXACT_FEATURES:
        raise TooManyFeatures(f"axiom checks need N <= {MAX_EXACT_FEATURES}, got {n}")
    phi = np.asarray(phi, dtype=np.float64)
    masks = all_coalitions(n)
    v = np.asarray(value_fn(masks), dtype=np.float64)
    scale = max(1.0, float(np.abs(v).max()))
    idx = np.arange(2**n)

    eff = abs(float(v[-1]) - phi0 - math.fsum(phi))

    dummies = []
    for i in range(n):
        without = idx[(idx >> i) & 1 == 0]
        if np.all(np.abs(v[without | (1 << i)] - v[without]) <= detect_tol * scale):
            dummies.append(i)
    dummy_max = max((abs(phi[i]) for i in dummies), default=0.0)

    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            rest = idx[((idx >> i) & 1 == 0) & ((idx >> j) & 1 == 0)]
            if np.all(np.abs(v[rest | (1 << i)] - v[rest | (1 << j)]) <= detect_tol * scale):
                pairs.append((i, j))
    sym_gap = max((abs(phi[i] - phi[j]) for i, j in pairs), default=0.0)

    add_ok = add_res = None
    if components is not None:
        f1, f2 = components
        phi1, _, _ = shapley_exact_game(f1, n)
        phi2, _, _ = shapley_exact_game(f2, n)
        phi_sum, _, _ = shapley_exact_game(lambda m: f1(m) + f2(m), n)
        add_res = float(np.abs(phi_sum - (phi1 + phi2)).max())
        add_ok = add_res <= axiom_tol

    return PropertyReport(eff <= efficiency_tol, eff, dummy_max <= axiom_tol, dummies, dummy_max,
                          sym_gap <= axiom_tol, pairs, sym_gap, add_ok, add_res)


def check_shapley_properties(model_fn: ModelFn, segment, partition: FeaturePartition, baseline,
                             attribution: ShapAttribution,
                             components: Optional[tuple] = None) -> PropertyReport:
    """Axiom report for an attribution of ``model_fn`` on one segment.

    ``components`` is an optional pair of model functions summing to
    ``model_fn`` for the additivity check.
    """
    game = segment_game(model_fn, segment, partition, baseline)
    comp = None
    if components is not None:
        comp = tuple(segment_game(f, segment, partition, baseline) for f in components)
    return check_game_properties(game, partition.n_features, attribution.phi,
                                 attribution.phi0, comp)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

ATTRIBUTION_HEADER = ("segment_id", "group_index", "axis", "time_start", "time_end", "phi")


def write_attributions_csv(path, segment_ids: Sequence[str],
                           attributions: Sequence[ShapAttribution],
                           partition: FeaturePartition) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ATTRIBUTION_HEADER)
        for sid, att in zip(segment_ids, attributions):
            for g, (a, lo, hi) in enumerate(partition.spans):
                w.writerow((sid, g, AXIS_NAMES[a], lo, hi, repr(float(att.phi[g]))))


def read_attributions_csv(path) -> dict:
    """``{segment_id: phi array}`` in group order."""
    out: dict = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["segment_id"], []).append((int(row["group_index"]), float(row["phi"])))
    return {k: np.array([p for _, p in sorted(v)]) for k, v in out.items()}


def write_heatmap_csv(path, aggregate: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AXIS_NAMES)
        w.writerows([[repr(float(x)) for x in row] for row in aggregate])
