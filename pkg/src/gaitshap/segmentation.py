"""Heel-contact detection, stride cutting, model-input assembly and the
subject-level train/validation/test split."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from .errors import GaitShapError, InsufficientEvents, NoEventsDetected, TooFewSubjects
from .preprocessing import AccelTrace, Group, resample_linear

STRIDE_LEN = 128
CNN_SEGMENTS_PER_SUBJECT = 80
STRIDES_PER_BLOCK = 8
GRU_BLOCKS_PER_SUBJECT = 10
DEFAULT_SPLIT_RATIO = (146, 49, 49)


class Side(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


@dataclass(frozen=True)
class GaitEvent:
    sample_index: int
    side: Side

    def __post_init__(self):
        if self.sample_index < 0:
            raise GaitShapError("event index must be >= 0")
        object.__setattr__(self, "side", Side(self.side))


@dataclass(frozen=True)
class Stride:
    """Raw slice ``[start, stop)`` of a trace, from one left contact to the next."""

    start: int
    stop: int
    right_index: int
    data: np.ndarray

    @property
    def right_offset(self) -> int:
        return self.right_index - self.start


@dataclass(frozen=True)
class StrideSegment:
    subject_id: str
    group: Group
    data: np.ndarray
    stride_count: int = 1
    anchors: tuple = (0.0,)
    segment_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if self.stride_count < 1 or data.shape != (STRIDE_LEN * self.stride_count, 3):
            raise GaitShapError(
                f"segment of {self.stride_count} stride(s) must be "
                f"({STRIDE_LEN * self.stride_count}, 3), got {data.shape}")
        if data.min() < -1.0 or data.max() > 1.0:
            raise GaitShapError("segment values must lie in [-1, 1]")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "group", Group(self.group))
        object.__setattr__(self, "anchors", tuple(float(a) for a in self.anchors))


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    validation: tuple
    test: tuple
    seed: int = 0

    def __post_init__(self):
        sets = [set(self.train), set(self.validation), set(self.test)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise GaitShapError("split sets must be pairwise disjoint")

    def part_of(self, subject_id: str) -> str:
        for name in ("train", "validation", "test"):
            if subject_id in getattr(self, name):
                return name
        raise KeyError(subject_id)

    def to_json(self) -> dict:
        return {"seed": self.seed, "train": list(self.train),
                "validation": list(self.validation), "test": list(self.test)}

    @classmethod
    def from_json(cls, d: dict) -> "DatasetSplit":
        return cls(tuple(d["train"]), tuple(d["validation"]), tuple(d["test"]), int(d["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        return cls.from_json(json.loads(Path(path).read_text()))


def detect_heel_contacts(
    trace: AccelTrace,
    min_step_interval_s: float = 0.35,
    prominence_frac: float = 0.2,
    side_window_s: float = 0.1,
) -> list[GaitEvent]:
    """Find heel contacts as peaks of V + AP and label each left or right.

    Peaks need a prominence of at least ``prominence_frac`` times the range of
    the summed signal; of two peaks closer than ``min_step_interval_s`` the
    larger one is kept. A contact is Left when the mean ML value within
    ``side_window_s`` of it exceeds the recording's ML median. Where two
    neighbouring contacts get the same side, the less prominent one is
    dropped, so the returned sides strictly alternate.

    Raises:
        NoEventsDetected: fewer than three contacts survive.
    """
    fs = trace.sample_rate_hz
    s = trace.v + trace.ap
    span = float(np.ptp(s))
    if span == 0.0:
        raise NoEventsDetected("flat V+AP signal has no peaks")
    distance = max(1, int(round(min_step_interval_s * fs)))
    peaks, props = signal.find_peaks(s, distance=distance, prominence=prominence_frac * span)

    ml = trace.ml
    ml_median = np.median(ml)
    half = max(0, int(round(side_window_s * fs)))
    kept: list[tuple[int, Side, float]] = []
    for p, prom in zip(peaks, props["prominences"]):
        lo, hi = max(0, p - half), min(len(ml), p + half + 1)
        side = Side.LEFT if ml[lo:hi].mean() > ml_median else Side.RIGHT
        if kept and kept[-1][1] is side:
            if prom > kept[-1][2]:
                kept[-1] = (int(p), side, prom)
            continue
        kept.append((int(p), side, prom))

    if len(kept) < 3:
        raise NoEventsDetected(f"only {len(kept)} heel contacts detected")
    return [GaitEvent(i, side) for i, side, _ in kept]


def extract_strides(trace: AccelTrace, events: Sequence[GaitEvent]) -> list[Stride]:
    """Cut one stride per consecutive (Left, Right, Left) triple.

    Stride ``k`` covers ``[L_k, L_{k+1})``; leading Right contacts are skipped.
    """
    events = list(events)
    first = next((k for k, e in enumerate(events) if e.side is Side.LEFT), None)
    strides = []
    if first is not None:
        for k in range(first, len(events) - 2, 2):
            left, right, nxt = events[k], events[k + 1], events[k + 2]
            if not (left.side is Side.LEFT and right.side is Side.RIGHT and nxt.side is Side.LEFT):
                raise GaitShapError(f"events do not alternate at position {k}")
            if not left.sample_index < right.sample_index < nxt.sample_index <= len(trace):
                raise GaitShapError(f"event indices out of order at position {k}")
            strides.append(Stride(left.sample_index, nxt.sample_index, right.sample_index,
                                  trace.samples[left.sample_index:nxt.sample_index]))
    if not strides:
        raise InsufficientEvents("need a Left, Right, Left sequence of contacts")
    return strides


def _normalized_stride(stride: Stride) -> tuple[np.ndarray, float]:
    n = stride.stop - stride.start
    data = resample_linear(stride.data, STRIDE_LEN)
    right = stride.right_offset * (STRIDE_LEN - 1) / (n - 1)
    return data, right


def build_cnn_segments(
    strides: Sequence[Stride],
    subject_id: str,
    group: Group | str,
    max_segments: int = CNN_SEGMENTS_PER_SUBJECT,
) -> list[StrideSegment]:
    """One 128x3 segment per stride, in order, keeping the first ``max_segments``."""
    out = []
    for k, stride in enumerate(strides[:max_segments]):
        data, right = _normalized_stride(stride)
        out.append(StrideSegment(subject_id, group, data, 1, (0.0, right),
                                 segment_id=f"{subject_id}-s{k:03d}"))
    return out


def build_gru_segments(
    strides: Sequence[Stride],
    subject_id: str,
    group: Group | str,
    max_blocks: int = GRU_BLOCKS_PER_SUBJECT,
    strides_per_block: int = STRIDES_PER_BLOCK,
) -> list[StrideSegment]:
    """Concatenate non-overlapping runs of consecutive strides into blocks."""
    out = []
    n_blocks = min(len(strides) // strides_per_block, max_blocks)
    for b in range(n_blocks):
        parts, anchors = [], []
        for j, stride in enumerate(strides[b * strides_per_block:(b + 1) * strides_per_block]):
            data, right = _normalized_stride(stride)
            parts.append(data)
            anchors += [j * STRIDE_LEN, j * STRIDE_LEN + right]
        out.append(StrideSegment(subject_id, group, np.concatenate(parts, axis=0),
                                 strides_per_block, tuple(anchors),
                                 segment_id=f"{subject_id}-b{b:02d}"))
    return out


def validate_subject(gru_blocks: Sequence[StrideSegment],
                     required_blocks: int = GRU_BLOCKS_PER_SUBJECT) -> bool:
    """Inclusion rule: a subject needs ``required_blocks`` eight-stride blocks."""
    return len(gru_blocks) >= required_blocks


def _allocate(n: int, ratio: Sequence[int]) -> list[int]:
    # largest remainder; ties go to the earlier set
    exact = [n * r / sum(ratio) for r in ratio]
    counts = [int(np.floor(e)) for e in exact]
    order = sorted(range(len(ratio)), key=lambda k: (-(exact[k] - counts[k]), k))
    for k in order[: n - sum(counts)]:
        counts[k] += 1
    return counts


def split_subjects(
    subjects: Iterable[tuple[str, Group | str]],
    ratio: Sequence[int] = DEFAULT_SPLIT_RATIO,
    seed: int = 0,
) -> DatasetSplit:
    """Seeded, group-stratified subject split into train/validation/test.

    Within each group the subjects are shuffled and then divided in
    proportion to ``ratio`` (largest-remainder rounding).
    """
    if len(ratio) != 3 or min(ratio) <= 0:
        raise GaitShapError("ratio must be three positive integers")
    by_group: dict[Group, list[str]] = {}
    seen = set()
    for sid, group in subjects:
        if sid in seen:
            raise GaitShapError(f"duplicate subject id {sid!r}")
        seen.add(sid)
        by_group.setdefault(Group(group), []).append(sid)

    rng = np.random.default_rng(seed)
    parts: list[list[str]] = [[], [], []]
    for group in sorted(by_group, key=lambda g: g.value):
        ids = sorted(by_group[group])
        counts = _allocate(len(ids), ratio)
        if min(counts) == 0:
            raise TooFewSubjects(f"{len(ids)} {group.value} subject(s) cannot fill ratio {tuple(ratio)}")
        ids = [ids[k] for k in rng.permutation(len(ids))]
        start = 0
        for part, c in zip(parts, counts):
            part.extend(ids[start:start + c])
            start += c
    return DatasetSplit(*(tuple(sorted(p)) for p in parts), seed=seed)


def segment_trace(trace: AccelTrace, min_step_interval_s: float = 0.35,
                  prominence_frac: float = 0.2):
    """Detect contacts on a filtered, normalized trace and cut its strides.

    Returns ``(events, strides)``.
    """
    events = detect_heel_contacts(trace, min_step_interval_s, prominence_frac)
    return events, extract_strides(trace, events)


def segments_to_arrays(segments: Sequence[StrideSegment]):
    """Stack segments into ``X`` (n, T, 3), labels ``y`` (n,) and subject ids."""
    if not segments:
        raise GaitShapError("no segments")
    X = np.stack([s.data for s in segments])
    y = np.array([s.group.label for s in segments], dtype=np.int64)
    subjects = np.array([s.subject_id for s in segments])
    return X, y, subjects


def save_segments(segments: Sequence[StrideSegment], directory) -> Path:
    """Write one CSV per segment plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for k, seg in enumerate(segments):
        fname = f"seg_{k:05d}.csv"
        with (directory / fname).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("v", "ap", "ml"))
            w.writerows([[repr(float(x)) for x in row] for row in seg.data])
        manifest.append({"segment_id": seg.segment_id or f"seg{k:05d}",
                         "subject_id": seg.subject_id, "group": seg.group.value,
                         "stride_count": seg.stride_count, "file": fname,
                         "anchors": list(seg.anchors)})
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def load_segments(directory) -> list[StrideSegment]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    out = []
    for entry in manifest:
        data = np.loadtxt(directory / entry["file"], delimiter=",", skiprows=1, ndmin=2)
        out.append(StrideSegment(entry["subject_id"], entry["group"], data,
                                 entry["stride_count"], tuple(entry["anchors"]),
                                 segment_id=entry["segment_id"]))
    return out
