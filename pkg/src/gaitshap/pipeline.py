"""Glue between the stages: raw trace -> filtered, normalized trace ->
strides -> model segments -> per-split arrays."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import GaitShapError
from .preprocessing import AccelTrace, Group, butterworth_lowpass, normalize_amplitude
from .segmentation import (
    DatasetSplit,
    StrideSegment,
    build_cnn_segments,
    build_gru_segments,
    segment_trace,
    segments_to_arrays,
    validate_subject,
)

log = logging.getLogger(__name__)


def preprocess(trace: AccelTrace, cutoff_hz: float = 10.0, order: int = 2) -> AccelTrace:
    """Low-pass filter, then scale every axis to [-1, 1]."""
    return normalize_amplitude(butterworth_lowpass(trace, cutoff_hz, order))


@dataclass
class SubjectData:
    subject_id: str
    group: Group
    cnn: list
    gru: list
    n_events: int

    @property
    def included(self) -> bool:
        return validate_subject(self.gru)


def process_subject(trace: AccelTrace, group: Group | str | None = None,
                    cutoff_hz: float = 10.0) -> SubjectData:
    """Preprocess one recording and cut its CNN and GRU segments."""
    group = Group(group if group is not None else trace.group)
    clean = preprocess(trace, cutoff_hz)
    events, strides = segment_trace(clean)
    return SubjectData(trace.subject_id, group,
                       build_cnn_segments(strides, trace.subject_id, group),
                       build_gru_segments(strides, trace.subject_id, group),
                       len(events))


@dataclass
class Dataset:
    subjects: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)

    def segments(self, kind: str = "cnn", subject_ids: Iterable[str] | None = None) -> list:
        ids = sorted(self.subjects) if subject_ids is None else subject_ids
        out = []
        for sid in ids:
            out.extend(getattr(self.subjects[sid], kind))
        return out

    def arrays(self, split: DatasetSplit, kind: str = "cnn"):
        """``{"train": (X, y), "validation": ..., "test": ...}`` plus segment ids."""
        res = {}
        for part in ("train", "validation", "test"):
            segs = self.segments(kind, getattr(split, part))
            X, y, _ = segments_to_arrays(segs)
            res[part] = (X, y, [s.segment_id for s in segs])
        return res


def build_dataset(recordings: Sequence[tuple[AccelTrace, Group | str]],
                  cutoff_hz: float = 10.0) -> Dataset:
    """Process every recording; subjects failing the inclusion rule are
    listed in ``excluded`` rather than raising."""
    ds = Dataset()
    for trace, group in recordings:
        try:
            sd = process_subject(trace, group, cutoff_hz)
        except GaitShapError as exc:
            log.warning("subject %s skipped: %s", trace.subject_id, exc)
            ds.excluded.append(trace.subject_id)
            continue
        if sd.included:
            ds.subjects[sd.subject_id] = sd
        else:
            ds.excluded.append(sd.subject_id)
    return ds


def segments_by_ids(segments: Sequence[StrideSegment], ids: Iterable[str]) -> list:
    wanted = set(ids)
    return [s for s in segments if s.subject_id in wanted]
