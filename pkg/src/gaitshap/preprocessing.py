"""Acceleration traces: CSV ingestion, low-pass filtering, amplitude
normalization and linear resampling."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from scipy import signal

from .errors import (
    CutoffOutOfRange,
    EmptyFile,
    GaitShapError,
    MissingColumn,
    NonNumericCell,
    SequenceTooShort,
    TraceTooShort,
)

AXES = ("v", "ap", "ml")
DEFAULT_AXIS_MAP = {"v": "v", "ap": "ap", "ml": "ml"}
EXPORT_HEADER = ("subject_id", "group", "v", "ap", "ml")


class Group(str, enum.Enum):
    ADULT = "Adult"
    OLDER_ADULT = "OlderAdult"
    UNKNOWN = "Unknown"

    @property
    def label(self) -> int:
        """Class index used by the classifiers (OlderAdult is the positive class)."""
        if self is Group.UNKNOWN:
            raise GaitShapError("Unknown group has no class label")
        return int(self is Group.OLDER_ADULT)


@dataclass(frozen=True)
class AccelTrace:
    """Tri-axial acceleration recording.

    ``samples`` has shape (n, 3) with columns ordered (V, AP, ML): vertical,
    anteroposterior (walking direction) and mediolateral.
    """

    subject_id: str
    samples: np.ndarray
    group: Group = Group.UNKNOWN
    sample_rate_hz: float = 100.0
    is_filtered: bool = False
    is_normalized: bool = False

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 3 or samples.shape[0] < 1:
            raise GaitShapError(f"samples must have shape (n>=1, 3), got {samples.shape}")
        if not self.sample_rate_hz > 0:
            raise GaitShapError("sample_rate_hz must be positive")
        if self.is_normalized and (samples.min() < -1.0 or samples.max() > 1.0):
            raise GaitShapError("normalized trace has values outside [-1, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "group", Group(self.group))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def v(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def ap(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def ml(self) -> np.ndarray:
        return self.samples[:, 2]


def parse_trace_csv(
    path,
    axis_map: Optional[Mapping[str, str]] = None,
    sample_rate_hz: float = 100.0,
    subject_id: Optional[str] = None,
    group: Optional[Group | str] = None,
) -> AccelTrace:
    """Read a headered CSV file into an :class:`AccelTrace`.

    Args:
        path: CSV file with a header row.
        axis_map: maps each of ``v``, ``ap``, ``ml`` to a column name in the
            file. Unmapped columns are ignored.
        sample_rate_hz: sampling rate of the recording.
        subject_id: defaults to the file's ``subject_id`` column (first row)
            or, failing that, the file stem.
        group: defaults to the file's ``group`` column, else ``Unknown``.

    Raises:
        EmptyFile: no header or no data rows.
        MissingColumn: a mapped column is absent from the header.
        NonNumericCell: a mapped cell does not parse as a float. ``row`` is
            the 1-based data row (the header is not counted).
    """
    path = Path(path)
    axis_map = dict(DEFAULT_AXIS_MAP if axis_map is None else axis_map)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = rows[1:]
    if not data:
        raise EmptyFile(f"{path}: header but no data rows")

    cols = {}
    for axis in AXES:
        name = axis_map.get(axis)
        if name is None or name not in header:
            raise MissingColumn(f"{path}: column {name!r} for axis {axis!r} not in header")
        cols[axis] = header.index(name)

    samples = np.empty((len(data), 3))
    for i, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise GaitShapError(f"{path}: data row {i} has {len(row)} cells, header has {len(header)}")
        for j, axis in enumerate(AXES):
            cell = row[cols[axis]]
            try:
                samples[i - 1, j] = float(cell)
            except ValueError:
                raise NonNumericCell(i, axis_map[axis], cell) from None

    if subject_id is None:
        subject_id = data[0][header.index("subject_id")] if "subject_id" in header else path.stem
    if group is None:
        group = data[0][header.index("group")] if "group" in header else Group.UNKNOWN
    return AccelTrace(subject_id=subject_id, samples=samples, group=Group(group),
                      sample_rate_hz=sample_rate_hz)


def write_trace_csv(trace: AccelTrace, path) -> None:
    """Export with header ``subject_id,group,v,ap,ml``, one sample per row."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EXPORT_HEADER)
        for v, ap, ml in trace.samples:
            # repr keeps the round trip exact
            w.writerow([trace.subject_id, trace.group.value, repr(float(v)), repr(float(ap)), repr(float(ml))])


def butterworth_design(cutoff_hz: float, sample_rate_hz: float, order: int = 2):
    """Transfer-function coefficients ``(b, a)`` of a digital Butterworth low-pass."""
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise CutoffOutOfRange(
            f"cutoff {cutoff_hz} Hz must lie in (0, {sample_rate_hz / 2}) Hz")
    if order < 1:
        raise GaitShapError("filter order must be >= 1")
    return signal.butter(order, cutoff_hz, btype="low", fs=sample_rate_hz)


def butterworth_lowpass(trace: AccelTrace, cutoff_hz: float = 10.0, order: int = 2) -> AccelTrace:
    """Zero-phase (forward-backward) Butterworth low-pass of each axis.

    Edges are handled by odd reflection of ``3 * order`` samples.
    """
    b, a = butterworth_design(cutoff_hz, trace.sample_rate_hz, order)
    padlen = 3 * order
    if len(trace) < padlen + 1:
        raise TraceTooShort(f"trace of length {len(trace)} needs at least {padlen + 1} samples")
    out = signal.filtfilt(b, a, trace.samples, axis=0, padtype="odd", padlen=padlen)
    return replace(trace, samples=out, is_filtered=True, is_normalized=False)


def normalize_amplitude(trace: AccelTrace) -> AccelTrace:
    """Min-max scale every axis of the whole recording to [-1, 1].

    A constant axis maps to zeros.
    """
    return replace(trace, samples=minmax_scale(trace.samples), is_normalized=True)


def minmax_scale(x: np.ndarray) -> np.ndarray:
    """Column-wise ``2 (x - min) / (max - min) - 1``; constant columns become 0."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    # written as (2x - (hi + lo)) / span so that an already scaled column is
    # returned unchanged, bit for bit
    y = (2.0 * x - (hi + lo)) / safe
    y = np.clip(y, -1.0, 1.0)
    y = np.where(x == hi, 1.0, y)
    y = np.where(x == lo, -1.0, y)
    return np.where(span > 0, y, 0.0)


def resample_linear(sequence, target_len: int = 128) -> np.ndarray:
    """Linearly interpolate ``sequence`` onto ``target_len`` equally spaced points.

    The first and last samples are kept exactly. A 2-D input is resampled
    along its first axis, column by column.
    """
    x = np.asarray(sequence, dtype=np.float64)
    n = x.shape[0] if x.ndim else 0
    if n < 2 or target_len < 2:
        raise SequenceTooShort(f"need input length >= 2 and target_len >= 2, got {n} -> {target_len}")
    grid = np.linspace(0.0, n - 1, target_len)
    src = np.arange(n, dtype=np.float64)
    if x.ndim == 1:
        return np.interp(grid, src, x)
    return np.stack([np.interp(grid, src, x[:, j]) for j in range(x.shape[1])], axis=1)
