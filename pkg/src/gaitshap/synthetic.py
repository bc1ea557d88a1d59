"""Synthetic two-group gait recordings with known heel contacts.

Each stride is built from a stride-frequency fundamental, a step-frequency
harmonic and a Gaussian impact transient at every heel contact. Left
contacts coincide with positive mediolateral sway, right contacts with
negative sway. Older adults differ from adults only in the amplitude of the
impact transient at the *right* heel contact, so the discriminative part of
a normalized stride is a known window around its middle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParams
from .preprocessing import AccelTrace, Group
from .segmentation import STRIDE_LEN, GaitEvent, Side


@dataclass(frozen=True)
class GaitGenParams:
    stride_period_s: float = 1.1
    n_strides: int = 90
    group_contrast: float = 0.5
    ml_sway_amp: float = 0.4
    noise_std: float = 0.02
    seed: int = 0
    sample_rate_hz: float = 100.0
    impact_amp: float = 1.0
    impact_width_s: float = 0.03
    step_amp: float = 0.5
    stride_amp: float = 0.2
    ap_gain: float = 0.8
    first_side: Side = Side.LEFT

    def validate(self) -> "GaitGenParams":
        if not self.stride_period_s > 0:
            raise InvalidParams("stride_period_s must be > 0")
        if self.n_strides < 1:
            raise InvalidParams("n_strides must be >= 1")
        if not 0.0 <= self.group_contrast <= 1.0:
            raise InvalidParams("group_contrast must lie in [0, 1]")
        if self.noise_std < 0:
            raise InvalidParams("noise_std must be >= 0")
        if not self.sample_rate_hz > 0 or not self.impact_width_s > 0:
            raise InvalidParams("sample rate and impact width must be > 0")
        if self.stride_samples < 4:
            raise InvalidParams("stride shorter than 4 samples")
        return self

    @property
    def stride_samples(self) -> int:
        # even, so both steps span a whole number of samples
        return 2 * int(round(self.stride_period_s * self.sample_rate_hz / 2))


def stride_template(params: GaitGenParams, group: Group | str) -> np.ndarray:
    """Noise-free (stride_samples, 3) waveform starting at a left contact."""
    group = Group(group)
    n = params.stride_samples
    step = n // 2
    p = np.arange(n)
    d_left = np.minimum(p, n - p)
    d_right = np.abs(p - step)
    width = params.impact_width_s * params.sample_rate_hz

    def bump(d):
        return np.exp(-0.5 * (d / width) ** 2)

    right_scale = 1.0 - params.group_contrast if group is Group.OLDER_ADULT else 1.0
    impact = params.impact_amp * (bump(d_left) + right_scale * bump(d_right))
    phase = 2 * np.pi * p / n
    v = params.stride_amp * np.cos(phase) + params.step_amp * np.cos(2 * phase) + impact
    ap = params.ap_gain * (params.step_amp * np.cos(2 * phase) + impact)
    ml = params.ml_sway_amp * np.cos(phase)
    return np.stack([v, ap, ml], axis=1)


def generate_subject_trace(group: Group | str, params: GaitGenParams,
                           subject_id: str = "synthetic"):
    """Generate one recording and its ground-truth contact list.

    The trace holds ``2 * n_strides + 1`` alternating contacts beginning with
    ``params.first_side``, with half a step of signal before the first and
    after the last one. Deterministic in ``params.seed``.
    """
    params.validate()
    group = Group(group)
    n = params.stride_samples
    step = n // 2
    lead = step // 2
    n_contacts = 2 * params.n_strides + 1
    length = lead + (n_contacts - 1) * step + lead + 1

    shift = 0 if Side(params.first_side) is Side.LEFT else step
    phase = (np.arange(length) - lead + shift) % n
    samples = stride_template(params, group)[phase]
    if params.noise_std > 0:
        rng = np.random.default_rng(params.seed)
        samples = samples + rng.normal(0.0, params.noise_std, samples.shape)

    sides = (Side.LEFT, Side.RIGHT) if shift == 0 else (Side.RIGHT, Side.LEFT)
    events = [GaitEvent(lead + k * step, sides[k % 2]) for k in range(n_contacts)]
    trace = AccelTrace(subject_id, samples, group, params.sample_rate_hz)
    return trace, events


def generate_cohort(n_adult: int, n_older: int, base: GaitGenParams | None = None,
                    jitter: float = 0.05, seed: int = 0):
    """Generate ``n_adult + n_older`` subjects with seeded per-subject jitter.

    Stride period and waveform amplitudes of every subject are multiplied by
    ``1 + jitter * N(0, 1)`` (clipped to [0.5, 1.5]) and each subject gets
    its own noise seed. With ``jitter == 0`` subjects are not varied at all:
    every subject uses ``base`` unchanged, noise seed included, so traces
    within a group are identical. Returns a list of ``(trace, events, group)``.
    """
    base = (base or GaitGenParams()).validate()
    if n_adult < 0 or n_older < 0:
        raise InvalidParams("subject counts must be >= 0")
    if jitter < 0:
        raise InvalidParams("jitter must be >= 0")
    groups = [Group.ADULT] * n_adult + [Group.OLDER_ADULT] * n_older
    children = np.random.SeedSequence(seed).spawn(len(groups))
    cohort = []
    counters = {Group.ADULT: 0, Group.OLDER_ADULT: 0}
    for group, ss in zip(groups, children):
        rng = np.random.default_rng(ss)
        f = np.clip(1.0 + jitter * rng.standard_normal(5), 0.5, 1.5)
        params = replace(
            base,
            stride_period_s=base.stride_period_s * f[0],
            impact_amp=base.impact_amp * f[1],
            step_amp=base.step_amp * f[2],
            stride_amp=base.stride_amp * f[3],
            ml_sway_amp=base.ml_sway_amp * f[4],
            seed=int(rng.integers(2**31)) if jitter > 0 else base.seed,
        )
        prefix = "A" if group is Group.ADULT else "O"
        sid = f"{prefix}{counters[group]:03d}"
        counters[group] += 1
        trace, events = generate_subject_trace(group, params, subject_id=sid)
        cohort.append((trace, events, group))
    return cohort


def contrast_window(segment_len: int = STRIDE_LEN, width: int = 16) -> tuple[int, int]:
    """Time window ``[start, stop)`` of a normalized stride that carries the
    injected group difference (centred on the right heel contact)."""
    centre = segment_len / 2
    start = int(round(centre - width / 2))
    return start, start + width
