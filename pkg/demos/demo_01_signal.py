"""
Filtering and scaling a raw accelerometer trace
===============================================

A walking trace is smoothed with a zero-phase 2nd-order Butterworth
low-pass filter and every axis is scaled to [-1, 1].
"""

import numpy as np
from scipy import signal

from gaitshap.pipeline import preprocess
from gaitshap.preprocessing import butterworth_design, resample_linear
from gaitshap.synthetic import GaitGenParams, generate_subject_trace

# a noisy synthetic recording (100 Hz, three axes: V, AP, ML)
trace, _ = generate_subject_trace("Adult", GaitGenParams(noise_std=0.1, n_strides=20))
print("raw:", trace.samples.shape, "range", trace.samples.min().round(2), trace.samples.max().round(2))

# the filter design and its response at a few frequencies
b, a = butterworth_design(10.0, trace.sample_rate_hz, order=2)
freqs, h = signal.freqz(b, a, worN=[2, 5, 10, 20, 30], fs=trace.sample_rate_hz)
for f, g in zip(freqs, np.abs(h)):
    print(f"  single-pass gain at {f:4.0f} Hz: {g:.4f}")

# filter forwards and backwards, then min-max scale
clean = preprocess(trace, cutoff_hz=10.0)
print("clean range per axis:", clean.samples.min(axis=0), clean.samples.max(axis=0))
print("residual noise std:", np.std(clean.samples - trace.samples, axis=0).round(3))

# any stride can be resampled to a fixed length
print("resampled:", resample_linear(clean.samples[:110], 128).shape)
