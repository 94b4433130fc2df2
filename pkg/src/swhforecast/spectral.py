"""Radix-2 FFT, direct DFT, global amplitude spectrum and Hann-windowed STFT.

Transforms act on the last axis so batches of frames go through one call.
Sampling is fixed at one sample per hour unless a rate is passed explicitly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


def next_pow2(n):
    return 1 << max(0, int(n - 1).bit_length())


def fft(x):
    """Recursive even/odd Cooley-Tukey FFT over the last axis (length 2**m)."""
    x = np.asarray(x, dtype=complex)
    N = x.shape[-1]
    if not _is_pow2(N):
        raise ValueError(f"fft length must be a power of two, got {N}")
    return _fft(x)


def _fft(x):
    N = x.shape[-1]
    if N == 1:
        return x.copy()
    even = _fft(x[..., 0::2])
    odd = _fft(x[..., 1::2])
    t = np.exp(-2j * np.pi * np.arange(N // 2) / N) * odd
    return np.concatenate([even + t, even - t], axis=-1)


def dft_naive(x, block=256):
    """Direct O(N^2) DFT over the last axis; any length."""
    x = np.asarray(x, dtype=complex)
    N = x.shape[-1]
    n = np.arange(N)
    out = np.empty_like(x)
    for k0 in range(0, N, block):
        k = np.arange(k0, min(N, k0 + block))
        # reduce the exponent mod N so the phase stays accurate for large N
        W = np.exp(-2j * np.pi * ((k[:, None] * n[None, :]) % N) / N)
        out[..., k0 : k0 + len(k)] = x @ W.T
    return out


@dataclass
class Spectrum:
    frequencies: np.ndarray  # cycles per hour
    amplitudes: np.ndarray
    n: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frequency", "amplitude"])
            for f, a in zip(self.frequencies, self.amplitudes):
                w.writerow([repr(float(f)), repr(float(a))])


@dataclass
class GlobalSpectralFeatures:
    dominant_periods: np.ndarray  # hours
    dominant_amplitudes: np.ndarray  # normalised, descending


def global_spectrum(residual, sample_rate=1.0):
    """One-sided amplitude spectrum |X[k]| of the NaN-stripped, zero-padded input."""
    x = np.asarray(residual, dtype=float)
    x = x[~np.isnan(x)]
    if len(x) == 0:
        raise ValueError("global_spectrum needs at least one finite sample")
    n_pad = next_pow2(len(x))
    padded = np.zeros(n_pad)
    padded[: len(x)] = x
    X = fft(padded)[: n_pad // 2 + 1]
    freqs = np.arange(n_pad // 2 + 1) * sample_rate / n_pad
    return Spectrum(freqs, np.abs(X), len(x))


def significant_periods(spec, threshold=0.2, k=3):
    """Strongest spectral peaks whose min-max normalised amplitude exceeds ``threshold``.

    The DC bin is ignored. A bin counts as a peak when it is not smaller than
    its non-DC neighbours, so leakage shoulders of one tone do not register
    as separate periods.
    """
    amps = np.asarray(spec.amplitudes[1:], dtype=float)
    freqs = np.asarray(spec.frequencies[1:], dtype=float)
    if len(amps) == 0 or not np.any(amps > 0):
        raise ValueError("spectrum has no nonzero non-DC bin")
    lo, hi = amps.min(), amps.max()
    norm = (amps - lo) / (hi - lo) if hi > lo else np.ones_like(amps)
    left = np.concatenate([[-np.inf], amps[:-1]])
    right = np.concatenate([amps[1:], [-np.inf]])
    peak = (amps >= left) & (amps >= right)
    keep = np.flatnonzero(peak & (norm > threshold))
    # descending amplitude, ties toward lower frequency
    order = keep[np.lexsort((freqs[keep], -norm[keep]))][:k]
    return GlobalSpectralFeatures(1.0 / freqs[order], norm[order])


def hann(M):
    """Symmetric Hann window 0.5 * (1 - cos(2 pi n / (M - 1)))."""
    if M == 1:
        return np.ones(1)
    n = np.arange(M)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (M - 1)))


@dataclass
class Spectrogram:
    frame_times: np.ndarray  # hour offset of each frame centre
    frequencies: np.ndarray
    magnitudes: np.ndarray  # (frames, bins)
    window_len: int
    hop: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame_time", "frequency", "magnitude"])
            for t, row in zip(self.frame_times, self.magnitudes):
                for f, m in zip(self.frequencies, row):
                    w.writerow([repr(float(t)), repr(float(f)), repr(float(m))])


def stft(x, nperseg=128, noverlap=64, sample_rate=1.0):
    """Magnitude STFT with a Hann window and hop ``nperseg - noverlap``.

    Frames shorter than a power of two are zero-padded before the FFT.
    """
    x = np.asarray(x, dtype=float)
    if noverlap >= nperseg or noverlap < 0:
        raise ValueError("noverlap must satisfy 0 <= noverlap < nperseg")
    if len(x) < nperseg:
        raise ValueError(f"input of length {len(x)} is shorter than one window ({nperseg})")
    hop = nperseg - noverlap
    n_frames = (len(x) - nperseg) // hop + 1
    starts = np.arange(n_frames) * hop
    frames = x[starts[:, None] + np.arange(nperseg)] * hann(nperseg)
    n_fft = next_pow2(nperseg)
    if n_fft != nperseg:
        frames = np.pad(frames, ((0, 0), (0, n_fft - nperseg)))
    mags = np.abs(fft(frames)[:, : n_fft // 2 + 1])
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    centres = (starts + (nperseg - 1) / 2.0) / sample_rate
    return Spectrogram(centres, freqs, mags, nperseg, hop)


@dataclass
class DominantFrequencies:
    per_frame: np.ndarray
    per_sample: np.ndarray
    degenerate: np.ndarray  # frames with no energy outside DC


def dominant_frequency_sequence(sg, n_samples=None, align="center", method="hold"):
    """Per-frame argmax frequency (DC excluded) and its per-sample expansion.

    ``align="center"`` anchors each frame at its centre; ``align="end"``
    anchors it at its last sample so a sample only sees frames that are
    already complete. ``method`` is ``"hold"`` (step) or ``"linear"``.
    """
    mags = sg.magnitudes[:, 1:]
    degenerate = ~np.any(mags > 0, axis=1)
    per_frame = np.where(degenerate, 0.0, sg.frequencies[1:][np.argmax(mags, axis=1)])
    if n_samples is None:
        return DominantFrequencies(per_frame, per_frame.copy(), degenerate)
    anchors = sg.frame_times.copy()
    if align == "end":
        anchors = anchors + (sg.window_len - 1) / 2.0
    elif align != "center":
        raise ValueError(f"unknown alignment {align!r}")
    t = np.arange(n_samples, dtype=float)
    if method == "hold":
        idx = np.clip(np.searchsorted(anchors, t, side="right") - 1, 0, len(anchors) - 1)
        per_sample = per_frame[idx]
    elif method == "linear":
        per_sample = np.interp(t, anchors, per_frame)
    else:
        raise ValueError(f"unknown method {method!r}")
    return DominantFrequencies(per_frame, per_sample, degenerate)
