"""Period and peak-probability extraction from a P(x0, t) record."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NoDominantPeak, PeriodTooLongForSeries, SeriesTooShort

MIN_SERIES = 64
PEAK_TO_MEDIAN = 3.0


@dataclass(frozen=True)
class PeriodEstimate:
    Q: float
    dominant_frequency: float
    peak_power: float
    resolution: float

    def to_dict(self) -> dict:
        d = asdict(self)
        return {"Q": d["Q"], "dominantFrequency": d["dominant_frequency"],
                "spectrumPeakPower": d["peak_power"], "resolution": d["resolution"]}


@dataclass(frozen=True)
class PmaxEstimate:
    Pmax: float
    stddev: float
    groups: int

    def to_dict(self) -> dict:
        return asdict(self)


def power_spectrum(series, window: str | None = None):
    """One-sided power of the DC-removed series; returns (freqs, power)."""
    p = np.asarray(series, dtype=float)
    p = p - p.mean()
    if window == "hann":
        p = p * np.hanning(len(p))
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    power = np.abs(np.fft.rfft(p)) ** 2
    return np.fft.rfftfreq(len(p)), power


def estimate_period(series, window: str | None = None) -> PeriodEstimate:
    """Dominant period of ``series`` from the peak of its power spectrum.

    The DC bin is dropped, ties go to the lowest frequency, and the peak bin is
    refined by a parabola through it and its two neighbours.
    """
    series = np.asarray(series, dtype=float)
    n = len(series)
    if n < MIN_SERIES:
        raise SeriesTooShort(f"need at least {MIN_SERIES} samples, got {n}")
    freqs, power = power_spectrum(series, window)
    body = power[1:]
    i = int(np.argmax(body)) + 1
    peak = float(power[i])
    median = float(np.median(body))
    if not peak > 0 or peak < PEAK_TO_MEDIAN * median:
        raise NoDominantPeak(f"peak power {peak:.3g} vs median {median:.3g}")
    shift = 0.0
    if 1 < i < len(power) - 1:
        a, b, c = power[i - 1], power[i], power[i + 1]
        denom = a - 2 * b + c
        if denom != 0:
            shift = 0.5 * (a - c) / denom
    f = (i + shift) / n
    Q = 1.0 / f
    if Q <= 2:
        raise NoDominantPeak(f"dominant period {Q:.3g} is at or below Nyquist")
    return PeriodEstimate(Q=Q, dominant_frequency=f, peak_power=peak, resolution=1.0 / n)


def estimate_pmax(series, Q: float, min_groups: int = 3) -> PmaxEstimate:
    """Mean and spread of the per-window maxima over windows of round(Q) steps.

    The trailing partial window is discarded.
    """
    series = np.asarray(series, dtype=float)
    width = int(round(Q))
    if width < 1:
        raise ValueError(f"period must be >= 1, got {Q}")
    groups = len(series) // width
    if groups < min_groups:
        raise PeriodTooLongForSeries(
            f"{len(series)} samples hold only {groups} windows of {width} (need {min_groups})"
        )
    maxima = series[:groups * width].reshape(groups, width).max(axis=1)
    return PmaxEstimate(Pmax=float(maxima.mean()), stddev=float(maxima.std()), groups=groups)
