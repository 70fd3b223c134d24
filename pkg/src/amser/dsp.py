"""Filtering, peak detection, RR intervals and PSD estimation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps
from scipy.ndimage import maximum_filter1d

from .signals import ModalityKind, SignalWindow

DEFAULT_BANDS = {
    ModalityKind.ECG: (0.5, 40.0),
    ModalityKind.PPG: (0.5, 8.0),
    ModalityKind.EDA: (0.0, 1.0),
    ModalityKind.EMG: (20.0, 150.0),
}

REFRACTORY_S = 0.25
THRESHOLD_WINDOW_S = 10.0


class InsufficientDataError(ValueError):
    """Too few peaks to derive RR intervals."""


@dataclass(frozen=True)
class PeakSeries:
    kind: ModalityKind
    peak_times: np.ndarray
    source_window: int = 0

    def __post_init__(self):
        t = np.asarray(self.peak_times, dtype=float)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("peak times must be strictly increasing")
        object.__setattr__(self, "peak_times", t)

    def __len__(self):
        return self.peak_times.size


@dataclass(frozen=True)
class RriSeries:
    intervals: np.ndarray

    @property
    def mean_hr_bpm(self) -> float:
        return 60.0 / float(np.mean(self.intervals))

    @property
    def min_rri(self) -> float:
        return float(np.min(self.intervals))

    @property
    def max_rri(self) -> float:
        return float(np.max(self.intervals))

    @property
    def rri_ratio(self) -> float:
        return self.max_rri / self.min_rri


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    power: np.ndarray
    resolution: float
    mean: float = 0.0  # DC level removed before estimation

    @property
    def total_power(self) -> float:
        return float(np.sum(self.power) * self.resolution)


def default_band(kind: ModalityKind, sample_rate: float) -> tuple[float, float]:
    low, high = DEFAULT_BANDS[ModalityKind(kind)]
    return low, min(high, 0.45 * sample_rate)


@lru_cache(maxsize=64)
def _fir(fs: float, low: float, high: float) -> np.ndarray:
    nyq = fs / 2
    widths = []
    if low > 0:
        widths.append(max(0.25, 0.5 * low))
    widths.append(max(0.1, min(0.25 * high, 2 * (nyq - high))))
    width = min(widths)
    numtaps = int(np.ceil(3.3 * fs / width)) | 1
    if low > 0:
        return sps.firwin(numtaps, [low, high], pass_zero=False, fs=fs)
    return sps.firwin(numtaps, high, fs=fs)


def _zero_phase(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    pad = min(3 * taps.size, n - 1)
    # odd extension at both ends, as filtfilt does
    left = 2 * x[..., :1] - x[..., pad:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-pad - 2:-1]
    xp = np.concatenate([left, x, right], axis=-1)
    y = sps.fftconvolve(xp, taps[None, :], mode="same", axes=-1)
    y = sps.fftconvolve(y, taps[None, :], mode="same", axes=-1)
    return y[..., pad:pad + n]


def bandpass(window: SignalWindow, low: float | None = None, high: float | None = None) -> SignalWindow:
    """Zero-phase FIR band-pass (``low == 0`` gives a low-pass)."""
    if low is None or high is None:
        d_low, d_high = default_band(window.kind, window.sample_rate)
        low = d_low if low is None else low
        high = d_high if high is None else high
    nyq = window.sample_rate / 2
    if not (0 <= low < high < nyq):
        raise ValueError(f"invalid band [{low}, {high}] for sample rate {window.sample_rate}")
    taps = _fir(float(window.sample_rate), float(low), float(high))
    return window.with_samples(_zero_phase(window.samples, taps))


def _rolling_threshold(x: np.ndarray, fs: float) -> np.ndarray:
    # amplitude = local peak envelope; raw sample percentiles sit on the
    # baseline for sparse ECG pulses
    n = x.size
    x = maximum_filter1d(x, size=max(1, int(round(2 * REFRACTORY_S * fs))), mode="nearest")
    span = min(n, int(round(THRESHOLD_WINDOW_S * fs)))
    hop = max(1, int(round(0.5 * fs)))
    starts = np.arange(0, n - span + 1, hop)
    views = sliding_window_view(x, span)[starts]
    p95 = np.percentile(views, 95, axis=1)
    centers = starts + span / 2
    return 0.5 * np.interp(np.arange(n), centers, p95)


def detect_peaks(window: SignalWindow) -> PeakSeries:
    """Adaptive-threshold local maxima with a 0.25 s refractory period."""
    x = np.asarray(window.lead, dtype=float)
    fs = window.sample_rate
    if x.size < 3 or np.std(x) < 1e-12:
        return PeakSeries(window.kind, np.empty(0), window.window_index)
    thr = _rolling_threshold(x, fs)
    idx, _ = sps.find_peaks(x, height=thr, distance=max(1, int(round(REFRACTORY_S * fs))))
    return PeakSeries(window.kind, idx / fs, window.window_index)


def to_rri(peaks: PeakSeries) -> RriSeries:
    if len(peaks) < 3:
        raise InsufficientDataError(f"need at least 3 peaks, got {len(peaks)}")
    return RriSeries(np.diff(peaks.peak_times))


def segment_length(sample_rate: float, seconds: float = 4.0) -> int:
    """Power-of-two segment closest to ``seconds``, never below 256 samples."""
    k = int(round(np.log2(seconds * sample_rate)))
    return max(256, 2 ** k)


def psd(window: SignalWindow, segment_s: float = 4.0) -> Spectrum:
    """Averaged periodogram of the lead channel (Hann, 50 % overlap).

    The mean is removed first and kept on the result. Power is scaled so that
    ``sum(power) * resolution`` equals the sample variance.
    """
    x = np.asarray(window.lead, dtype=float)
    fs = window.sample_rate
    mean = float(np.mean(x))
    x = x - mean
    nper = segment_length(fs, segment_s)
    if x.size < nper:
        x = np.concatenate([x, np.zeros(nper - x.size)])
    f, p = sps.welch(x, fs=fs, window="hann", nperseg=nper, noverlap=nper // 2,
                     detrend=False, scaling="density")
    res = float(f[1] - f[0])
    var = float(np.var(window.lead))
    total = float(np.sum(p) * res)
    if total > 0:
        p = p * (var / total)
    return Spectrum(f, p, res, mean)


def band_power(spec: Spectrum, low: float, high: float) -> float:
    m = (spec.freqs >= low) & (spec.freqs < high)
    return float(np.sum(spec.power[m]) * spec.resolution)
