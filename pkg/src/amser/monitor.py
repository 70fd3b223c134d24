"""Per-modality signal monitoring: attachment, blind SNR and discrepancy rules."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import dsp
from .signals import ModalityKind, SensorStatus, SignalWindow

SNR_FLOOR_DB = -120.0
SNR_CEIL_DB = 120.0

# In-band regions for the blind SNR. EDA differs from its pre-processing band:
# baseline wander sits inside a 1 Hz low-pass, so EDA counts only its tonic
# level (DC) and the slowest drift as signal.
MONITOR_BANDS = {
    ModalityKind.ECG: (0.5, 40.0),
    ModalityKind.PPG: (0.5, 8.0),
    ModalityKind.EMG: (20.0, 150.0),
    ModalityKind.EDA: (0.0, 0.05),
}
# the non-pulsatile PPG level and the EDA skin conductance level are signal, not drift
DC_IN_BAND = frozenset({ModalityKind.PPG, ModalityKind.EDA})
BLIND_SEGMENT_S = 16.0


class ReliabilityLabel(enum.IntEnum):
    """Ordered so that a larger value is a better label."""

    NOISY = 0
    UNCERTAIN = 1
    RELIABLE = 2

    def __str__(self):
        return self.name.capitalize()

    @classmethod
    def parse(cls, value) -> "ReliabilityLabel":
        if isinstance(value, cls):
            return value
        return cls[str(value).upper()]


@dataclass(frozen=True)
class QualityThresholds:
    threshold1: float = 5.0
    threshold2: float = 15.0

    def __post_init__(self):
        if not self.threshold1 < self.threshold2:
            raise ValueError("threshold1 must be below threshold2")


@dataclass(frozen=True)
class DiscrepancyRules:
    hr_range: tuple[float, float] = (40.0, 180.0)
    rri_range: tuple[float, float] = (0.33, 1.5)
    rri_ratio_max: float = 2.2
    eda_min_amplitude: float = 0.05
    eda_tonic_flat_std: float = 0.01
    eda_flat_min_duration: float = 60.0

    def __post_init__(self):
        for lo, hi in (self.hr_range, self.rri_range):
            if not 0 < lo < hi:
                raise ValueError("ranges need 0 < min < max")
        if min(self.rri_ratio_max, self.eda_min_amplitude, self.eda_tonic_flat_std,
               self.eda_flat_min_duration) <= 0:
            raise ValueError("rule bounds must be positive")


@dataclass(frozen=True)
class EdaTonicStats:
    amplitude: float  # mean skin conductance level, uS
    flat_duration: float  # longest stretch with rolling tonic std below the flat bound, s


@dataclass(frozen=True)
class Discrepancy:
    passed: bool
    reason: str = ""

    def __bool__(self):
        return self.passed


PASS = Discrepancy(True)


def blind_snr(window: SignalWindow) -> float:
    """Reference-free SNR: in-band over out-of-band power of the PSD, in dB.

    Long segments keep sub-band wander from leaking across the lower band
    edge. For modalities in ``DC_IN_BAND`` the window mean counts as signal.
    """
    low, high = MONITOR_BANDS[window.kind]
    high = min(high, 0.45 * window.sample_rate)
    spec = dsp.psd(window, BLIND_SEGMENT_S)
    f, p, df = spec.freqs, spec.power, spec.resolution
    in_mask = (f >= low) & (f <= high)
    p_in = float(np.sum(p[in_mask]) * df)
    p_out = float(np.sum(p[~in_mask]) * df)
    if low == 0 or window.kind in DC_IN_BAND:
        p_in += spec.mean ** 2
    if p_in <= 0:
        return SNR_FLOOR_DB
    if p_out <= 0:
        return SNR_CEIL_DB
    return float(np.clip(10 * np.log10(p_in / p_out), SNR_FLOOR_DB, SNR_CEIL_DB))


def label_quality(status: SensorStatus, snr_db: float, th: QualityThresholds) -> ReliabilityLabel:
    if SensorStatus(status) is SensorStatus.DETACHED:
        return ReliabilityLabel.NOISY
    if snr_db <= th.threshold1:
        return ReliabilityLabel.NOISY
    if snr_db <= th.threshold2:
        return ReliabilityLabel.UNCERTAIN
    return ReliabilityLabel.RELIABLE


def eda_tonic_stats(window: SignalWindow, rules: DiscrepancyRules = DiscrepancyRules(),
                    span_s: float = 10.0) -> EdaTonicStats:
    x = np.asarray(window.lead, dtype=float)
    fs = window.sample_rate
    size = max(2, int(round(span_s * fs)))
    m = uniform_filter1d(x, size, mode="nearest")
    m2 = uniform_filter1d(x * x, size, mode="nearest")
    rolling_std = np.sqrt(np.clip(m2 - m * m, 0.0, None))
    flat = rolling_std < rules.eda_tonic_flat_std
    longest = run = 0
    for v in flat:
        run = run + 1 if v else 0
        longest = max(longest, run)
    return EdaTonicStats(float(np.mean(x)), longest / fs)


def discrepancy_check(kind: ModalityKind, derived, rules: DiscrepancyRules) -> Discrepancy:
    """Second-layer, modality-specific plausibility rules."""
    kind = ModalityKind(kind)
    if kind is ModalityKind.EMG:
        return PASS
    if derived is None:
        return Discrepancy(False, "insufficient_data")
    if kind in (ModalityKind.ECG, ModalityKind.PPG):
        if not isinstance(derived, dsp.RriSeries):
            return Discrepancy(False, "insufficient_data")
        lo, hi = rules.hr_range
        if not lo <= derived.mean_hr_bpm <= hi:
            return Discrepancy(False, "hr_out_of_range")
        lo, hi = rules.rri_range
        if derived.min_rri < lo or derived.max_rri > hi:
            return Discrepancy(False, "rri_out_of_range")
        if derived.rri_ratio > rules.rri_ratio_max:
            return Discrepancy(False, "rri_ratio")
        return PASS
    if not isinstance(derived, EdaTonicStats):
        return Discrepancy(False, "insufficient_data")
    if (derived.amplitude < rules.eda_min_amplitude
            and derived.flat_duration >= rules.eda_flat_min_duration):
        return Discrepancy(False, "flat_tonic")
    return PASS


def derive(window: SignalWindow, rules: DiscrepancyRules = DiscrepancyRules(),
           filtered: SignalWindow | None = None):
    """Stats the discrepancy rules need, or ``None`` when unavailable.

    ``filtered`` is the band-passed window, if already computed.
    """
    if window.kind in (ModalityKind.ECG, ModalityKind.PPG):
        try:
            return dsp.to_rri(dsp.detect_peaks(filtered if filtered is not None else dsp.bandpass(window)))
        except dsp.InsufficientDataError:
            return None
    if window.kind is ModalityKind.EDA:
        return eda_tonic_stats(window, rules)
    return None


def monitor(window: SignalWindow, derived, status: SensorStatus,
            th: QualityThresholds = QualityThresholds(),
            rules: DiscrepancyRules = DiscrepancyRules(),
            snr_db: float | None = None) -> ReliabilityLabel:
    """Label one modality window: attachment, SNR bands, then discrepancy downgrade.

    ``window`` is the raw (unfiltered) window; ``derived`` is what
    :func:`derive` returns for it. ``snr_db`` may be passed when already known.
    """
    if snr_db is None:
        snr_db = blind_snr(window)
    label = label_quality(status, snr_db, th)
    if label is ReliabilityLabel.RELIABLE and not discrepancy_check(window.kind, derived, rules):
        label = ReliabilityLabel.UNCERTAIN
    return label
