"""Domain types for multimodal windows and deterministic synthetic signals."""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

WINDOW_SECONDS = 60


class ModalityKind(str, enum.Enum):
    ECG = "ECG"
    EMG = "EMG"
    PPG = "PPG"
    EDA = "EDA"


# fixed fusion order
MODALITY_ORDER = (ModalityKind.ECG, ModalityKind.EMG, ModalityKind.PPG, ModalityKind.EDA)


class SensorStatus(str, enum.Enum):
    ATTACHED = "Attached"
    DETACHED = "Detached"
    IDLE = "Idle"


class ShortStreamWarning(UserWarning):
    """Raised (as a warning) when a stream is shorter than one window."""


@dataclass(frozen=True)
class SensorSpec:
    kind: ModalityKind
    sample_rate: int
    channels: int = 1
    bytes_per_window: int = 512
    status: SensorStatus = SensorStatus.ATTACHED

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.bytes_per_window <= 0:
            raise ValueError("bytes_per_window must be positive")

    @property
    def samples_per_window(self) -> int:
        return self.sample_rate * WINDOW_SECONDS


PAIN_SENSORS = {
    ModalityKind.ECG: SensorSpec(ModalityKind.ECG, 500, channels=2, bytes_per_window=8192),
    ModalityKind.EMG: SensorSpec(ModalityKind.EMG, 500, channels=1, bytes_per_window=8192),
    ModalityKind.PPG: SensorSpec(ModalityKind.PPG, 64, channels=1, bytes_per_window=512),
    ModalityKind.EDA: SensorSpec(ModalityKind.EDA, 4, channels=1, bytes_per_window=32),
}

STRESS_SENSORS = {
    ModalityKind.ECG: SensorSpec(ModalityKind.ECG, 700, channels=1, bytes_per_window=8192),
    ModalityKind.PPG: SensorSpec(ModalityKind.PPG, 64, channels=1, bytes_per_window=512),
    ModalityKind.EDA: SensorSpec(ModalityKind.EDA, 4, channels=1, bytes_per_window=32),
}


def app_sensors(app: str) -> dict[ModalityKind, SensorSpec]:
    app = app.lower()
    if app == "pain":
        return dict(PAIN_SENSORS)
    if app == "stress":
        return dict(STRESS_SENSORS)
    raise ValueError(f"unknown application {app!r}")


@dataclass(frozen=True, eq=False)
class SignalWindow:
    """One window of one modality.

    ``samples`` has shape ``(channels, n)``. ``events`` holds ground-truth event
    times (R-peaks, pulse onsets, SCR onsets) when the window is synthetic.
    """

    kind: ModalityKind
    samples: np.ndarray
    sample_rate: int
    duration: float = WINDOW_SECONDS
    window_index: int = 0
    events: tuple[float, ...] = field(default=())

    def __post_init__(self):
        x = np.array(self.samples, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ValueError("samples must be 1-D or (channels, n)")
        if self.sample_rate <= 0 or self.duration <= 0:
            raise ValueError("sample_rate and duration must be positive")
        expected = int(round(self.sample_rate * self.duration))
        if x.shape[1] != expected:
            raise ValueError(
                f"{self.kind.value} window has {x.shape[1]} samples per channel, "
                f"expected {expected} (rate {self.sample_rate} x {self.duration} s)"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("window samples must be finite")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def lead(self) -> np.ndarray:
        """First channel; the one all single-channel processing uses."""
        return self.samples[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.shape[1]) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "SignalWindow":
        return replace(self, samples=samples)


@dataclass(frozen=True)
class SynthParams:
    heart_rate_bpm: float = 70.0
    amplitude: float = 1.0
    tonic: float = 2.0
    scr_rate: float = 0.0  # phasic events per minute
    hrv: float = 0.0  # relative beat-to-beat jitter (std)
    drift: float = 0.0  # EDA tonic drift amplitude over the window
    seed: int = 0


_SCR_RISE, _SCR_DECAY = 0.75, 4.0
_t_peak = np.log(_SCR_DECAY / _SCR_RISE) * _SCR_RISE * _SCR_DECAY / (_SCR_DECAY - _SCR_RISE)
_SCR_PEAK = float(np.exp(-_t_peak / _SCR_DECAY) - np.exp(-_t_peak / _SCR_RISE))


def _beat_times(hr: float, duration: float, hrv: float, rng: np.random.Generator) -> np.ndarray:
    period = 60.0 / hr
    if hrv <= 0:
        n = int(np.floor(duration / period - 0.5)) + 1
        t = (np.arange(n) + 0.5) * period
        return t[t < duration]
    times = []
    t = 0.5 * period
    while t < duration:
        times.append(t)
        t += period * max(0.5, 1.0 + hrv * rng.standard_normal())
    return np.asarray(times)


def _gaussian_train(t: np.ndarray, centers: np.ndarray, width: float, amp) -> np.ndarray:
    out = np.zeros_like(t)
    fs = 1.0 / (t[1] - t[0])
    half = int(np.ceil(6 * width * fs))
    amp = np.broadcast_to(amp, centers.shape)
    for c, a in zip(centers, amp):
        i = int(round(c * fs))
        lo, hi = max(0, i - half), min(t.size, i + half + 1)
        out[lo:hi] += a * np.exp(-0.5 * ((t[lo:hi] - c) / width) ** 2)
    return out


def _band_noise(n: int, fs: float, low: float, high: float, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < low) | (f > high)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (x.std() + 1e-12)


def synth(kind: ModalityKind, params: SynthParams, spec: SensorSpec,
          duration: float = WINDOW_SECONDS, window_index: int = 0) -> SignalWindow:
    """Generate one deterministic synthetic window for ``kind``."""
    if spec.sample_rate <= 0 or duration <= 0:
        raise ValueError("sample rate and duration must be positive")
    if kind in (ModalityKind.ECG, ModalityKind.PPG) and not 30 <= params.heart_rate_bpm <= 220:
        raise ValueError(f"heart rate {params.heart_rate_bpm} bpm outside [30, 220]")
    fs = spec.sample_rate
    n = int(round(fs * duration))
    t = np.arange(n) / fs
    rng = np.random.default_rng(params.seed)
    kind = ModalityKind(kind)

    if kind is ModalityKind.ECG:
        beats = _beat_times(params.heart_rate_bpm, duration, params.hrv, rng)
        lead = _gaussian_train(t, beats, 0.010, params.amplitude)
        # second lead: attenuated copy of the same beats
        chans = [lead] + [0.6 * lead for _ in range(spec.channels - 1)]
        return SignalWindow(kind, np.vstack(chans), fs, duration, window_index, tuple(beats))

    if kind is ModalityKind.PPG:
        beats = _beat_times(params.heart_rate_bpm, duration, params.hrv, rng)
        period = 60.0 / params.heart_rate_bpm
        systolic = _gaussian_train(t, beats, 0.08 * period, params.amplitude)
        diastolic = _gaussian_train(t, beats + 0.35 * period, 0.12 * period, 0.4 * params.amplitude)
        x = systolic + diastolic
        return SignalWindow(kind, np.vstack([x] * spec.channels), fs, duration, window_index,
                            tuple(beats))

    if kind is ModalityKind.EDA:
        x = np.full(n, params.tonic, dtype=float)
        if params.drift:
            x += params.drift * np.sin(np.pi * t / duration - np.pi / 2)
        n_scr = int(round(params.scr_rate * duration / 60.0))
        onsets = np.sort(rng.uniform(0.0, duration - 5.0, n_scr)) if n_scr else np.empty(0)
        for onset in onsets:
            dt = np.clip(t - onset, 0.0, None)
            shape = np.exp(-dt / _SCR_DECAY) - np.exp(-dt / _SCR_RISE)
            x += params.amplitude * shape / _SCR_PEAK
        return SignalWindow(kind, np.vstack([x] * spec.channels), fs, duration, window_index,
                            tuple(onsets))

    if kind is ModalityKind.EMG:
        high = min(150.0, 0.45 * fs)
        carrier = _band_noise(n, fs, 20.0, high, rng)
        n_bursts = max(1, int(round(duration / 6)))
        centers = np.sort(rng.uniform(0, duration, n_bursts))
        env = 0.3 + _gaussian_train(t, centers, 0.6, 1.0)
        x = params.amplitude * carrier * env
        return SignalWindow(kind, np.vstack([x] * spec.channels), fs, duration, window_index,
                            tuple(centers))

    raise ValueError(f"unsupported modality {kind}")


def segment(stream, spec: SensorSpec, duration: float = WINDOW_SECONDS) -> list[SignalWindow]:
    """Split a continuous stream into consecutive non-overlapping windows.

    The trailing partial window is discarded. A stream shorter than one window
    yields an empty list and a :class:`ShortStreamWarning`.
    """
    x = np.asarray(stream, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    per = int(round(spec.sample_rate * duration))
    count = x.shape[1] // per
    if count == 0:
        warnings.warn(
            f"stream of {x.shape[1]} samples is shorter than one {duration:g} s window",
            ShortStreamWarning,
            stacklevel=2,
        )
        return []
    return [
        SignalWindow(spec.kind, x[:, i * per:(i + 1) * per], spec.sample_rate, duration, i)
        for i in range(count)
    ]


def write_csv(path, samples, sample_rate: float) -> None:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp"] + [f"ch{i}" for i in range(x.shape[0])])
        for i in range(x.shape[1]):
            w.writerow([f"{i / sample_rate:.6f}"] + [repr(float(v)) for v in x[:, i]])


def read_csv(path) -> tuple[np.ndarray, int]:
    """Read a ``timestamp,ch0[,ch1...]`` file; returns ``(samples, sample_rate)``."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2:
        raise ValueError("need at least two rows to infer the sample rate")
    rate = int(round(1.0 / np.median(np.diff(data[:, 0]))))
    return data[:, 1:].T.copy(), rate
