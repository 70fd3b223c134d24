"""Baseline wander and motion artifact injection at a controlled SNR."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.signal.windows import tukey

from .signals import SignalWindow

SNR_CAP_DB = 120.0


class NoiseKind(str, enum.Enum):
    BW = "BW"
    MA = "MA"


class DegenerateSignalError(ValueError):
    """The clean window carries no power, so no SNR target can be met."""


@dataclass(frozen=True)
class NoiseSpec:
    """One additive noise component.

    ``target_snr_db`` is relative to the window the noise is added to. Set
    ``amplitude=0`` for a zero-noise spec (output equals input).
    """

    kind: NoiseKind
    target_snr_db: float = 10.0
    burst_density: float = 2.0  # MA transients per minute
    seed: int = 0
    amplitude: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not np.isfinite(self.target_snr_db):
            raise ValueError("target_snr_db must be finite")
        if self.burst_density < 0:
            raise ValueError("burst_density must be non-negative")


@dataclass(frozen=True)
class NoiseRealization:
    noise: np.ndarray  # shape (channels, n), already scaled
    bursts: tuple[tuple[float, float], ...]  # (start, stop) seconds, MA only
    frequencies: tuple[float, ...]  # BW tone frequencies


def power(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.mean(x * x))


def _bw_shape(n: int, fs: float, rng: np.random.Generator) -> tuple[np.ndarray, tuple[float, ...]]:
    t = np.arange(n) / fs
    k = int(rng.integers(1, 4))
    freqs = rng.uniform(0.1, 0.35, k)
    phases = rng.uniform(0, 2 * np.pi, k)
    weights = rng.uniform(0.5, 1.0, k)
    x = sum(w * np.sin(2 * np.pi * f * t + p) for f, p, w in zip(freqs, phases, weights))
    return x, tuple(float(f) for f in freqs)


def _ma_shape(n: int, fs: float, duration: float, density: float,
              rng: np.random.Generator) -> tuple[np.ndarray, tuple[tuple[float, float], ...]]:
    x = np.zeros(n)
    count = int(round(density * duration / 60.0))
    if count == 0:
        return x, ()
    # one burst per equal slot keeps bursts disjoint and separable
    slot = duration / count
    bursts = []
    f_hi = 0.45 * fs
    for i in range(count):
        length = rng.uniform(0.5, 2.0)
        length = min(length, 0.8 * slot)
        start = i * slot + rng.uniform(0.1 * slot, slot - length - 0.05 * slot)
        i0 = int(round(start * fs))
        m = max(2, int(round(length * fs)))
        m = min(m, n - i0)
        tt = np.arange(m) / fs
        # linear sweep from 0.5 Hz to 0.45*fs over the burst
        k = (f_hi - 0.5) / max(length, 1e-9)
        phase = 2 * np.pi * (0.5 * tt + 0.5 * k * tt * tt) + rng.uniform(0, 2 * np.pi)
        x[i0:i0 + m] += tukey(m, 0.2) * np.sin(phase) * rng.uniform(0.7, 1.0)
        bursts.append((i0 / fs, (i0 + m) / fs))
    return x, tuple(bursts)


def realize(window: SignalWindow, spec: NoiseSpec) -> NoiseRealization:
    """Draw and scale the noise ``inject`` would add, with its event log."""
    n = window.samples.shape[1]
    fs = window.sample_rate
    rng = np.random.default_rng(spec.seed)
    if spec.kind is NoiseKind.BW:
        shape, freqs = _bw_shape(n, fs, rng)
        bursts: tuple = ()
    else:
        shape, bursts = _ma_shape(n, fs, window.duration, spec.burst_density, rng)
        freqs = ()
    noise = np.broadcast_to(shape, window.samples.shape).copy()

    if spec.amplitude is not None:
        return NoiseRealization(spec.amplitude * noise, bursts, freqs)

    p_clean = power(window.samples)
    p_noise = power(noise)
    if p_clean <= 0:
        raise DegenerateSignalError("window has zero power; SNR target unattainable")
    if p_noise <= 0:
        return NoiseRealization(noise, bursts, freqs)
    gain = np.sqrt(p_clean / (p_noise * 10 ** (spec.target_snr_db / 10)))
    return NoiseRealization(gain * noise, bursts, freqs)


def inject(window: SignalWindow, spec: NoiseSpec) -> SignalWindow:
    """Return ``window`` plus one noise component scaled to the target SNR."""
    noise = realize(window, spec).noise
    return window.with_samples(window.samples + noise)


def measure_snr(clean: SignalWindow, noisy: SignalWindow) -> float:
    """Reference SNR in dB, capped at +120 dB for a zero residual."""
    a, b = _samples(clean), _samples(noisy)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if isinstance(clean, SignalWindow) and isinstance(noisy, SignalWindow):
        if clean.sample_rate != noisy.sample_rate:
            raise ValueError("sample rate mismatch")
    p_res = power(b - a)
    p_sig = power(a)
    if p_res == 0:
        return SNR_CAP_DB
    if p_sig == 0:
        return -SNR_CAP_DB
    return float(np.clip(10 * np.log10(p_sig / p_res), -SNR_CAP_DB, SNR_CAP_DB))


def _samples(w) -> np.ndarray:
    return w.samples if isinstance(w, SignalWindow) else np.asarray(w, dtype=float)
