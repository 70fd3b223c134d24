"""Per-modality feature extraction and early fusion.

Feature names follow ``<group>.<stat>``:

``raw.*`` / ``filt.*``
    statistics of the raw or band-passed lead (``mean``, ``std``, ``rms``,
    ``qNN`` quantiles, ...).
``psd.*``
    spectral features of the raw lead: ``total_power``, ``median_frequency``,
    ``central_frequency``, ``bp_LO_HI`` band power, ``rbp_LO_HI`` relative to
    total power, ``ibp_LO_HI`` relative to the modality's physiological band.
``rri.*``
    heart-rate statistics from detected peaks (ECG, PPG).
``tonic.*`` / ``phasic.*``
    EDA tonic level (0.05 Hz low-pass) and phasic residual summaries.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats as sstats
from scipy.signal import find_peaks

from . import dsp
from .signals import MODALITY_ORDER, ModalityKind, SignalWindow


TONIC_TRIM_S = 10.0


class DegenerateSpectrumError(ValueError):
    pass


class MaskMode(str, enum.Enum):
    FULL = "Full"
    SUBSET = "Subset"
    EMPTY = "Empty"


@dataclass(frozen=True)
class FeatureCatalog:
    application: str
    features: Mapping[ModalityKind, tuple[str, ...]]
    uncertain_subset: Mapping[ModalityKind, tuple[str, ...]]

    def __post_init__(self):
        for kind, names in self.features.items():
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate feature names for {kind.value}")
            sub = self.uncertain_subset.get(kind, ())
            pos = {n: i for i, n in enumerate(names)}
            if any(n not in pos for n in sub):
                raise ValueError(f"{kind.value} uncertain subset is not within its catalog")
            if [pos[n] for n in sub] != sorted(pos[n] for n in sub):
                raise ValueError(f"{kind.value} uncertain subset must follow catalog order")

    @property
    def modalities(self) -> tuple[ModalityKind, ...]:
        return tuple(k for k in MODALITY_ORDER if k in self.features)

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.features.values())

    def selected(self, kind: ModalityKind, mode: MaskMode) -> tuple[str, ...]:
        mode = MaskMode(mode)
        if mode is MaskMode.FULL:
            return self.features[kind]
        if mode is MaskMode.SUBSET:
            return self.uncertain_subset[kind]
        return ()

    @classmethod
    def load(cls, path) -> "FeatureCatalog":
        data = json.loads(Path(path).read_text())
        feats, subs = {}, {}
        for name, entry in data["modalities"].items():
            kind = ModalityKind(name)
            feats[kind] = tuple(entry["features"])
            subs[kind] = tuple(entry["uncertain_subset"])
        return cls(data["application"], feats, subs)

    def to_json(self) -> dict:
        return {
            "application": self.application,
            "modalities": {
                k.value: {
                    "features": list(self.features[k]),
                    "uncertain_subset": list(self.uncertain_subset[k]),
                }
                for k in self.modalities
            },
        }


@dataclass(frozen=True)
class FeatureMask:
    modes: Mapping[ModalityKind, MaskMode]

    def mode(self, kind: ModalityKind) -> MaskMode:
        return MaskMode(self.modes.get(kind, MaskMode.EMPTY))

    @property
    def active(self) -> tuple[ModalityKind, ...]:
        return tuple(k for k in MODALITY_ORDER if self.mode(k) is not MaskMode.EMPTY)

    def signature(self) -> str:
        return "|".join(f"{k.value}:{self.mode(k).value}" for k in self.active) or "none"

    def count(self, catalog: FeatureCatalog) -> int:
        return sum(len(catalog.selected(k, self.mode(k))) for k in self.active)

    def retention(self, catalog: FeatureCatalog) -> Fraction:
        return Fraction(self.count(catalog), catalog.total)

    @classmethod
    def full(cls, catalog: FeatureCatalog) -> "FeatureMask":
        return cls({k: MaskMode.FULL for k in catalog.modalities})


@dataclass(frozen=True, eq=False)
class FeatureVector:
    keys: tuple[tuple[ModalityKind, str], ...]
    values: np.ndarray
    window_index: int = 0
    valid: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.keys),):
            raise ValueError("values must match keys")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.keys)

    def as_dict(self) -> dict[tuple[ModalityKind, str], float]:
        return dict(zip(self.keys, self.values.tolist()))


# --- basic statistics -------------------------------------------------------

def time_features(window_or_samples) -> dict[str, float]:
    """mean, std (population), rms plus the other ``raw.*`` statistics."""
    x = window_or_samples.lead if isinstance(window_or_samples, SignalWindow) else window_or_samples
    return _Stats(np.asarray(x, dtype=float)).all()


def freq_features(spec: dsp.Spectrum) -> dict[str, float]:
    p, f = spec.power, spec.freqs
    total = float(np.sum(p))
    if total <= 0:
        raise DegenerateSpectrumError("all-zero spectrum")
    cum = np.cumsum(p)
    median = float(f[np.searchsorted(cum, 0.5 * total)])
    central = float(np.sum(f * p) / total)
    return {
        "total_power": total * spec.resolution,
        "median_frequency": median,
        "central_frequency": central,
    }


class _Stats:
    NAMES = ("mean", "std", "rms", "var", "min", "max", "range", "median", "mad", "iqr",
             "skew", "kurt", "linelen", "diffstd", "mcr")

    def __init__(self, x: np.ndarray):
        self.x = x

    @cached_property
    def sorted(self) -> np.ndarray:
        return np.sort(self.x)

    def quantile(self, q: float) -> float:
        s = self.sorted
        pos = q * (s.size - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, s.size - 1)
        return float(s[lo] + (pos - lo) * (s[hi] - s[lo]))

    def get(self, name: str) -> float:
        x = self.x
        m = re.fullmatch(r"q(\d\d)", name)
        if m:
            return self.quantile(int(m.group(1)) / 100)
        if name == "mean":
            return float(np.sum(x) / x.size)
        if name == "std":
            return float(np.std(x))
        if name == "rms":
            return float(np.sqrt(np.sum(x * x) / x.size))
        if name == "var":
            return float(np.var(x))
        if name == "min":
            return float(self.sorted[0])
        if name == "max":
            return float(self.sorted[-1])
        if name == "range":
            return float(self.sorted[-1] - self.sorted[0])
        if name == "median":
            return self.quantile(0.5)
        if name == "mad":
            return float(np.mean(np.abs(x - np.mean(x))))
        if name == "iqr":
            return self.quantile(0.75) - self.quantile(0.25)
        if name in ("skew", "kurt"):
            if np.std(x) < 1e-12:
                return 0.0
            return float(sstats.skew(x) if name == "skew" else sstats.kurtosis(x))
        if name == "linelen":
            return float(np.mean(np.abs(np.diff(x))))
        if name == "diffstd":
            return float(np.std(np.diff(x)))
        if name == "mcr":
            c = x - np.mean(x)
            return float(np.mean(np.signbit(c[1:]) != np.signbit(c[:-1])))
        raise KeyError(name)

    def all(self) -> dict[str, float]:
        out = {n: self.get(n) for n in self.NAMES}
        for q in (5, 25, 75, 95):
            out[f"q{q:02d}"] = self.quantile(q / 100)
        return out


# --- per-window context -----------------------------------------------------

class _Context:
    """Lazily computed intermediate results for one window."""

    def __init__(self, window: SignalWindow, filtered: SignalWindow | None = None):
        self.window = window
        self._filtered = filtered
        self.valid = True

    @cached_property
    def filtered(self) -> SignalWindow:
        return self._filtered if self._filtered is not None else dsp.bandpass(self.window)

    @cached_property
    def raw(self) -> _Stats:
        return _Stats(np.asarray(self.window.lead, dtype=float))

    @cached_property
    def filt(self) -> _Stats:
        return _Stats(np.asarray(self.filtered.lead, dtype=float))

    @cached_property
    def spectrum(self) -> dsp.Spectrum:
        return dsp.psd(self.window)

    @cached_property
    def freq(self) -> dict[str, float]:
        try:
            return freq_features(self.spectrum)
        except DegenerateSpectrumError:
            self.valid = False
            return {"total_power": 0.0, "median_frequency": 0.0, "central_frequency": 0.0}

    @cached_property
    def band_total(self) -> float:
        lo, hi = dsp.default_band(self.window.kind, self.window.sample_rate)
        return dsp.band_power(self.spectrum, lo, hi + 1e-9)

    @cached_property
    def rri(self) -> dsp.RriSeries | None:
        try:
            return dsp.to_rri(dsp.detect_peaks(self.filtered))
        except dsp.InsufficientDataError:
            return None

    @cached_property
    def _tonic_full(self) -> np.ndarray:
        w = self.window
        return np.asarray(dsp.bandpass(w, 0.0, min(0.05, 0.2 * w.sample_rate)).lead)

    @cached_property
    def tonic(self) -> np.ndarray:
        # the low-pass is long; its edges still carry padded noise
        t = self._tonic_full
        trim = min(int(round(TONIC_TRIM_S * self.window.sample_rate)), (t.size - 2) // 4)
        return t[trim:t.size - trim]

    @cached_property
    def phasic(self) -> np.ndarray:
        return np.asarray(self.window.lead) - self._tonic_full


def _rri_stat(rri: dsp.RriSeries, name: str) -> float:
    iv = rri.intervals
    hr = 60.0 / iv
    d = np.diff(iv)
    m = re.fullmatch(r"rri_q(\d\d)", name)
    if m:
        return float(np.quantile(iv, int(m.group(1)) / 100))
    table = {
        "hr_mean": lambda: rri.mean_hr_bpm,
        "hr_std": lambda: float(np.std(hr)),
        "hr_min": lambda: float(np.min(hr)),
        "hr_max": lambda: float(np.max(hr)),
        "hr_median": lambda: float(np.median(hr)),
        "rri_mean": lambda: float(np.mean(iv)),
        "rri_std": lambda: float(np.std(iv)),
        "rri_min": lambda: rri.min_rri,
        "rri_max": lambda: rri.max_rri,
        "rri_ratio": lambda: rri.rri_ratio,
        "rri_median": lambda: float(np.median(iv)),
        "rri_iqr": lambda: float(np.subtract(*np.quantile(iv, [0.75, 0.25]))),
        "rri_range": lambda: float(np.ptp(iv)),
        "rmssd": lambda: float(np.sqrt(np.mean(d * d))) if d.size else 0.0,
        "sdsd": lambda: float(np.std(d)) if d.size else 0.0,
        "pnn20": lambda: float(np.mean(np.abs(d) > 0.02)) if d.size else 0.0,
        "pnn50": lambda: float(np.mean(np.abs(d) > 0.05)) if d.size else 0.0,
        "cvrr": lambda: float(np.std(iv) / np.mean(iv)),
        "n_peaks": lambda: float(iv.size + 1),
    }
    return float(table[name]())


_BAND = re.compile(r"(bp|rbp|ibp)_([\d.]+)_([\d.]+)")


def _evaluate(ctx: _Context, name: str) -> float:
    group, _, stat = name.partition(".")
    if group == "raw":
        return ctx.raw.get(stat)
    if group == "filt":
        return ctx.filt.get(stat)
    if group == "psd":
        if stat in ("total_power", "median_frequency", "central_frequency"):
            return ctx.freq[stat]
        if stat == "peak_frequency":
            return float(ctx.spectrum.freqs[int(np.argmax(ctx.spectrum.power))])
        if stat == "entropy":
            p = ctx.spectrum.power
            s = p.sum()
            if s <= 0:
                return 0.0
            p = p[p > 0] / s
            return float(-np.sum(p * np.log2(p)))
        m = _BAND.fullmatch(stat)
        if m:
            kind, lo, hi = m.group(1), float(m.group(2)), float(m.group(3))
            bp = dsp.band_power(ctx.spectrum, lo, hi)
            if kind == "bp":
                return bp
            denom = ctx.spectrum.total_power if kind == "rbp" else ctx.band_total
            return bp / denom if denom > 0 else 0.0
    if group == "rri":
        if ctx.rri is None:
            ctx.valid = False
            return 0.0
        return _rri_stat(ctx.rri, stat)
    if group == "tonic":
        t = ctx.tonic
        if stat == "slope":
            tt = np.arange(t.size) / ctx.window.sample_rate
            return float(np.polyfit(tt, t, 1)[0])
        return _Stats(t).get(stat)
    if group == "phasic":
        p = ctx.phasic
        if stat == "count":
            idx = find_peaks(p, prominence=0.02)[0]
            return float(idx.size)
        if stat == "auc":
            return float(np.sum(np.clip(p, 0, None)) / ctx.window.sample_rate)
        return _Stats(p).get(stat)
    raise KeyError(f"unknown feature {name!r}")


def extract(window: SignalWindow, catalog: FeatureCatalog,
            filtered: SignalWindow | None = None) -> FeatureVector:
    """Compute the catalog's features for ``window``'s modality.

    ``window`` is the raw window; its band-passed version is computed unless
    given. If RR intervals cannot be derived the affected entries are zero and
    ``valid`` is False.
    """
    names = catalog.features[window.kind]
    ctx = _Context(window, filtered)
    values = np.array([_evaluate(ctx, n) for n in names], dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        values[bad] = 0.0
        ctx.valid = False
    keys = tuple((window.kind, n) for n in names)
    return FeatureVector(keys, values, window.window_index, ctx.valid)


def fuse(vectors: Mapping[ModalityKind, FeatureVector], mask: FeatureMask,
         catalog: FeatureCatalog) -> FeatureVector:
    """Concatenate per-modality vectors in ECG, EMG, PPG, EDA order, restricted to ``mask``."""
    keys: list = []
    parts: list = []
    valid = True
    index = 0
    for kind in mask.active:
        if kind not in vectors:
            raise ValueError(f"mask selects {kind.value}, which has no feature vector (disabled)")
        vec = vectors[kind]
        wanted = catalog.selected(kind, mask.mode(kind))
        pos = {k[1]: i for i, k in enumerate(vec.keys)}
        idx = [pos[n] for n in wanted]
        keys.extend((kind, n) for n in wanted)
        parts.append(vec.values[idx])
        valid &= vec.valid
        index = vec.window_index
    values = np.concatenate(parts) if parts else np.empty(0)
    return FeatureVector(tuple(keys), values, index, valid)
