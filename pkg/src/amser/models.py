"""Model pool and inference engine.

Every reachable (modality set, feature mask) combination gets its own small
classifier trained on the matching columns of one shared synthetic dataset.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import noise
from .controller import ModelKey
from .features import FeatureCatalog, FeatureMask, FeatureVector, MaskMode, extract
from .signals import MODALITY_ORDER, ModalityKind, SynthParams, app_sensors, synth

log = logging.getLogger(__name__)

N_CLASSES = 3
HR_BASE, HR_STEP = 68.0, 10.0
TONIC_BASE, TONIC_STEP = 2.0, 0.5
EMG_BASE, EMG_STEP = 1.0, 0.3
Z_CLIP = 6.0  # bounds the pull of any one corrupted feature


class ModelUnavailableError(LookupError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Full-catalog features for each sample in two quality versions.

    ``X`` holds the reliable-band version of every modality (clean or mild
    wander), ``X_uncertain`` the same windows with uncertain-band wander.
    """

    keys: tuple[tuple[ModalityKind, str], ...]
    X: np.ndarray
    X_uncertain: np.ndarray
    y: np.ndarray

    def matrix(self, catalog: FeatureCatalog, mask: FeatureMask) -> tuple[np.ndarray, np.ndarray]:
        """Training matrix for ``mask``: Subset modalities come from the uncertain version."""
        idx = column_index(self.keys, catalog, mask)
        unc = np.array([mask.mode(self.keys[i][0]) is MaskMode.SUBSET for i in idx], dtype=bool)
        out = self.X[:, idx].copy()
        out[:, unc] = self.X_uncertain[:, idx[unc]]
        return out, idx

    def digest(self) -> str:
        h = hashlib.sha256(self.X.tobytes())
        h.update(self.X_uncertain.tobytes())
        h.update(self.y.tobytes())
        return h.hexdigest()


def column_index(keys, catalog: FeatureCatalog, mask: FeatureMask) -> np.ndarray:
    pos = {k: i for i, k in enumerate(keys)}
    idx = [pos[(kind, n)] for kind in mask.active for n in catalog.selected(kind, mask.mode(kind))]
    return np.asarray(idx, dtype=int)


def class_params(label: int, rng: np.random.Generator, seed: int) -> SynthParams:
    """Generator parameters for one window of class ``label`` with subject jitter."""
    return SynthParams(
        heart_rate_bpm=HR_BASE + HR_STEP * label + rng.uniform(-4, 4),
        amplitude=1.0,
        tonic=TONIC_BASE + TONIC_STEP * label + rng.uniform(-0.15, 0.15),
        scr_rate=2.0 + label + rng.uniform(0, 1),
        hrv=rng.uniform(0.01, 0.03),
        drift=rng.uniform(0.0, 0.1),
        seed=seed,
    )


def synth_windows(app: str, label: int, seed: int, window_index: int = 0):
    """One clean window per application modality, deterministic in ``seed``."""
    rng = np.random.default_rng([seed, label, 17])
    p = class_params(label, rng, seed)
    out = {}
    for kind, spec in app_sensors(app).items():
        params = p
        if kind is ModalityKind.EMG:
            params = SynthParams(amplitude=(EMG_BASE + EMG_STEP * label) * rng.uniform(0.9, 1.1),
                                 seed=seed)
        elif kind is ModalityKind.PPG:
            params = SynthParams(heart_rate_bpm=p.heart_rate_bpm, hrv=p.hrv, seed=seed,
                                 amplitude=rng.uniform(0.8, 1.2))
        elif kind is ModalityKind.EDA:
            params = SynthParams(tonic=p.tonic, scr_rate=p.scr_rate, drift=p.drift, seed=seed,
                                 amplitude=rng.uniform(0.2, 0.4))
        out[kind] = synth(kind, params, spec, window_index=window_index)
    return out


def make_dataset(catalog: FeatureCatalog, n_per_class: int = 40, seed: int = 0,
                 augment: float = 0.5, reliable_snr: tuple[float, float] = (20.0, 40.0),
                 uncertain_snr: tuple[float, float] = (7.0, 14.0)) -> Dataset:
    """Class-balanced synthetic dataset of full-catalog feature vectors.

    Class ``k`` raises heart rate by ``10k`` bpm, EDA tonic level by ``0.5k`` uS
    and EMG amplitude by ``0.3k``. In the reliable version each modality gets
    mild baseline wander with probability ``augment``; in the uncertain version
    every modality gets wander at an SNR drawn from ``uncertain_snr``.
    """
    rng = np.random.default_rng(seed)
    rel, unc, labels = [], [], []
    keys = None
    for _ in range(n_per_class):
        for label in range(N_CLASSES):
            s = int(rng.integers(2**31))
            wins = synth_windows(catalog.application, label, s)
            r_vecs, u_vecs = [], []
            for j, kind in enumerate(catalog.modalities):
                w = wins[kind]
                mild = float(rng.uniform(*reliable_snr))
                strong = float(rng.uniform(*uncertain_snr))
                wr = w
                if rng.random() < augment:
                    wr = noise.inject(w, noise.NoiseSpec("BW", mild, seed=s + 2 * j + 1))
                wu = noise.inject(w, noise.NoiseSpec("BW", strong, seed=s + 2 * j + 2))
                r_vecs.append(extract(wr, catalog))
                u_vecs.append(extract(wu, catalog))
            keys = keys or tuple(k for v in r_vecs for k in v.keys)
            rel.append(np.concatenate([v.values for v in r_vecs]))
            unc.append(np.concatenate([v.values for v in u_vecs]))
            labels.append(label)
    return Dataset(keys, np.vstack(rel), np.vstack(unc), np.asarray(labels, dtype=int))


@dataclass(frozen=True, eq=False)
class InferenceModel:
    kind: str  # "centroid" or "linear"
    classes: tuple[int, ...]
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray  # centroids (c, d) or linear weights (c, d)
    bias: np.ndarray  # (c,), zeros for centroid models
    feature_keys: tuple[tuple[ModalityKind, str], ...] = ()

    @property
    def input_len(self) -> int:
        return self.mean.size

    @property
    def degenerate(self) -> bool:
        return len(self.classes) == 1

    def __post_init__(self):
        d = self.mean.size
        if self.scale.shape != (d,) or self.weights.shape != (len(self.classes), d):
            raise ValueError("parameter shapes do not match input_len")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "classes": list(self.classes),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "feature_keys": [[m.value, n] for m, n in self.feature_keys],
        }

    @classmethod
    def from_json(cls, d: dict) -> "InferenceModel":
        c = len(d["classes"])
        return cls(d["kind"], tuple(d["classes"]), np.asarray(d["mean"], float),
                   np.asarray(d["scale"], float),
                   np.asarray(d["weights"], float).reshape(c, -1),
                   np.asarray(d["bias"], float),
                   tuple((ModalityKind(m), n) for m, n in d["feature_keys"]))


def train(X: np.ndarray, y: np.ndarray, kind: str = "centroid", epochs: int = 200,
          step: float = 0.1, seed: int = 0, feature_keys=(), input_len: int | None = None
          ) -> InferenceModel:
    """Fit a standardised nearest-centroid (default) or softmax linear model."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if input_len is not None and X.shape[1] != input_len:
        raise ValueError(f"dataset has {X.shape[1]} features, key expects {input_len}")
    if X.shape[0] != y.size or X.shape[0] == 0:
        raise ValueError("need a non-empty dataset with one label per row")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    Z = (X - mean) / scale
    classes = tuple(int(c) for c in np.unique(y))
    if kind == "centroid":
        W = np.vstack([Z[y == c].mean(axis=0) for c in classes])
        b = np.zeros(len(classes))
    elif kind == "linear":
        rng = np.random.default_rng(seed)
        W = 0.01 * rng.standard_normal((len(classes), Z.shape[1]))
        b = np.zeros(len(classes))
        onehot = (y[:, None] == np.asarray(classes)[None, :]).astype(float)
        for _ in range(epochs):
            logits = Z @ W.T + b
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            g = (p - onehot) / Z.shape[0]
            W -= step * g.T @ Z
            b -= step * g.sum(axis=0)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return InferenceModel(kind, classes, mean, scale, W, b, tuple(feature_keys))


def scores(model: InferenceModel, X: np.ndarray) -> np.ndarray:
    """Per-class scores, larger is better (negative squared distance for centroids)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.input_len:
        raise ValueError(f"vector has {X.shape[1]} features, model expects {model.input_len}")
    Z = np.clip((X - model.mean) / model.scale, -Z_CLIP, Z_CLIP)
    if model.kind == "centroid":
        d = ((Z[:, None, :] - model.weights[None, :, :]) ** 2).sum(axis=2)
        return -d
    return Z @ model.weights.T + model.bias


def predict(model: InferenceModel, X: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lower class index
    return np.asarray(model.classes)[np.argmax(scores(model, X), axis=1)]


def infer(model: InferenceModel, vector: FeatureVector | np.ndarray) -> tuple[int, float]:
    x = vector.values if isinstance(vector, FeatureVector) else np.asarray(vector, float)
    s = scores(model, x[None, :])[0]
    i = int(np.argmax(s))
    return model.classes[i], float(s[i])


def reachable_masks(catalog: FeatureCatalog) -> list[FeatureMask]:
    """Every mask a label combination can produce, except all-Empty."""
    mods = catalog.modalities
    out = []
    for combo in itertools.product(list(MaskMode), repeat=len(mods)):
        if all(m is MaskMode.EMPTY for m in combo):
            continue
        out.append(FeatureMask(dict(zip(mods, combo))))
    return out


@dataclass
class ModelPool:
    application: str
    models: dict[ModelKey, InferenceModel] = field(default_factory=dict)
    fallback_log: list[str] = field(default_factory=list)

    def __contains__(self, key) -> bool:
        return key in self.models

    def __len__(self):
        return len(self.models)

    def to_json(self) -> dict:
        entries = [
            {"modality_set": [m.value for m in k.modality_set],
             "mask_signature": k.mask_signature, "model": self.models[k].to_json()}
            for k in sorted(self.models, key=lambda k: k.mask_signature)
        ]
        body = {"application": self.application, "entries": entries}
        digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
        return {**body, "content_hash": digest}

    def save(self, path) -> str:
        data = self.to_json()
        Path(path).write_text(json.dumps(data, sort_keys=True))
        return data["content_hash"]

    @classmethod
    def load(cls, path) -> "ModelPool":
        data = json.loads(Path(path).read_text())
        body = {"application": data["application"], "entries": data["entries"]}
        digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
        if digest != data.get("content_hash"):
            raise ValueError(f"{path}: content hash mismatch, pool file is corrupt")
        pool = cls(data["application"])
        for e in data["entries"]:
            key = ModelKey(data["application"], tuple(ModalityKind(m) for m in e["modality_set"]),
                           e["mask_signature"])
            pool.models[key] = InferenceModel.from_json(e["model"])
        return pool


def build_pool(catalog: FeatureCatalog, dataset: Dataset, kind: str = "centroid",
               masks: Iterable[FeatureMask] | None = None) -> ModelPool:
    pool = ModelPool(catalog.application)
    for mask in (reachable_masks(catalog) if masks is None else masks):
        X, idx = dataset.matrix(catalog, mask)
        key = ModelKey.for_mask(catalog.application, mask)
        pool.models[key] = train(X, dataset.y, kind,
                                 feature_keys=tuple(dataset.keys[i] for i in idx))
    return pool


@dataclass(frozen=True)
class Selection:
    model: InferenceModel
    key: ModelKey
    fallback: bool = False

    def project(self, vector: FeatureVector) -> np.ndarray:
        """Input for ``model``: the vector itself, or zero-filled into the full layout."""
        if not self.fallback:
            return vector.values
        pos = {k: i for i, k in enumerate(self.model.feature_keys)}
        out = np.zeros(self.model.input_len)
        for k, v in zip(vector.keys, vector.values):
            out[pos[k]] = v
        # zero in standardised space, i.e. the training mean, for missing features
        missing = np.ones(self.model.input_len, bool)
        missing[[pos[k] for k in vector.keys]] = False
        out[missing] = self.model.mean[missing]
        return out


def select(pool: ModelPool, key: ModelKey) -> Selection:
    """Exact lookup, else the full-mask model over the same modalities."""
    if key in pool.models:
        return Selection(pool.models[key], key)
    full = FeatureMask({k: MaskMode.FULL for k in key.modality_set})
    alt = ModelKey(key.application, key.modality_set, full.signature())
    if alt in pool.models:
        msg = f"fallback: {key} -> {alt}"
        log.info(msg)
        pool.fallback_log.append(msg)
        return Selection(pool.models[alt], alt, fallback=True)
    raise ModelUnavailableError(f"no model for modality set "
                                f"{[m.value for m in key.modality_set]} ({key})")


def accuracy(model: InferenceModel, X: np.ndarray, y: Sequence[int]) -> float:
    return float(np.mean(predict(model, X) == np.asarray(y)))
