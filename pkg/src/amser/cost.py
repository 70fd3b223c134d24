"""Linear energy, latency and data-volume accounting for sensors and the edge node.

Absolute units are normalised so that the all-reliable configuration of each
application costs 1 J per window on each device and 1 latency unit (ms) on the edge.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .controller import ControlDecision, ModelKey, SensingConfig, SensingState
from .features import FeatureCatalog
from .signals import MODALITY_ORDER, ModalityKind, app_sensors

BYTES_PER_FEATURE = 8


@dataclass(frozen=True)
class CostParams:
    """Per-application cost coefficients (J, J/B, ms)."""

    application: str
    sense_energy: Mapping[ModalityKind, float]  # per window, sensor on
    idle_energy: Mapping[ModalityKind, float]  # per window, sensor idle
    tx_energy_per_byte: Mapping[ModalityKind, float]
    energy_per_feature: float
    inference_energy_base: float
    inference_energy_per_modality: Mapping[ModalityKind, float]
    latency_per_feature: float
    inference_latency_base: float
    inference_latency_per_modality: Mapping[ModalityKind, float]
    bytes_per_feature: int = BYTES_PER_FEATURE
    volume_mode: str = "features"  # or "raw": send bytes_per_window per enabled sensor

    def __post_init__(self):
        scalars = [self.energy_per_feature, self.inference_energy_base, self.latency_per_feature,
                   self.inference_latency_base]
        maps = [self.sense_energy, self.idle_energy, self.tx_energy_per_byte,
                self.inference_energy_per_modality, self.inference_latency_per_modality]
        values = scalars + [v for m in maps for v in m.values()]
        if not all(np.isfinite(v) and v >= 0 for v in values):
            raise ValueError("cost parameters must be finite and non-negative")
        for k, s in self.sense_energy.items():
            if not self.idle_energy[k] < s:
                raise ValueError(f"{k.value}: idle energy must be below sensing energy")
        if self.volume_mode not in ("features", "raw"):
            raise ValueError("volume_mode must be 'features' or 'raw'")

    @property
    def modalities(self) -> tuple[ModalityKind, ...]:
        return tuple(k for k in MODALITY_ORDER if k in self.sense_energy)

    def inference_energy(self, key: ModelKey) -> float:
        return self.inference_energy_base + sum(self._per(self.inference_energy_per_modality, key))

    def inference_latency(self, key: ModelKey) -> float:
        return self.inference_latency_base + sum(self._per(self.inference_latency_per_modality, key))

    def _per(self, table, key: ModelKey):
        if key.application != self.application:
            raise KeyError(f"model key {key} belongs to another application ({self.application})")
        for m in key.modality_set:
            if m not in table:
                raise KeyError(f"model key {key} uses {m.value}, unknown to the calibration")
            yield table[m]

    def to_json(self) -> dict:
        d = asdict(self)
        for name, v in d.items():
            if isinstance(v, Mapping):
                d[name] = {k.value: float(x) for k, x in v.items()}
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "CostParams":
        d = dict(d)
        for name, v in d.items():
            if isinstance(v, Mapping):
                d[name] = {ModalityKind(k): float(x) for k, x in v.items()}
        return cls(**d)


@dataclass(frozen=True)
class CostReport:
    sensor_energy: float
    edge_energy: float
    latency: float
    tx_bytes: int
    feature_count: int
    retention: Fraction
    reduction_vs_baseline: Fraction

    def gains(self, baseline: "CostReport") -> dict[str, float]:
        return {
            "sensor_energy_gain": baseline.sensor_energy / self.sensor_energy,
            "edge_energy_gain": baseline.edge_energy / self.edge_energy,
            "speedup": baseline.latency / self.latency,
            "data_reduction": float(self.reduction_vs_baseline),
        }


def modality_bytes(decision: ControlDecision, catalog: FeatureCatalog,
                   params: CostParams | None = None) -> dict[ModalityKind, int]:
    """Bytes each enabled modality sends to the edge this window."""
    per = params.bytes_per_feature if params else BYTES_PER_FEATURE
    raw = params is not None and params.volume_mode == "raw"
    sensors = app_sensors(catalog.application) if raw else {}
    out = {}
    for kind in catalog.modalities:
        if decision.sensing.state(kind) is SensingState.OFF:
            out[kind] = 0
        elif raw:
            out[kind] = sensors[kind].bytes_per_window
        else:
            out[kind] = per * len(catalog.selected(kind, decision.mask.mode(kind)))
    return out


def data_volume(decision: ControlDecision, catalog: FeatureCatalog,
                params: CostParams | None = None) -> int:
    return sum(modality_bytes(decision, catalog, params).values())


def sensor_energy(sensing: SensingConfig, params: CostParams,
                  tx_bytes: Mapping[ModalityKind, int] | None = None) -> float:
    """Sum over modalities of sense-or-idle energy plus transmission energy."""
    total = 0.0
    for kind in params.modalities:
        on = sensing.state(kind) is SensingState.ON
        total += params.sense_energy[kind] if on else params.idle_energy[kind]
        if tx_bytes is not None:
            total += params.tx_energy_per_byte[kind] * tx_bytes.get(kind, 0)
    return total


def edge_cost(decision: ControlDecision, params: CostParams) -> tuple[float, float]:
    """(energy J, latency ms) for feature handling plus one inference."""
    if decision.model_key is None:
        return (params.energy_per_feature * decision.feature_count,
                params.latency_per_feature * decision.feature_count)
    n = decision.feature_count
    return (params.energy_per_feature * n + params.inference_energy(decision.model_key),
            params.latency_per_feature * n + params.inference_latency(decision.model_key))


def report(decision: ControlDecision, catalog: FeatureCatalog, params: CostParams,
           baseline_bytes: int | None = None) -> CostReport:
    per_mod = modality_bytes(decision, catalog, params)
    tx = sum(per_mod.values())
    if baseline_bytes is None:
        full = dict.fromkeys(catalog.modalities, 0)
        for k in catalog.modalities:
            full[k] = (app_sensors(catalog.application)[k].bytes_per_window
                       if params.volume_mode == "raw"
                       else params.bytes_per_feature * len(catalog.features[k]))
        baseline_bytes = sum(full.values())
    e, lat = edge_cost(decision, params)
    reduction = Fraction(baseline_bytes, tx) if tx else Fraction(0)
    return CostReport(sensor_energy(decision.sensing, params, per_mod), e, lat, tx,
                      decision.feature_count, decision.retention, reduction)


# --- calibration -------------------------------------------------------------

@dataclass
class FitResult:
    params: CostParams
    residuals: list[dict] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max(abs(r["rel_error"]) for r in self.residuals)


def _solve(rows: np.ndarray, targets: np.ndarray, prior: np.ndarray, ridge: float,
           lower: float) -> np.ndarray:
    # rows @ x approximates 1/gain; the first row is the S1 normalisation
    w = 1.0 / targets
    w[0] *= 100.0
    A = np.vstack([rows * w[:, None], np.sqrt(ridge) * np.eye(prior.size)])
    b = np.concatenate([targets * w, np.sqrt(ridge) * prior])
    res = lsq_linear(A, b, bounds=(lower, np.inf), method="bvls")
    return res.x


def fit_calibration(catalog: FeatureCatalog, decisions: Sequence[ControlDecision],
                    targets: Mapping[str, Sequence[float]], idle_ratio: float = 0.05,
                    ridge: float = 1e-3, lower: float = 1e-6) -> FitResult:
    """Least-squares fit of cost coefficients to published gain ratios.

    ``decisions[0]`` must be the all-reliable configuration. ``targets`` maps
    ``sensor_energy_gain``, ``edge_energy_gain`` and ``speedup`` to one gain per
    decision. Each cost is linear in its coefficients, so ``1 / gain`` is a
    linear least-squares problem once the first configuration is pinned to 1.
    """
    mods = catalog.modalities
    n = len(mods)
    per = BYTES_PER_FEATURE

    def sensor_row(d):
        on = [d.sensing.state(k) is SensingState.ON for k in mods]
        sense = [1.0 if o else idle_ratio for o in on]
        tx = [per * len(catalog.selected(k, d.mask.mode(k))) if o else 0.0
              for k, o in zip(mods, on)]
        return sense + tx

    def edge_row(d):
        active = d.model_key.modality_set if d.model_key else ()
        return [float(d.feature_count), 1.0 if d.model_key else 0.0] + \
               [1.0 if k in active else 0.0 for k in mods]

    s_rows = np.array([sensor_row(d) for d in decisions])
    e_rows = np.array([edge_row(d) for d in decisions])
    full_tx = np.array([per * len(catalog.features[k]) for k in mods], float)
    s_prior = np.concatenate([np.full(n, 0.5 / n), 0.5 / n / full_tx])
    e_prior = np.concatenate([[0.5 / catalog.total], [0.25], np.full(n, 0.25 / n)])

    inv = {name: 1.0 / np.asarray(g, float) for name, g in targets.items()}
    xs = _solve(s_rows, inv["sensor_energy_gain"], s_prior, ridge, lower)
    xe = _solve(e_rows, inv["edge_energy_gain"], e_prior, ridge, lower)
    xl = _solve(e_rows, inv["speedup"], e_prior, ridge, lower)

    sense = dict(zip(mods, xs[:n]))
    params = CostParams(
        application=catalog.application,
        sense_energy=sense,
        idle_energy={k: idle_ratio * v for k, v in sense.items()},
        tx_energy_per_byte=dict(zip(mods, xs[n:])),
        energy_per_feature=float(xe[0]),
        inference_energy_base=float(xe[1]),
        inference_energy_per_modality=dict(zip(mods, xe[2:])),
        latency_per_feature=float(xl[0]),
        inference_latency_base=float(xl[1]),
        inference_latency_per_modality=dict(zip(mods, xl[2:])),
    )
    reports = [report(d, catalog, params) for d in decisions]
    residuals = []
    for i, r in enumerate(reports):
        got = r.gains(reports[0])
        for name, want in targets.items():
            g = got[name]
            residuals.append({"scenario": i + 1, "metric": name, "target": float(want[i]),
                              "fitted": g, "rel_error": g / float(want[i]) - 1.0})
    return FitResult(params, residuals)


def load_calibration(path, application: str) -> CostParams:
    data = json.loads(Path(path).read_text())
    if application not in data:
        raise KeyError(f"{path} has no calibration for {application!r}")
    return CostParams.from_json(data[application]["params"])
