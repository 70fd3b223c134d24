"""Scenario runner: synthesize, corrupt, monitor, decide, fuse, infer and account.

Every window is processed twice from the same noisy signals: once along the
adaptive path and once along a baseline that always fuses every modality with
the all-reliable model.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from . import cost, dsp, models, noise
from .controller import (ControlDecision, Recovery, SensingState, apply_commands, decide,
                         reconfigure)
from .features import FeatureCatalog, FeatureMask, extract, fuse
from .monitor import (DiscrepancyRules, QualityThresholds, ReliabilityLabel, derive, monitor)
from .signals import MODALITY_ORDER, ModalityKind, SensorStatus

log = logging.getLogger(__name__)

SCENARIOS = ("S1", "S2", "S3", "S4")
APPLICATIONS = ("pain", "stress")


class SetupError(RuntimeError):
    """A required input (pool, calibration, config) is missing or inconsistent."""


# --- configuration ------------------------------------------------------------

def config_dir() -> Path | None:
    d = os.environ.get("AMSER_CONFIG_DIR")
    return Path(d) if d else None


def resource_path(name: str) -> Path:
    """``name`` from ``$AMSER_CONFIG_DIR`` when present there, else the shipped copy."""
    d = config_dir()
    if d is not None and (d / name).exists():
        return d / name
    return Path(str(resources.files("amser") / "data" / name))


def load_config(path=None) -> dict:
    return json.loads(Path(path or resource_path("config.json")).read_text())


def load_catalog(app: str, path=None) -> FeatureCatalog:
    return FeatureCatalog.load(path or resource_path(f"{app}.catalog.json"))


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def json_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


# --- scenario specs -----------------------------------------------------------

@dataclass(frozen=True)
class NoiseComponent:
    kind: noise.NoiseKind
    snr_db: float
    burst_density: float = 2.0

    @classmethod
    def from_json(cls, d: Mapping) -> "NoiseComponent":
        return cls(noise.NoiseKind(d["kind"]), float(d["snr_db"]),
                   float(d.get("burst_density", 2.0)))


@dataclass(frozen=True)
class CellSpec:
    """Noise applied to one modality in one scenario."""

    preset: str = "None"
    components: tuple[NoiseComponent, ...] = ()
    detached: bool = False


@dataclass(frozen=True)
class ScenarioSpec:
    application: str
    name: str
    cells: Mapping[ModalityKind, CellSpec]
    windows: int = 3
    seeds: tuple[int, ...] = tuple(range(30))

    def __post_init__(self):
        if self.application == "stress" and ModalityKind.EMG in self.cells:
            raise ValueError("the stress application has no EMG sensor")
        if self.windows < 1 or not self.seeds:
            raise ValueError("need at least one window and one seed")


def _cell(value, kind: ModalityKind, cfg: dict) -> CellSpec:
    if isinstance(value, str):
        value = {"preset": value}
    preset = value.get("preset", "None")
    if preset not in cfg["presets"]:
        raise ValueError(f"unknown noise preset {preset!r}")
    comps = value.get("noise")
    if comps is None:
        comps = cfg.get("modality_presets", {}).get(kind.value, {}).get(preset)
    if comps is None:
        comps = cfg["presets"][preset]
    return CellSpec(preset, tuple(NoiseComponent.from_json(c) for c in comps),
                    bool(value.get("detached", False)))


def scenario_from_json(app: str, name: str, cells: Mapping, cfg: dict,
                       windows: int | None = None, seeds: Sequence[int] | None = None
                       ) -> ScenarioSpec:
    parsed = {ModalityKind(k): _cell(v, ModalityKind(k), cfg) for k, v in cells.items()}
    run = cfg.get("run", {})
    return ScenarioSpec(app, name, parsed, windows or run.get("windows", 3),
                        tuple(seeds if seeds is not None else range(run.get("seeds", 30))))


def load_scenario(app: str, scenario: str, cfg: dict, windows=None, seeds=None) -> ScenarioSpec:
    """``scenario`` is ``S1``..``S4`` or a JSON file holding ``{"cells": {...}}``."""
    if scenario in cfg["scenarios"].get(app, {}):
        return scenario_from_json(app, scenario, cfg["scenarios"][app][scenario], cfg,
                                  windows, seeds)
    path = Path(scenario)
    if not path.exists():
        raise SetupError(f"unknown scenario {scenario!r}: use S1..S4 or a JSON file")
    data = json.loads(path.read_text())
    return scenario_from_json(data.get("application", app), data.get("name", path.stem),
                              data["cells"], cfg, windows or data.get("windows"),
                              seeds if seeds is not None else data.get("seeds"))


# --- pools and calibration ------------------------------------------------------

def train_pool(app: str, cfg: dict | None = None, catalog: FeatureCatalog | None = None
               ) -> models.ModelPool:
    cfg = cfg or load_config()
    catalog = catalog or load_catalog(app)
    t = cfg.get("training", {})
    ds = models.make_dataset(catalog, t.get("n_per_class", 40), t.get("seed", 1),
                             t.get("augment", 0.5), tuple(t.get("reliable_snr", (20, 40))),
                             tuple(t.get("uncertain_snr", (7, 14))))
    return models.build_pool(catalog, ds, t.get("model", "centroid"))


def expected_decisions(app: str, cfg: dict, catalog: FeatureCatalog) -> list[ControlDecision]:
    exp = cfg["expected"][app]
    return [decide({ModalityKind(k): ReliabilityLabel.parse(v)
                    for k, v in exp[s]["labels"].items()}, catalog) for s in SCENARIOS]


def load_calibration(app: str, path=None) -> cost.CostParams:
    path = Path(path or resource_path("calibration.json"))
    if not path.exists():
        raise SetupError(f"calibration file {path} not found; run `amser fit-calibration`")
    return cost.load_calibration(path, app)


# --- per-window pipeline --------------------------------------------------------

def _window_seed(seed: int, window: int) -> int:
    return int(np.random.SeedSequence([seed, window]).generate_state(1)[0])


def corrupt(spec: ScenarioSpec, wins: Mapping, seed: int) -> dict:
    out = {}
    for j, kind in enumerate(MODALITY_ORDER):
        if kind not in wins:
            continue
        w = wins[kind]
        cell = spec.cells.get(kind, CellSpec())
        for i, c in enumerate(cell.components):
            ns = noise.NoiseSpec(c.kind, c.snr_db, c.burst_density, seed=seed * 31 + 7 * j + i)
            w = noise.inject(w, ns)
        out[kind] = w
    return out


@dataclass
class Context:
    catalog: FeatureCatalog
    pool: models.ModelPool
    params: cost.CostParams
    thresholds: QualityThresholds = QualityThresholds()
    rules: DiscrepancyRules = DiscrepancyRules()
    recovery_period: int = 5

    @property
    def full_mask(self) -> FeatureMask:
        return FeatureMask.full(self.catalog)


def _fmt(x: float) -> float:
    # fixed precision keeps reports stable across platforms
    return float(f"{x:.12g}")


def run_seed(spec: ScenarioSpec, ctx: Context, seed: int) -> list[dict]:
    """All windows of one seed, in order. Controller state persists across windows."""
    cat = ctx.catalog
    recovery = Recovery(ctx.recovery_period)
    status = {k: SensorStatus.ATTACHED for k in cat.modalities}
    full = models.select(ctx.pool, models.ModelKey.for_mask(cat.application, ctx.full_mask))
    records = []
    for w in range(spec.windows):
        truth = (seed + w) % models.N_CLASSES
        s = _window_seed(seed, w)
        clean = models.synth_windows(cat.application, truth, s, w)
        noisy = corrupt(spec, clean, s)

        probes = recovery.probes(w)
        vectors, labels, snrs = {}, {}, {}
        for kind in cat.modalities:
            win = noisy[kind]
            filtered = dsp.bandpass(win)
            vectors[kind] = extract(win, cat, filtered)
            if recovery.is_off(kind) and kind not in probes:
                labels[kind] = ReliabilityLabel.NOISY  # idle sensor, nothing to assess
                continue
            sensor_status = (SensorStatus.DETACHED if spec.cells.get(kind, CellSpec()).detached
                             else SensorStatus.ATTACHED)
            labels[kind] = monitor(win, derive(win, ctx.rules, filtered), sensor_status,
                                   ctx.thresholds, ctx.rules)
        # a probed sensor is assessed but not fused this window
        decision_labels = {k: (ReliabilityLabel.NOISY if k in probes else v)
                           for k, v in labels.items()}
        decision = decide(decision_labels, cat)
        commands = reconfigure(decision.sensing, status)
        status = apply_commands(status, commands)
        recovery.observe(w, labels, probes)

        fallback = False
        if decision.abstain:
            pred, abstain = None, True
        else:
            sel = models.select(ctx.pool, decision.model_key)
            fallback = sel.fallback
            active = {k: v for k, v in vectors.items() if k in decision.mask.active}
            fused = fuse(active, decision.mask, cat)
            pred, abstain = models.infer(sel.model, sel.project(fused))[0], False
        base_pred = models.infer(full.model, fuse(vectors, ctx.full_mask, cat))[0]

        rep = cost.report(decision, cat, ctx.params)
        records.append({
            "seed": seed,
            "window": w,
            "truth": truth,
            "labels": {k.value: str(v) for k, v in labels.items()},
            "probed": [k.value for k in probes],
            "sensing": {k.value: decision.sensing.state(k).value for k in cat.modalities},
            "commands": {k.value: c.value for k, c in commands.items()},
            "mask": {k.value: decision.mask.mode(k).value for k in cat.modalities},
            "feature_count": decision.feature_count,
            "retention": f"{decision.retention.numerator}/{decision.retention.denominator}",
            "model_key": str(decision.model_key) if decision.model_key else None,
            "fallback": fallback,
            "abstain": abstain,
            "prediction": pred,
            "baseline_prediction": base_pred,
            "cost": {"sensor_energy": _fmt(rep.sensor_energy), "edge_energy": _fmt(rep.edge_energy),
                     "latency": _fmt(rep.latency), "tx_bytes": rep.tx_bytes},
        })
    return records


def _run_seed_job(args):
    return run_seed(*args)


def aggregate(records: Sequence[Mapping], baseline_cost: Mapping[str, float]) -> dict:
    """Summary statistics computed only from per-window records."""
    seeds = sorted({r["seed"] for r in records})
    amser, base = [], []
    for s in seeds:
        rs = [r for r in records if r["seed"] == s]
        amser.append(sum((not r["abstain"]) and r["prediction"] == r["truth"] for r in rs) / len(rs))
        base.append(sum(r["baseline_prediction"] == r["truth"] for r in rs) / len(rs))
    a, b = np.asarray(amser), np.asarray(base)
    diff = a - b
    if diff.size > 1 and np.any(diff != diff[0]):
        p = float(stats.ttest_rel(a, b, alternative="greater").pvalue)
    else:
        # constant differences: certain if positive, never significant otherwise
        p = 0.0 if diff.size and diff[0] > 0 else 1.0
    n = len(records)
    mean_cost = {k: sum(r["cost"][k] for r in records) / n
                 for k in ("sensor_energy", "edge_energy", "latency", "tx_bytes")}
    retention = sum((Fraction(r["retention"]) for r in records), Fraction(0)) / n
    gains = {
        "sensor_energy_gain": baseline_cost["sensor_energy"] / mean_cost["sensor_energy"],
        "edge_energy_gain": baseline_cost["edge_energy"] / mean_cost["edge_energy"],
        "speedup": baseline_cost["latency"] / mean_cost["latency"],
        "data_reduction": (float(Fraction(baseline_cost["tx_bytes"]) / Fraction(mean_cost["tx_bytes"]))
                           if mean_cost["tx_bytes"] else 0.0),
    }
    return {
        "accuracy": {
            "amser_mean": _fmt(float(a.mean())),
            "baseline_mean": _fmt(float(b.mean())),
            "amser_per_seed": [_fmt(x) for x in amser],
            "baseline_per_seed": [_fmt(x) for x in base],
            "paired_p_value": _fmt(p),
        },
        "abstain_windows": sum(r["abstain"] for r in records),
        "fallback_windows": sum(r["fallback"] for r in records),
        "mean_cost": {k: _fmt(v) for k, v in mean_cost.items()},
        "retention": f"{retention.numerator}/{retention.denominator}",
        "feature_volume_pct": _fmt(100 * float(retention)),
        "gains_vs_baseline": {k: _fmt(v) for k, v in gains.items()},
    }


def baseline_cost(ctx: Context) -> dict:
    d = decide({k: ReliabilityLabel.RELIABLE for k in ctx.catalog.modalities}, ctx.catalog)
    rep = cost.report(d, ctx.catalog, ctx.params)
    return {"sensor_energy": _fmt(rep.sensor_energy), "edge_energy": _fmt(rep.edge_energy),
            "latency": _fmt(rep.latency), "tx_bytes": rep.tx_bytes}


def run_scenario(spec: ScenarioSpec, ctx: Context, workers: int = 1,
                 metadata: Mapping | None = None) -> dict:
    if ctx.pool is None or len(ctx.pool) == 0:
        raise SetupError("model pool is empty; run `amser train` first")
    jobs = [(spec, ctx, s) for s in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            per_seed = list(ex.map(_run_seed_job, jobs))
    else:
        per_seed = [_run_seed_job(j) for j in jobs]
    records = [r for rs in per_seed for r in rs]
    base = baseline_cost(ctx)
    return {
        "application": spec.application,
        "scenario": spec.name,
        "cells": {k.value: {"preset": c.preset, "detached": c.detached,
                            "noise": [{"kind": n.kind.value, "snr_db": n.snr_db,
                                       "burst_density": n.burst_density} for n in c.components]}
                  for k, c in spec.cells.items()},
        "metadata": {"seeds": list(spec.seeds), "windows": spec.windows, **(metadata or {})},
        "baseline_cost": base,
        "windows": records,
        "aggregate": aggregate(records, base),
    }


def decision_flags(report: Mapping) -> dict[str, bool]:
    """Per modality: kept (On) in the majority of windows."""
    recs = report["windows"]
    mods = recs[0]["sensing"].keys()
    return {m: 2 * sum(r["sensing"][m] == SensingState.ON.value for r in recs) > len(recs)
            for m in mods}


def run_suite(app: str, ctx: Context, cfg: dict, windows=None, seeds=None, workers: int = 1,
              metadata: Mapping | None = None) -> dict:
    reports = {s: run_scenario(load_scenario(app, s, cfg, windows, seeds), ctx, workers, metadata)
               for s in SCENARIOS}
    s1 = reports["S1"]["aggregate"]["mean_cost"]
    rows = []
    for s, rep in reports.items():
        agg = rep["aggregate"]
        mc = agg["mean_cost"]
        rows.append({
            "scenario": s,
            "kept": decision_flags(rep),
            "feature_volume_pct": agg["feature_volume_pct"],
            "data_reduction": _fmt(float(Fraction(s1["tx_bytes"]) / Fraction(mc["tx_bytes"]))
                                   if mc["tx_bytes"] else 0.0),
            "sensor_energy_gain": _fmt(s1["sensor_energy"] / mc["sensor_energy"]),
            "edge_energy_gain": _fmt(s1["edge_energy"] / mc["edge_energy"]),
            "speedup": _fmt(s1["latency"] / mc["latency"]),
            "amser_accuracy": agg["accuracy"]["amser_mean"],
            "baseline_accuracy": agg["accuracy"]["baseline_mean"],
            "paired_p_value": agg["accuracy"]["paired_p_value"],
        })
    return {"application": app, "table": rows, "scenarios": reports}


def check_suite(suite: Mapping, cfg: dict) -> list[str]:
    """Mismatches between a suite table and the expected decision table."""
    app = suite["application"]
    exp = cfg["expected"][app]
    tol = cfg["expected"].get("volume_tolerance_pp", 0.5)
    problems = []
    for row in suite["table"]:
        e = exp[row["scenario"]]
        want = {m: ReliabilityLabel.parse(l) is not ReliabilityLabel.NOISY
                for m, l in e["labels"].items()}
        if row["kept"] != want:
            problems.append(f"{app} {row['scenario']}: kept {row['kept']}, expected {want}")
        if abs(row["feature_volume_pct"] - e["feature_volume_pct"]) > tol:
            problems.append(f"{app} {row['scenario']}: feature volume "
                            f"{row['feature_volume_pct']:.2f}%, expected {e['feature_volume_pct']}%")
    return problems


def format_table(suite: Mapping) -> str:
    rows = suite["table"]
    mods = list(rows[0]["kept"])
    head = (["scen"] + mods + ["vol%", "reduct", "sens_E", "edge_E", "speedup", "acc_amser",
                               "acc_base", "p"])
    lines = ["  ".join(f"{h:>8}" for h in head)]
    for r in rows:
        cells = [r["scenario"]] + ["yes" if r["kept"][m] else "no" for m in mods] + [
            f"{r['feature_volume_pct']:.1f}", f"{r['data_reduction']:.2f}",
            f"{r['sensor_energy_gain']:.2f}", f"{r['edge_energy_gain']:.2f}",
            f"{r['speedup']:.2f}", f"{r['amser_accuracy']:.3f}",
            f"{r['baseline_accuracy']:.3f}", f"{r['paired_p_value']:.3g}"]
        lines.append("  ".join(f"{c:>8}" for c in cells))
    return "\n".join(lines)


def make_context(app: str, cfg: dict, pool: models.ModelPool, params: cost.CostParams,
                 catalog: FeatureCatalog | None = None) -> Context:
    return Context(
        catalog or load_catalog(app), pool, params,
        QualityThresholds(**cfg.get("thresholds", {})),
        DiscrepancyRules(**{k: tuple(v) if isinstance(v, list) else v
                            for k, v in cfg.get("rules", {}).items()}),
        cfg.get("recovery_period", 5),
    )


def dumps(report: Mapping) -> str:
    return json.dumps(report, sort_keys=True, indent=1) + "\n"


def fit_calibrations(cfg: dict, apps: Sequence[str] = APPLICATIONS) -> dict:
    """Fit cost coefficients per application against the configured gain targets."""
    out = {"_units": "normalised: all-reliable configuration = 1 J sensor, 1 J edge, 1 ms latency "
                     "per window; tx_energy_per_byte in J/B"}
    for app in apps:
        catalog = load_catalog(app)
        targets = {k: v for k, v in cfg["targets"][app].items() if k != "data_reduction"}
        fit = cost.fit_calibration(catalog, expected_decisions(app, cfg, catalog), targets)
        out[app] = {
            "params": fit.params.to_json(),
            "residuals": [{k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()}
                          for r in fit.residuals],
            "max_rel_error": _fmt(fit.max_rel_error),
        }
    return out
