"""Write the shipped feature catalogs.

Each modality lists features that survive baseline wander first (peak timing,
band-passed statistics, in-band spectral power, EDA tonic level) so that the
uncertain subset, which is a catalog prefix, keeps the robust ones.
"""

import json
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "amser" / "data"


def q(prefix, *levels):
    return [f"{prefix}.q{v:02d}" for v in levels]


def bands(kind, edges):
    return [f"psd.{kind}_{lo:g}_{hi:g}" for lo, hi in zip(edges[:-1], edges[1:])]


RRI_CORE = ["rri.hr_mean", "rri.hr_std", "rri.hr_min", "rri.hr_max", "rri.rri_mean",
            "rri.rri_std", "rri.rri_min", "rri.rri_max", "rri.rri_median", "rri.rmssd"]

ECG = (
    RRI_CORE + ["rri.sdsd", "rri.cvrr"]
    + ["filt.std", "filt.rms", "filt.max", "filt.range", "filt.q99", "filt.linelen",
       "filt.diffstd", "filt.kurt", "psd.bp_5_10", "psd.bp_10_20", "psd.bp_20_40",
       "psd.ibp_10_20"]
    + ["rri.rri_ratio", "rri.rri_iqr", "rri.rri_range", "rri.pnn20", "rri.pnn50",
       "rri.n_peaks", "rri.hr_median", "rri.rri_q10", "rri.rri_q90"]
    + ["filt.mean", "filt.var", "filt.mad", "filt.iqr", "filt.skew", "filt.mcr", "filt.q01"]
    + ["raw.mean", "raw.std", "raw.rms", "raw.var", "raw.min", "raw.max", "raw.range",
       "raw.median"] + q("raw", 5, 25, 75, 95)
)

_STATS = ["std", "rms", "var", "mad", "iqr", "max", "min", "range", "linelen", "diffstd",
          "kurt", "skew", "mcr", "median"]

EMG = (
    [f"filt.{s}" for s in _STATS] + q("filt", 1, 5, 10, 25, 75, 90, 95, 99)
    + bands("bp", list(range(20, 151, 5)))
    + bands("ibp", list(range(20, 151, 10)))
    + bands("ibp", [20, 45, 70, 95, 120, 150])
    + ["psd.bp_20_60", "psd.bp_60_100", "psd.bp_100_150", "psd.bp_20_150"]
    + q("filt", 2, 98)
    + ["raw.mean"] + [f"raw.{s}" for s in _STATS] + q("raw", 1, 5, 10, 25, 75, 90, 95, 99)
    + ["psd.total_power", "psd.median_frequency", "psd.central_frequency",
       "psd.peak_frequency", "psd.entropy"]
    + bands("bp", [0, 0.5, 1, 2, 5, 10, 20])
    + bands("rbp", [0, 0.5, 5, 20, 60, 100, 150, 250])
    + ["psd.bp_150_200", "psd.bp_200_250"]
    + q("raw", 2, 98, 20, 80, 40)
)

PPG = (
    RRI_CORE + ["rri.cvrr"]
    + ["filt.std", "filt.rms", "filt.max", "filt.min", "filt.range", "filt.iqr"]
    + q("filt", 5, 95) + ["filt.linelen", "filt.diffstd", "filt.skew", "filt.kurt"]
    + bands("bp", [0.5, 1, 2, 4, 8]) + bands("ibp", [0.5, 1, 2, 4, 8])
    + ["rri.rri_ratio", "rri.pnn20", "rri.pnn50", "rri.sdsd", "rri.n_peaks", "rri.rri_iqr"]
    + ["psd.median_frequency", "psd.central_frequency", "psd.peak_frequency"]
    + ["raw.mean", "raw.std"]
)

EDA = (
    ["tonic.mean", "tonic.median", "tonic.min", "tonic.max"] + q("tonic", 25, 75)
    + ["tonic.slope", "raw.mean"]
    + q("tonic", 10, 90, 5, 95) + ["tonic.range", "tonic.std", "tonic.iqr"]
    + ["phasic.count", "phasic.auc", "phasic.std", "phasic.max", "phasic.min",
       "phasic.range", "phasic.rms", "phasic.mad", "phasic.q95", "phasic.q05",
       "phasic.skew", "phasic.kurt", "phasic.linelen"]
    + ["raw.median", "raw.std", "raw.min", "raw.max", "raw.range"] + q("raw", 5, 25, 75, 95)
    + ["raw.iqr", "raw.linelen", "raw.diffstd"]
    + ["raw.var", "psd.total_power"]
)

# uncertain-subset sizes; chosen so the per-scenario feature volumes hit the
# expected values in config.json
PAIN = {"ECG": (ECG, 12), "EMG": (EMG, 72), "PPG": (PPG, 40), "EDA": (EDA, 40)}
STRESS = {"ECG": (ECG, 24), "PPG": (PPG, 11), "EDA": (EDA, 8)}


def catalog(app, spec):
    mods = {}
    for name, (feats, k) in spec.items():
        assert len(set(feats)) == len(feats), name
        mods[name] = {"features": feats, "uncertain_subset": feats[:k]}
    return {"application": app, "modalities": mods}


def main():
    for app, spec in (("pain", PAIN), ("stress", STRESS)):
        path = DATA / f"{app}.catalog.json"
        path.write_text(json.dumps(catalog(app, spec), indent=1) + "\n")
        sizes = {m: (len(f), k) for m, (f, k) in spec.items()}
        print(f"{path.name}: {sizes}")


if __name__ == "__main__":
    main()
