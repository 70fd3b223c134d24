import numpy as np
import pytest
from hypothesis import given, strategies as st

from amser import noise
from amser.models import synth_windows
from amser.signals import PAIN_SENSORS, ModalityKind, SignalWindow, SynthParams, synth

from oracles import snr_db

TARGETS = [-5, 0, 5, 10, 20]


@pytest.fixture(scope="module")
def windows():
    return synth_windows("pain", 1, seed=5)


def test_zero_amplitude_is_identity(windows):
    for w in windows.values():
        for kind in ("BW", "MA"):
            out = noise.inject(w, noise.NoiseSpec(kind, amplitude=0.0, seed=1))
            assert np.array_equal(out.samples, w.samples)


def test_ecg_bw_at_10_db(windows):
    w = windows[ModalityKind.ECG]
    out = noise.inject(w, noise.NoiseSpec("BW", 10.0, seed=4))
    assert 9.5 <= noise.measure_snr(w, out) <= 10.5
    assert 9.5 <= snr_db(w.samples, out.samples) <= 10.5


@pytest.mark.parametrize("kind", ["BW", "MA"])
@pytest.mark.parametrize("target", TARGETS)
def test_snr_round_trip_every_modality(windows, kind, target):
    for w in windows.values():
        out = noise.inject(w, noise.NoiseSpec(kind, target, seed=target + 100))
        assert abs(snr_db(w.samples, out.samples) - target) <= 0.5


def test_ma_bursts_on_eda_are_separable():
    w = synth(ModalityKind.EDA, SynthParams(tonic=2.0), PAIN_SENSORS[ModalityKind.EDA])
    spec = noise.NoiseSpec("MA", 0.0, burst_density=2.0, seed=9)
    out = noise.inject(w, spec)
    resid = np.abs(out.lead - w.lead)
    active = resid > 0.05 * resid.max()
    # contiguous active regions, merging gaps shorter than half a second
    idx = np.flatnonzero(active)
    regions = 1 + int(np.sum(np.diff(idx) > 2))
    assert regions == 2
    assert len(noise.realize(w, spec).bursts) == 2


def test_bw_is_slow_and_ma_is_bounded_in_time(windows):
    w = windows[ModalityKind.ECG]
    bw = noise.realize(w, noise.NoiseSpec("BW", 5.0, seed=2))
    assert 1 <= len(bw.frequencies) <= 3 and max(bw.frequencies) < 0.5
    ma = noise.realize(w, noise.NoiseSpec("MA", 5.0, burst_density=3.0, seed=2))
    assert len(ma.bursts) == 3
    for a, b in ma.bursts:
        assert 0.4 <= b - a <= 2.0 + 1e-9
    outside = np.ones(w.samples.shape[1], bool)
    for a, b in ma.bursts:
        outside[int(a * w.sample_rate):int(b * w.sample_rate)] = False
    assert np.all(ma.noise[:, outside] == 0)


def test_measure_snr_boundaries(windows):
    w = windows[ModalityKind.PPG]
    assert noise.measure_snr(w, w) == 120.0
    x = np.sin(np.linspace(0, 20, 1000))
    assert noise.measure_snr(x, 2 * x) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        noise.measure_snr(x, x[:-1])


def test_unit_sine_plus_white_noise():
    t = np.arange(6000) / 100.0
    clean = np.sin(2 * np.pi * 3 * t)
    vals = [noise.measure_snr(clean, clean + 0.1 * np.random.default_rng(s).standard_normal(t.size))
            for s in range(100)]
    assert np.mean(vals) == pytest.approx(10 * np.log10(0.5 / 0.01), abs=0.3)


def test_zero_power_window_is_degenerate():
    w = SignalWindow(ModalityKind.EDA, np.zeros(240), 4)
    with pytest.raises(noise.DegenerateSignalError):
        noise.inject(w, noise.NoiseSpec("BW", 10.0))


def test_nonfinite_target_rejected():
    with pytest.raises(ValueError):
        noise.NoiseSpec("BW", float("inf"))


@given(bw=st.floats(-5, 20), ma=st.floats(-5, 20), seed=st.integers(0, 10_000))
def test_composed_noise_snr_bounded(windows, bw, ma, seed):
    w = windows[ModalityKind.ECG]
    once = noise.inject(w, noise.NoiseSpec("BW", bw, seed=seed))
    twice = noise.inject(once, noise.NoiseSpec("MA", ma, seed=seed + 1))
    assert noise.measure_snr(w, twice) <= min(bw, ma) + 3.0


@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["BW", "MA"]))
def test_injection_is_deterministic(windows, seed, kind):
    w = windows[ModalityKind.PPG]
    a = noise.inject(w, noise.NoiseSpec(kind, 5.0, seed=seed))
    b = noise.inject(w, noise.NoiseSpec(kind, 5.0, seed=seed))
    assert np.array_equal(a.samples, b.samples)
