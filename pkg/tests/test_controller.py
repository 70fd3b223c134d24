import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from amser.controller import (Command, ModelKey, Recovery, SensingConfig, SensingState,
                              apply_commands, decide, reconfigure, recover)
from amser.features import MaskMode
from amser.models import ModelPool, ModelUnavailableError
from amser.monitor import ReliabilityLabel as L
from amser.signals import MODALITY_ORDER, SensorStatus

from oracles import decision_row

ECG, EMG, PPG, EDA = MODALITY_ORDER
LABELS = [L.NOISY, L.UNCERTAIN, L.RELIABLE]


def counts(catalog):
    return ({k.value: len(v) for k, v in catalog.features.items()},
            {k.value: len(v) for k, v in catalog.uncertain_subset.items()})


def test_exhaustive_table_matches_oracle(pain_catalog):
    full, sub = counts(pain_catalog)
    for combo in itertools.product(LABELS, repeat=4):
        labels = dict(zip(MODALITY_ORDER, combo))
        d = decide(labels, pain_catalog)
        kept, selected, retention = decision_row({k.value: str(v) for k, v in labels.items()},
                                                 full, sub)
        assert {k.value: d.sensing.state(k) is SensingState.ON for k in MODALITY_ORDER} == kept
        assert d.feature_count == selected
        assert d.retention == retention
        assert d.abstain == (selected == 0)


def test_pain_s4_row(pain_catalog):
    d = decide({ECG: L.NOISY, EMG: L.NOISY, PPG: L.UNCERTAIN, EDA: L.UNCERTAIN}, pain_catalog)
    assert d.sensing.enabled == (PPG, EDA)
    assert d.feature_count == 80
    assert d.retention == Fraction(80, 256)
    assert d.model_key == ModelKey("pain", (PPG, EDA), "PPG:Subset|EDA:Subset")


@pytest.mark.parametrize("labels,count", [
    ({ECG: "Reliable", PPG: "Reliable", EDA: "Uncertain"}, 102),
    ({ECG: "Uncertain", PPG: "Uncertain", EDA: "Uncertain"}, 43),
    ({ECG: "Noisy", PPG: "Uncertain", EDA: "Uncertain"}, 19),
])
def test_stress_rows(stress_catalog, labels, count):
    d = decide(labels, stress_catalog)
    assert d.feature_count == count
    assert d.retention == Fraction(count, 136)


def test_all_noisy_abstains(pain_catalog):
    d = decide(dict.fromkeys(MODALITY_ORDER, L.NOISY), pain_catalog)
    assert d.abstain and d.model_key is None
    assert d.sensing.enabled == () and d.feature_count == 0


def test_missing_label_rejected(pain_catalog):
    with pytest.raises(ValueError):
        decide({ECG: L.RELIABLE}, pain_catalog)


def test_missing_pool_key_raises(pain_catalog):
    with pytest.raises(ModelUnavailableError):
        decide(dict.fromkeys(MODALITY_ORDER, L.RELIABLE), pain_catalog, pool=ModelPool("pain"))


label_maps = st.tuples(*[st.sampled_from(LABELS)] * 4)


@given(combo=label_maps, which=st.integers(0, 3))
def test_degrading_one_label_strictly_reduces_retention(pain_catalog, combo, which):
    if combo[which] is L.NOISY:
        return
    worse = list(combo)
    worse[which] = L(combo[which] - 1)
    a = decide(dict(zip(MODALITY_ORDER, combo)), pain_catalog)
    b = decide(dict(zip(MODALITY_ORDER, worse)), pain_catalog)
    assert b.retention < a.retention


@given(combo=label_maps)
def test_model_key_mirrors_mask(pain_catalog, combo):
    d = decide(dict(zip(MODALITY_ORDER, combo)), pain_catalog)
    if d.abstain:
        return
    assert d.model_key.modality_set == d.sensing.enabled == d.mask.active
    for k, lab in zip(MODALITY_ORDER, combo):
        assert (f"{k.value}:{d.mask.mode(k).value}" in d.model_key.mask_signature) == (
            lab is not L.NOISY)
        assert d.mask.mode(k) is {L.NOISY: MaskMode.EMPTY, L.UNCERTAIN: MaskMode.SUBSET,
                                  L.RELIABLE: MaskMode.FULL}[lab]


def test_reconfigure_s1_to_s4(pain_catalog):
    s4 = decide({ECG: L.NOISY, EMG: L.NOISY, PPG: L.UNCERTAIN, EDA: L.UNCERTAIN}, pain_catalog)
    status = dict.fromkeys(MODALITY_ORDER, SensorStatus.ATTACHED)
    cmds = reconfigure(s4.sensing, status)
    assert cmds == {ECG: Command.IDLE, EMG: Command.IDLE}
    status = apply_commands(status, cmds)
    assert reconfigure(s4.sensing, status) == {}
    s1 = decide(dict.fromkeys(MODALITY_ORDER, L.RELIABLE), pain_catalog)
    assert reconfigure(s1.sensing, status) == {ECG: Command.WAKE, EMG: Command.WAKE}


def test_recovery_probe_and_reenable():
    history = [{ECG: L.NOISY if w <= 6 else L.RELIABLE} for w in range(14)]
    trace = recover(history, period=5)
    probes = [w for w, p in enumerate(trace["probe"]) if p]
    assert probes == [5, 10]
    assert [w for w, e in enumerate(trace["enabled"]) if e] == [10]
    assert trace["off"][10] == (ECG,) and trace["off"][11] == ()


def test_persistent_noise_stays_off():
    trace = recover([{ECG: L.NOISY}] * 30, period=5)
    assert all(off == (ECG,) for off in trace["off"][1:])
    assert not any(trace["enabled"])
    assert [w for w, p in enumerate(trace["probe"]) if p] == [5, 10, 15, 20, 25]


def test_unit_period_probes_every_window():
    history = [{ECG: L.NOISY}] * 4 + [{ECG: L.UNCERTAIN}]
    trace = recover(history, period=1)
    assert [bool(p) for p in trace["probe"]] == [False, True, True, True, True]
    assert trace["enabled"][4] == (ECG,)


def test_recovery_rejects_bad_period():
    with pytest.raises(ValueError):
        Recovery(0)


def test_sensing_config_partitions():
    cfg = SensingConfig({ECG: SensingState.ON, PPG: SensingState.OFF})
    assert cfg.enabled == (ECG,) and cfg.disabled == (PPG,)
