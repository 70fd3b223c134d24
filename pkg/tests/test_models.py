import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from amser import harness
from amser.controller import ModelKey
from amser.features import FeatureMask, MaskMode, extract, fuse
from amser.models import (N_CLASSES, ModelPool, ModelUnavailableError, accuracy, build_pool,
                          infer, make_dataset, predict, reachable_masks, select, synth_windows,
                          train)
from amser.signals import MODALITY_ORDER

ECG, EMG, PPG, EDA = MODALITY_ORDER


@pytest.fixture(scope="module")
def stress_data(stress_catalog):
    return make_dataset(stress_catalog, n_per_class=50, seed=7)


def test_dataset_shape_and_determinism(stress_catalog, stress_data):
    assert stress_data.X.shape == (150, 136)
    assert stress_data.X_uncertain.shape == (150, 136)
    assert np.bincount(stress_data.y).tolist() == [50, 50, 50]
    again = make_dataset(stress_catalog, n_per_class=50, seed=7)
    assert again.digest() == stress_data.digest()


def test_classes_are_separated(stress_catalog, stress_data):
    X, _ = stress_data.matrix(stress_catalog, FeatureMask.full(stress_catalog))
    Z = (X - X.mean(0)) / np.where(X.std(0) > 0, X.std(0), 1)
    cents = np.array([Z[stress_data.y == c].mean(0) for c in range(N_CLASSES)])
    within = np.mean([np.linalg.norm(Z[stress_data.y == c] - cents[c], axis=1).mean()
                      for c in range(N_CLASSES)])
    between = min(np.linalg.norm(cents[i] - cents[j])
                  for i in range(N_CLASSES) for j in range(i + 1, N_CLASSES))
    assert between > 0.5 * within


def test_holdout_accuracy(stress_catalog, stress_data):
    X, _ = stress_data.matrix(stress_catalog, FeatureMask.full(stress_catalog))
    y = stress_data.y
    idx = np.random.default_rng(0).permutation(len(y))
    cut = int(0.8 * len(y))
    m = train(X[idx[:cut]], y[idx[:cut]])
    assert accuracy(m, X[idx[cut:]], y[idx[cut:]]) >= 0.9


def test_separable_data_is_learned_exactly():
    X = np.array([[0.0, 0], [0.1, 0], [5, 5], [5.1, 5], [10, 0], [10.1, 0]])
    y = np.array([0, 0, 1, 1, 2, 2])
    for kind in ("centroid", "linear"):
        assert accuracy(train(X, y, kind, epochs=500, step=0.5), X, y) == 1.0


def test_centroid_points_predict_their_class():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 4)) + np.repeat(np.eye(3, 4) * 4, 20, axis=0)
    y = np.repeat(np.arange(3), 20)
    m = train(X, y)
    centroids = m.weights * m.scale + m.mean
    assert predict(m, centroids).tolist() == [0, 1, 2]


def test_tie_goes_to_lower_class():
    X = np.array([[-1.0], [1.0]])
    m = train(X, np.array([0, 1]))
    assert infer(m, np.array([0.0]))[0] == 0


def test_single_class_model_is_degenerate():
    m = train(np.ones((5, 3)), np.zeros(5, int))
    assert m.degenerate
    assert infer(m, np.zeros(3))[0] == 0


def test_input_length_checks():
    m = train(np.eye(3), np.arange(3))
    with pytest.raises(ValueError):
        infer(m, np.zeros(4))
    with pytest.raises(ValueError):
        train(np.eye(3), np.arange(3), input_len=5)
    with pytest.raises(ValueError):
        train(np.eye(3), np.arange(3), kind="forest")


@given(seed=st.integers(0, 10_000), n=st.integers(2, 8))
def test_predictions_are_known_classes(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3 * n, 5))
    y = np.repeat(np.arange(3), n)
    m = train(X, y)
    assert set(predict(m, rng.standard_normal((10, 5)) * 100).tolist()) <= {0, 1, 2}


def test_reachable_mask_counts(pain_catalog, stress_catalog):
    assert len(reachable_masks(pain_catalog)) == 80
    assert len(reachable_masks(stress_catalog)) == 26


def test_pool_covers_every_reachable_key(pools, pain_catalog, stress_catalog):
    for cat in (pain_catalog, stress_catalog):
        pool = pools[cat.application]
        for mask in reachable_masks(cat):
            sel = select(pool, ModelKey.for_mask(cat.application, mask))
            assert not sel.fallback
            assert sel.model.input_len == mask.count(cat)


def test_select_falls_back_to_full_mask(stress_catalog, stress_data):
    full = FeatureMask({ECG: MaskMode.FULL, PPG: MaskMode.FULL})
    pool = build_pool(stress_catalog, stress_data, masks=[full])
    want = FeatureMask({ECG: MaskMode.SUBSET, PPG: MaskMode.FULL})
    sel = select(pool, ModelKey.for_mask("stress", want))
    assert sel.fallback and sel.key == ModelKey.for_mask("stress", full)
    assert len(pool.fallback_log) == 1

    wins = synth_windows("stress", 2, seed=11)
    vecs = {k: extract(wins[k], stress_catalog) for k in (ECG, PPG)}
    x = sel.project(fuse(vecs, want, stress_catalog))
    assert x.size == sel.model.input_len
    missing = len(stress_catalog.features[ECG]) - len(stress_catalog.uncertain_subset[ECG])
    assert np.sum(x == sel.model.mean) >= missing


def test_select_without_candidate_raises():
    with pytest.raises(ModelUnavailableError):
        select(ModelPool("pain"), ModelKey("pain", (ECG,), "ECG:Full"))


def test_pool_roundtrip_and_corruption(tmp_path, pools):
    path = tmp_path / "stress.pool.json"
    digest = pools["stress"].save(path)
    loaded = ModelPool.load(path)
    assert loaded.to_json()["content_hash"] == digest
    assert sorted(loaded.models) == sorted(pools["stress"].models)
    data = json.loads(path.read_text())
    data["entries"][0]["model"]["mean"][0] += 1.0
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="hash"):
        ModelPool.load(path)


def test_linear_pool_trains(stress_catalog, stress_data):
    mask = FeatureMask.full(stress_catalog)
    pool = build_pool(stress_catalog, stress_data, kind="linear", masks=[mask])
    X, _ = stress_data.matrix(stress_catalog, mask)
    m = pool.models[ModelKey.for_mask("stress", mask)]
    assert m.kind == "linear" and accuracy(m, X, stress_data.y) >= 0.9


def test_train_pool_is_deterministic(config, pools):
    cfg = json.loads(json.dumps(config))
    cfg["training"]["n_per_class"] = 4
    a = harness.train_pool("stress", cfg)
    b = harness.train_pool("stress", cfg)
    assert a.to_json()["content_hash"] == b.to_json()["content_hash"]
