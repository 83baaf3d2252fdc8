import math

import numpy as np
import pytest

from explinfo import v_information as vinfo
from explinfo.numerics import LinearPredictor
from explinfo.v_information import PredictorConfig


def _labelled_one_hot(n, k, seed, scale=10.0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, size=n)
    return np.eye(k)[labels] * scale, labels


# --- null input -----------------------------------------------------------


def test_null_input_is_seed_deterministic():
    a = vinfo.make_null_input(3, 16)
    b = vinfo.make_null_input(3, 16)
    c = vinfo.make_null_input(4, 16)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.dim == 16
    assert a.seed == 3


def test_null_input_scale():
    null = vinfo.make_null_input(0, 100_000)
    assert abs(null.values.std() - vinfo.NULL_INPUT_STD) < 0.005
    assert abs(null.values.mean()) < 0.005


def test_null_input_needs_a_dimension():
    with pytest.raises(vinfo.VInformationError):
        vinfo.make_null_input(0, 0)


# --- predictor oracles ----------------------------------------------------


def test_zero_predictor_is_uniform():
    model = LinearPredictor.init(4, 3)
    inputs = np.random.default_rng(0).normal(size=(7, 4))
    labels = np.array([0, 1, 2, 0, 1, 2, 0])
    assert vinfo.mean_nll(model, inputs, labels) == pytest.approx(math.log(3), abs=1e-12)


def test_bias_only_predictor_matches_hand_computation():
    model = LinearPredictor.init(2, 3)
    model.bias[:] = np.log([0.5, 0.25, 0.25])
    inputs = np.zeros((4, 2))
    labels = np.array([0, 0, 1, 2])
    # -(2 ln 1/2 + 2 ln 1/4)/4 = (3/2) ln 2
    assert vinfo.mean_nll(model, inputs, labels) == pytest.approx(1.5 * math.log(2), abs=1e-12)


def test_pointwise_nll_validates_counts_and_labels():
    model = LinearPredictor.init(2, 3)
    with pytest.raises(vinfo.VInformationError):
        vinfo.pointwise_nll(model, np.zeros((2, 2)), np.array([0, 1, 2]))
    with pytest.raises(vinfo.VInformationError):
        vinfo.pointwise_nll(model, np.zeros((2, 2)), np.array([0, 3]))
    with pytest.raises(vinfo.VInformationError):
        vinfo.pointwise_nll(model, np.zeros((0, 2)), np.array([]))


# --- fitting --------------------------------------------------------------


def test_fit_separable_labels_drives_nll_down():
    es, labels = _labelled_one_hot(512, 3, seed=0)
    ves, vlabels = _labelled_one_hot(256, 3, seed=1)
    config = PredictorConfig(learning_rate=0.05, batch_size=64, epochs=40)
    model, history = vinfo.fit_predictor(es, labels, ves, vlabels, 3, config, seed=0)
    assert vinfo.mean_nll(model, ves, vlabels) < 0.05
    assert history.best_epoch >= 0
    assert len(history.val_loss) == 40


def test_fit_is_deterministic():
    rng = np.random.default_rng(5)
    es = rng.normal(size=(128, 6))
    labels = rng.integers(0, 3, size=128)
    config = PredictorConfig(learning_rate=0.01, batch_size=32, epochs=5)
    m1, h1 = vinfo.fit_predictor(es, labels, es, labels, 3, config, seed=9)
    m2, h2 = vinfo.fit_predictor(es, labels, es, labels, 3, config, seed=9)
    np.testing.assert_array_equal(m1.weights, m2.weights)
    np.testing.assert_array_equal(m1.bias, m2.bias)
    assert h1.val_loss == h2.val_loss


def test_single_class_training_warns():
    es = np.random.default_rng(0).normal(size=(32, 4))
    labels = np.ones(32, dtype=int)
    config = PredictorConfig(learning_rate=0.01, batch_size=16, epochs=2)
    with pytest.warns(UserWarning, match="single-class"):
        vinfo.fit_predictor(es, labels, es, labels, 3, config, seed=0)


def test_fit_requires_a_full_batch():
    es = np.zeros((8, 4))
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    with pytest.raises(vinfo.VInformationError):
        vinfo.fit_predictor(es, labels, es, labels, 3, PredictorConfig(0.01, 16), seed=0)


# --- full estimate --------------------------------------------------------


def test_estimate_identities_and_range():
    rng = np.random.default_rng(2)
    train_es = rng.normal(size=(256, 8))
    train_labels = rng.integers(0, 3, size=256)
    eval_es = rng.normal(size=(128, 8))
    eval_labels = rng.integers(0, 3, size=128)
    config = PredictorConfig(learning_rate=0.01, batch_size=32, epochs=8)
    est = vinfo.estimate_v_information(train_es, train_labels, eval_es, eval_labels, 3, config, seed=0)

    assert est.v_information == est.h_entropy - est.h_conditional
    assert est.h_entropy >= 0.0
    assert est.h_conditional >= 0.0
    # independent labels carry (almost) no usable information
    assert abs(est.v_information) <= math.log(3) + 0.1
    pvi = np.array(list(est.pointwise.values()))
    assert pvi.mean() == pytest.approx(est.v_information, abs=1e-9)
    assert len(est.pointwise) == 128


def test_estimate_uses_given_ids():
    rng = np.random.default_rng(0)
    es = rng.normal(size=(64, 4))
    labels = rng.integers(0, 3, size=64)
    ids = [f"rec{i:03d}" for i in range(64)]
    config = PredictorConfig(learning_rate=0.01, batch_size=32, epochs=2)
    est = vinfo.estimate_v_information(es, labels, es, labels, 3, config, seed=0, eval_ids=ids)
    assert sorted(est.pointwise) == sorted(ids)


def test_constant_column_barely_moves_the_estimate():
    rng = np.random.default_rng(4)
    train_es = rng.normal(size=(512, 8))
    train_labels = (train_es[:, 0] > 0).astype(int)
    eval_es = rng.normal(size=(256, 8))
    eval_labels = (eval_es[:, 0] > 0).astype(int)
    config = PredictorConfig(learning_rate=0.02, batch_size=64, epochs=15)

    deltas = []
    for seed in range(3):
        base = vinfo.estimate_v_information(train_es, train_labels, eval_es, eval_labels, 2, config, seed=seed)
        wide = vinfo.estimate_v_information(
            np.hstack([train_es, np.full((512, 1), 0.7)]),
            train_labels,
            np.hstack([eval_es, np.full((256, 1), 0.7)]),
            eval_labels,
            2,
            config,
            seed=seed,
        )
        deltas.append(abs(base.v_information - wide.v_information))
    assert max(deltas) < 0.02


def test_resampled_null_is_a_distinct_mode():
    rng = np.random.default_rng(6)
    es = rng.normal(size=(128, 6))
    labels = rng.integers(0, 3, size=128)
    config = PredictorConfig(learning_rate=0.01, batch_size=32, epochs=4)
    shared = vinfo.estimate_v_information(es, labels, es, labels, 3, config, seed=1)
    resampled = vinfo.estimate_v_information(
        es, labels, es, labels, 3, config, seed=1, resample_null_per_instance=True
    )
    assert resampled.pointwise != shared.pointwise
    pvi = np.array(list(resampled.pointwise.values()))
    assert pvi.mean() == pytest.approx(resampled.v_information, abs=1e-9)


def test_null_seed_controls_only_the_null_vector():
    rng = np.random.default_rng(8)
    es = rng.normal(size=(96, 5))
    labels = rng.integers(0, 3, size=96)
    config = PredictorConfig(learning_rate=0.01, batch_size=32, epochs=3)
    a = vinfo.estimate_v_information(es, labels, es, labels, 3, config, seed=2, null_seed=7)
    b = vinfo.estimate_v_information(es, labels, es, labels, 3, config, seed=2, null_seed=7)
    assert a.pointwise == b.pointwise
    assert a.v_information == b.v_information


# --- persistence ----------------------------------------------------------


def test_pvi_csv_roundtrip(tmp_path):
    est = vinfo.VInfoEstimate(
        h_entropy=1.0,
        h_conditional=0.4,
        v_information=0.6,
        pointwise={"x2": 0.111, "x1": -0.049999999999999996},
        n_classes=3,
    )
    path = tmp_path / "pvi.csv"
    vinfo.write_pvi_csv(est, path, seed=4)
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    assert lines[0] == "id,estimator,pointwise_nats,batch_size,seed"
    assert lines[1] == "x1,v_info,-0.049999999999999996,,4"
    assert vinfo.read_pvi_csv(path) == est.pointwise
