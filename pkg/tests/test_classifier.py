import dataclasses
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurosurv import classifier as C
from neurosurv.classifier import MlpModel, TrainConfig
from neurosurv.errors import ParameterError, ResamplingError


def separable(rng, n=500):
    X = rng.normal(size=(n, 2)) * np.array([3.0, 0.5]) + np.array([10.0, -2.0])
    y = (X[:, 0] - 10.0 + 4 * (X[:, 1] + 2.0) > 0).astype(float)
    return X, y


def segment_residual(p, a, b):
    d = b - a
    u = np.clip((p - a) @ d / max(d @ d, 1e-300), 0.0, 1.0)
    return np.linalg.norm(p - (a + u * d))


# activation

def test_selu_values():
    assert C.selu(0.0) == 0.0
    assert C.selu(1.0) == pytest.approx(1.05070, abs=1e-5)
    assert C.selu(-50.0) == pytest.approx(-C.SELU_LAMBDA * C.SELU_ALPHA, abs=1e-12)
    assert C.SELU_LAMBDA * C.SELU_ALPHA == pytest.approx(1.7581, abs=1e-4)


def test_selu_continuous_and_increasing():
    x = np.linspace(-5, 5, 1000)
    assert np.all(np.diff(C.selu(x)) > 0)
    assert abs(C.selu(1e-12) - C.selu(-1e-12)) < 1e-11
    h = 1e-6
    for x0 in (-2.0, -0.3, 0.4, 3.0):
        assert C.selu_grad(x0) == pytest.approx((C.selu(x0 + h) - C.selu(x0 - h)) / (2 * h), rel=1e-6)


# SMOTE

def test_smote_two_points_on_segment():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 6.0], [7.0, 7.0], [8.0, 8.0]])
    y = np.array([1, 1, 0, 0, 0, 0])
    Xr, yr = C.smote_resample(X, y, k=1, seed=3)
    assert yr.tolist() == y.tolist() + [1, 1]
    assert np.array_equal(Xr[:6], X)
    for p in Xr[6:]:
        assert segment_residual(p, X[0], X[1]) < 1e-12


def test_smote_balanced_is_identity():
    X = np.arange(8.0).reshape(4, 2)
    y = np.array([0, 1, 0, 1])
    Xr, yr = C.smote_resample(X, y)
    assert np.array_equal(Xr, X) and np.array_equal(yr, y)


def test_smote_imbalance_grows_minority_to_parity():
    rng = np.random.default_rng(0)
    y = np.r_[np.ones(1787), np.zeros(46120)]
    X = rng.normal(size=(y.size, 3)) + y[:, None]
    Xr, yr = C.smote_resample(X, y, k=5, seed=1)
    assert int(yr.sum()) == 46120 and yr.size == 2 * 46120
    assert Xr.shape == (2 * 46120, 3)


def test_smote_needs_two_minority():
    with pytest.raises(ResamplingError):
        C.smote_resample(np.arange(6.0).reshape(3, 2), np.array([1, 0, 0]))


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.integers(2, 6), st.integers(1, 4))
def test_smote_convex_combination_property(seed, n_min, k):
    r = np.random.default_rng(seed)
    Xm = r.normal(size=(n_min, 2))
    X = np.vstack([Xm, r.normal(size=(n_min + 5, 2))])
    y = np.r_[np.ones(n_min), np.zeros(n_min + 5)]
    Xr, yr = C.smote_resample(X, y, k=k, seed=seed)
    assert yr.sum() == n_min + 5
    for p in Xr[X.shape[0]:]:
        best = min(segment_residual(p, Xm[i], Xm[j]) for i, j in itertools.combinations(range(n_min), 2))
        assert best < 1e-9


# optimization

def test_adam_first_step():
    opt = C.Adam([np.zeros(3)], lr=1e-3)
    (new,) = opt.step([np.zeros(3)], [np.ones(3)])
    assert np.allclose(np.abs(new), 1e-3, rtol=1e-6)


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(7, 2))
    y = np.array([1, 0, 1, 1, 0, 0, 1], float)
    params = list(C.init_params(2, 3, rng))
    params[1] = rng.normal(size=3)
    params[3] = 0.2
    _, grads = C.bce_loss_and_grad(*params, Z, y)
    h = 1e-6
    for i, g in enumerate(grads):
        base = np.atleast_1d(np.asarray(params[i], float))
        fd = np.zeros(base.size)
        for j in range(base.size):
            up, dn = base.copy().ravel(), base.copy().ravel()
            up[j] += h
            dn[j] -= h
            pu, pd = list(params), list(params)
            pu[i] = up.reshape(np.shape(params[i])) if np.ndim(params[i]) else float(up[0])
            pd[i] = dn.reshape(np.shape(params[i])) if np.ndim(params[i]) else float(dn[0])
            fd[j] = (C.bce_loss_and_grad(*pu, Z, y)[0] - C.bce_loss_and_grad(*pd, Z, y)[0]) / (2 * h)
        g = np.atleast_1d(np.asarray(g, float)).ravel()
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12) < 1e-4


def test_separable_reaches_high_accuracy():
    X, y = separable(np.random.default_rng(2))
    model = C.train_mlp(X, y, TrainConfig(resample=False))
    acc = np.mean(C.classify(C.predict_proba(model, X)) == y)
    assert acc >= 0.95
    assert model.loss_history[-1] <= model.loss_history[0]
    assert len(model.loss_history) == 70


def test_retraining_is_bit_identical():
    X, y = separable(np.random.default_rng(4), 200)
    y[:150] = 0
    a = C.train_mlp(X, y, TrainConfig(epochs=5))
    b = C.train_mlp(X, y, TrainConfig(epochs=5))
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa, pb)
    assert a.loss_history == b.loss_history


def test_all_positive_labels():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 4))
    # 10 mini-batches per epoch; a single full batch is too few Adam steps at lr 1e-3
    model = C.train_mlp(X, np.ones(100), TrainConfig(batch_size=10))
    assert np.all(C.predict_proba(model, X) > 0.5)


def test_constant_column_is_harmless():
    rng = np.random.default_rng(6)
    X = np.column_stack([rng.normal(size=50), np.full(50, 3.0)])
    model = C.train_mlp(X, (X[:, 0] > 0).astype(float), TrainConfig(epochs=3))
    assert np.all(np.isfinite(C.predict_proba(model, X)))


# inference

def _zero_model(bias=0.0, n=3):
    return MlpModel(np.zeros((4, n)), np.zeros(4), np.zeros(4), bias, np.zeros(n), np.ones(n), TrainConfig(), [])


def test_zero_weight_model():
    assert C.predict_proba(_zero_model(), np.array([1.0, -5.0, 2.0])) == 0.5
    assert C.predict_proba(_zero_model(2.0), np.zeros(3)) == pytest.approx(1 / (1 + np.exp(-2.0)), rel=1e-15)


def test_predict_is_pure_and_checks_arity():
    model = C.train_mlp(*separable(np.random.default_rng(7), 60), TrainConfig(epochs=2))
    x = np.array([9.0, -2.5])
    assert C.predict_proba(model, x) == C.predict_proba(model, x)
    with pytest.raises(ParameterError):
        C.predict_proba(model, np.zeros(3))


def test_classify_threshold():
    assert C.classify(0.51) == 1
    assert C.classify(0.50) == 0
    assert C.classify(0.10) == 0
    assert C.classify(np.array([0.2, 0.9])).tolist() == [0, 1]


def test_rescaled_inputs_with_refitted_constants():
    rng = np.random.default_rng(8)
    X, y = separable(rng, 300)
    model = C.train_mlp(X, y, TrainConfig(epochs=10))
    c = np.array([7.5, 0.02])
    rescaled = dataclasses.replace(model, center=model.center * c, spread=model.spread * c)
    Xt = rng.normal(size=(100, 2)) * 2 + np.array([10.0, -2.0])
    p1, p2 = C.predict_proba(model, Xt), C.predict_proba(rescaled, Xt * c)
    assert np.allclose(p1, p2, rtol=1e-12)
    assert np.array_equal(C.classify(p1), C.classify(p2))


def test_model_json_round_trip(tmp_path):
    model = C.train_mlp(*separable(np.random.default_rng(9), 80), TrainConfig(epochs=3))
    model.save(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["format_version"] == C.FORMAT_VERSION
    back = MlpModel.load(tmp_path / "m.json")
    X = np.random.default_rng(1).normal(size=(20, 2))
    assert np.array_equal(C.predict_proba(model, X), C.predict_proba(back, X))
    assert back.config == model.config


# metrics

def test_metrics_hand_confusion():
    pred = [1] * 10 + [0] * 90
    act = [1] + [0] * 9 + [0] * 90
    m = C.metrics(pred, act)
    assert (m.tp, m.fp, m.fn, m.tn) == (1, 9, 0, 90)
    assert m.precision_pos == 0.1 and m.recall_pos == 1.0 and m.accuracy == 0.91
    assert m.precision_neg == 1.0 and m.recall_neg == 90 / 99


def test_metrics_perfect_and_undefined():
    m = C.metrics([1, 0, 1], [1, 0, 1])
    assert (m.precision_pos, m.recall_pos, m.precision_neg, m.recall_neg, m.accuracy) == (1, 1, 1, 1, 1)
    m = C.metrics([0, 0], [0, 0])
    assert m.precision_pos == 0.0 and set(m.undefined) == {"precision_pos", "recall_pos"}
    assert set(m.to_dict()) >= {"precision_pos", "recall_pos", "precision_neg", "recall_neg", "accuracy"}


def test_metrics_length_mismatch():
    with pytest.raises(ParameterError):
        C.metrics([1, 0], [1])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_metrics_pure_and_consistent(pairs):
    pred, act = zip(*pairs)
    a, b = C.metrics(pred, act), C.metrics(list(pred), list(act))
    assert a == b
    assert a.tp + a.fp + a.fn + a.tn == len(pairs)
    assert a.accuracy == pytest.approx(np.mean(np.array(pred) == np.array(act)))
