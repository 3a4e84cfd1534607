import json

import numpy as np
import pytest

from fognow import gbdt
from fognow._kernels import BACKEND, BACKENDS
from fognow.errors import ConfigError
from fognow.features import LagSpec, SupervisedSet

from oracles import best_stump_gain

STUMP = dict(n_rounds=1, learning_rate=1.0, max_depth=1, min_child_weight=0.0, base_score=0.5)


def rmse(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)))


def test_hand_stump_without_regularization():
    x, y = np.array([[0.0], [1.0]]), np.array([0.0, 1.0])
    m = gbdt.fit_arrays(x, y, config=gbdt.GbdtConfig(reg_lambda=0.0, **STUMP))
    tree = m.trees[0]
    assert tree.feature[0] == 0 and 0.0 < tree.threshold[0] <= 1.0
    assert sorted(tree.weight[tree.feature < 0]) == pytest.approx([-0.5, 0.5], abs=1e-12)
    assert gbdt.predict_raw(m, x) == pytest.approx([0.0, 1.0], abs=1e-12)


def test_hand_stump_with_lambda_one():
    x, y = np.array([[0.0], [1.0]]), np.array([0.0, 1.0])
    m = gbdt.fit_arrays(x, y, config=gbdt.GbdtConfig(reg_lambda=1.0, **STUMP))
    assert sorted(m.trees[0].weight[m.trees[0].feature < 0]) == pytest.approx([-0.25, 0.25], abs=1e-12)
    assert gbdt.predict_raw(m, x) == pytest.approx([0.25, 0.75], abs=1e-12)


def test_constant_target_gives_base_only_model(caplog):
    x = np.random.default_rng(0).standard_normal((20, 3))
    m = gbdt.fit_arrays(x, np.full(20, 7.0))
    assert m.trees == []
    assert np.all(gbdt.predict_gbdt(m, x) == 7.0)
    assert "constant" in caplog.text


def test_zero_tree_model_predicts_base():
    m = gbdt.GbdtModel(0.3, [], gbdt.GbdtConfig(), 2, 0)
    assert gbdt.predict_gbdt(m, np.zeros((4, 2))).tolist() == [0.3] * 4


def test_hand_traced_stump():
    tree = gbdt.RegressionTree(
        feature=np.array([1, -1, -1]), threshold=np.array([2.0, 0.0, 0.0]), left=np.array([1, -1, -1]),
        right=np.array([2, -1, -1]), weight=np.array([0.0, -1.0, 3.0]), default_left=np.ones(3, bool),
        gain=np.zeros(3))
    m = gbdt.GbdtModel(1.0, [tree], gbdt.GbdtConfig(learning_rate=0.5), 2, 1)
    x = np.array([[9.0, 1.0], [9.0, 2.0], [0.0, 5.0], [0.0, -3.0]])
    # x[:, 1] < 2 goes left (-1), otherwise right (+3); base 1 plus 0.5 * leaf
    assert gbdt.predict_raw(m, x).tolist() == [0.5, 2.5, 2.5, 0.5]
    assert gbdt.predict_gbdt(m, np.array([[0.0, 0.0]])).tolist() == [0.5]


def test_predictions_clamped_at_zero():
    tree = gbdt.RegressionTree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([-5.0]),
                               np.ones(1, bool), np.zeros(1))
    m = gbdt.GbdtModel(0.1, [tree], gbdt.GbdtConfig(learning_rate=1.0), 1, 1)
    assert gbdt.predict_gbdt(m, np.zeros((2, 1))).tolist() == [0.0, 0.0]


def test_missing_values_follow_default_direction():
    tree = gbdt.RegressionTree(np.array([0, -1, -1]), np.array([0.5, 0, 0]), np.array([1, -1, -1]),
                               np.array([2, -1, -1]), np.array([0.0, 10.0, 20.0]), np.array([False, True, True]),
                               np.zeros(3))
    assert tree.predict(np.array([[np.nan], [0.0]])).tolist() == [20.0, 10.0]


def test_training_rmse_non_increasing(rng):
    x = rng.standard_normal((300, 5))
    y = np.sin(x[:, 0]) + x[:, 1] ** 2 + 0.1 * rng.standard_normal(300)
    m = gbdt.fit_arrays(x, y, config=gbdt.GbdtConfig(n_rounds=40))
    assert len(m.train_rmse) == 40
    assert all(b <= a + 1e-12 for a, b in zip(m.train_rmse, m.train_rmse[1:]))


@pytest.mark.parametrize("n", [2, 5, 17, 32])
def test_exact_fit_on_small_duplicate_free_sets(rng, n):
    x = rng.permutation(n).astype(float)[:, None] * 0.37 + rng.standard_normal((n, 3)) * [0, 1, 1]
    y = rng.standard_normal(n)
    config = gbdt.GbdtConfig(n_rounds=1, learning_rate=1.0, max_depth=64, min_child_weight=0.0, reg_lambda=0.0)
    m = gbdt.fit_arrays(x, y, config=config)
    assert rmse(gbdt.predict_raw(m, x), y) < 1e-9


def test_depth_limit_respected(rng):
    x = rng.standard_normal((200, 4))
    y = rng.standard_normal(200)
    for depth in (1, 2, 3, 5):
        m = gbdt.fit_arrays(x, y, config=gbdt.GbdtConfig(n_rounds=3, max_depth=depth))
        assert all(t.depth <= depth for t in m.trees)


@pytest.mark.parametrize("lam,gamma,mcw", [(0.0, 0.0, 0.0), (1.0, 0.0, 1.0), (2.5, 0.1, 3.0)])
def test_chosen_split_beats_every_alternative(rng, lam, gamma, mcw):
    for trial in range(20):
        x = np.round(rng.standard_normal((int(rng.integers(4, 30)), 3)), 1)
        g = rng.standard_normal(x.shape[0])
        h = np.ones_like(g)
        config = gbdt.GbdtConfig(max_depth=1, reg_lambda=lam, gamma=gamma, min_child_weight=mcw)
        order, xs = gbdt.presort(x)
        tree, _ = gbdt.grow_tree(x, order, xs, g, h, config)
        oracle = best_stump_gain(x, g, h, lam, gamma, mcw)
        if tree.feature[0] >= 0:
            assert tree.gain[0] == pytest.approx(oracle, rel=1e-12, abs=1e-12)
        else:
            assert not oracle > 0


def test_tie_break_prefers_lowest_feature():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    m = gbdt.fit_arrays(x, y, config=gbdt.GbdtConfig(n_rounds=1, max_depth=1))
    assert m.trees[0].feature[0] == 0


def test_monotone_transform_invariance(rng):
    x = rng.standard_normal((400, 3))
    y = np.tanh(2 * x[:, 0]) + 0.3 * x[:, 2]
    xt = rng.standard_normal((100, 3))
    config = gbdt.GbdtConfig(n_rounds=15, max_depth=4)
    base = gbdt.fit_arrays(x, y, config=config)

    def f(v):
        return np.exp(v) * 3 + v ** 3

    x2, xt2 = x.copy(), xt.copy()
    x2[:, 0], xt2[:, 0] = f(x[:, 0]), f(xt[:, 0])
    other = gbdt.fit_arrays(x2, y, config=config)
    assert np.array_equal(gbdt.predict_raw(base, xt), gbdt.predict_raw(other, xt2))
    assert [t.feature.tolist() for t in base.trees] == [t.feature.tolist() for t in other.trees]


def test_early_stopping_keeps_best_round(rng):
    x = rng.standard_normal((200, 3))
    y = x[:, 0] + rng.standard_normal(200)
    xv = rng.standard_normal((100, 3))
    yv = xv[:, 0] + rng.standard_normal(100)
    m = gbdt.fit_arrays(x, y, xv, yv, gbdt.GbdtConfig(n_rounds=200, early_stopping_rounds=5, max_depth=6))
    assert len(m.trees) == m.best_round
    assert m.best_round == int(np.argmin(m.valid_rmse)) + 1
    assert len(m.valid_rmse) == m.best_round + 5


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernel not built")
def test_backends_grow_identical_models(rng):
    x = np.round(rng.standard_normal((500, 12)), 1)  # many ties
    y = x[:, 0] * x[:, 1] + rng.standard_normal(500) * 0.1
    config = gbdt.GbdtConfig(n_rounds=8, max_depth=5, min_child_weight=2.0, gamma=0.01)
    a = gbdt.fit_arrays(x, y, config=config, best_splits=BACKENDS["cython"])
    b = gbdt.fit_arrays(x, y, config=config, best_splits=BACKENDS["python"])
    assert a.to_dict() == b.to_dict()


def test_active_backend_is_reported():
    assert BACKEND in BACKENDS


def test_json_roundtrip_is_exact(rng, tmp_path):
    x = rng.standard_normal((100, 4))
    y = x[:, 0] ** 2
    m = gbdt.fit_arrays(x, y, config=gbdt.GbdtConfig(n_rounds=5))
    path = tmp_path / "m.json"
    gbdt.save_model(m, path, {"seed": 0})
    back = gbdt.load_model(path)
    assert np.array_equal(gbdt.predict_raw(back, x), gbdt.predict_raw(m, x))
    doc = json.loads(path.read_text())
    assert doc["format"] == "fognow.gbdt" and "yes" in doc["trees"][0]


def test_fit_gbdt_on_supervised_sets(rng):
    spec = LagSpec(3, 1, ("vis",))
    x = rng.uniform(0, 1, (80, 3))
    tr = SupervisedSet(x[:60], x[:60, -1], np.arange(60), spec)
    va = SupervisedSet(x[60:], x[60:, -1], np.arange(60, 80), spec)
    m = gbdt.fit_gbdt(tr, va, gbdt.GbdtConfig(n_rounds=30))
    assert m.n_features == 3
    assert rmse(gbdt.predict_gbdt(m, va.x), va.y) < va.y.std()


def test_errors(rng):
    with pytest.raises(gbdt.EmptyTrainingSet):
        gbdt.fit_arrays(np.zeros((0, 2)), np.zeros(0))
    m = gbdt.fit_arrays(rng.standard_normal((10, 2)), rng.standard_normal(10), config=gbdt.GbdtConfig(n_rounds=1))
    with pytest.raises(gbdt.DimensionMismatch):
        gbdt.predict_gbdt(m, np.zeros((3, 5)))
    with pytest.raises(gbdt.DimensionMismatch):
        gbdt.fit_arrays(np.zeros((5, 2)), np.arange(5.0), np.zeros((3, 3)), np.zeros(3))
    for bad in (dict(n_rounds=0), dict(learning_rate=0.0), dict(learning_rate=1.5), dict(max_depth=0),
                dict(reg_lambda=-1.0), dict(gamma=-0.1)):
        with pytest.raises(ConfigError):
            gbdt.GbdtConfig(**bad)
