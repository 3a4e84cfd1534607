"""Second-order gradient-boosted regression trees with exact greedy splits.

Squared-error objective: ``g = pred - y``, ``h = 1``. Leaf weights are
``-G / (H + lambda)``, split gain is
``0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma``
and a node splits only when that gain is positive. Thresholds are taken as
the smallest feature value going right (``x < threshold`` goes left), which
keeps fitted trees invariant under strictly increasing feature transforms.

Trees grow level by level; the split search for a whole level is one call
into :mod:`fognow._kernels`.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

MODEL_FORMAT = "fognow.gbdt"
MODEL_VERSION = 1


class EmptyTrainingSet(DataError):
    pass


class DimensionMismatch(DataError):
    pass


@dataclass(frozen=True)
class GbdtConfig:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 6
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    base_score: float | None = None
    early_stopping_rounds: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigError("n_rounds must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ConfigError("reg_lambda, gamma and min_child_weight must be >= 0")
        if self.early_stopping_rounds < 1:
            raise ConfigError("early_stopping_rounds must be >= 1")


@dataclass(eq=False)
class RegressionTree:
    """Flat array tree. Leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray
    default_left: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = np.arange(x.shape[0])
        while active.size:
            f = self.feature[node[active]]
            inner = f >= 0
            active, f = active[inner], f[inner]
            if not active.size:
                break
            cur = node[active]
            xv = x[active, f]
            go_left = np.where(np.isnan(xv), self.default_left[cur], xv < self.threshold[cur])
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.weight[self.apply(x)]

    def to_dict(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"leaf": float(self.weight[i])}
        return {
            "split": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "default_left": bool(self.default_left[i]),
            "gain": float(self.gain[i]),
            "yes": self.to_dict(int(self.left[i])),
            "no": self.to_dict(int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        rows: list[list] = []

        def visit(node):
            i = len(rows)
            rows.append([-1, 0.0, -1, -1, 0.0, True, 0.0])
            if "leaf" in node:
                rows[i][4] = node["leaf"]
            else:
                rows[i][0] = node["split"]
                rows[i][1] = node["threshold"]
                rows[i][5] = node["default_left"]
                rows[i][6] = node.get("gain", 0.0)
                rows[i][2] = visit(node["yes"])
                rows[i][3] = visit(node["no"])
            return i

        visit(d)
        cols = list(zip(*rows))
        return cls(
            np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=np.float64),
            np.array(cols[2], dtype=np.int64), np.array(cols[3], dtype=np.int64),
            np.array(cols[4], dtype=np.float64), np.array(cols[5], dtype=bool),
            np.array(cols[6], dtype=np.float64),
        )


@dataclass(eq=False)
class GbdtModel:
    base_score: float
    trees: list[RegressionTree]
    config: GbdtConfig
    n_features: int
    best_round: int
    train_rmse: list[float] = field(default_factory=list)
    valid_rmse: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "n_features": self.n_features,
            "base_score": self.base_score,
            "best_round": self.best_round,
            "train_rmse": self.train_rmse,
            "valid_rmse": self.valid_rmse,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise DataError("unsupported gbdt model document")
        return cls(
            float(d["base_score"]), [RegressionTree.from_dict(t) for t in d["trees"]],
            GbdtConfig(**d["config"]), int(d["n_features"]), int(d["best_round"]),
            list(d["train_rmse"]), list(d["valid_rmse"]),
        )


def save_model(model: GbdtModel, path, provenance: dict | None = None) -> None:
    doc = model.to_dict()
    doc["provenance"] = provenance or {}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> GbdtModel:
    with open(path) as fh:
        return GbdtModel.from_dict(json.load(fh))


def presort(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature ascending row order and sorted values, feature-major."""
    order = np.argsort(x, axis=0, kind="stable")
    xsorted = np.ascontiguousarray(np.take_along_axis(x, order, axis=0).T)
    return np.ascontiguousarray(order.T.astype(np.intc)), xsorted


def grow_tree(x, order, xsorted, grad, hess, config: GbdtConfig, best_splits=None):
    """Grow one tree level-wise. Returns the tree and each row's leaf index."""
    best_splits = best_splits or _kernels.best_splits
    n = x.shape[0]
    lam = config.reg_lambda
    feature, threshold, left, right, weight, gains = [-1], [0.0], [-1], [-1], [0.0], [0.0]
    node_of_row = np.zeros(n, dtype=np.intc)
    leaf_of_row = np.zeros(n, dtype=np.int64)
    level = [0]  # tree ids of the open nodes, indexed by level-local id

    for depth in range(config.max_depth + 1):
        active = node_of_row >= 0
        ids = node_of_row[active]
        G = np.bincount(ids, weights=grad[active], minlength=len(level))
        H = np.bincount(ids, weights=hess[active], minlength=len(level))
        if depth < config.max_depth:
            best_gain, best_feat, best_thr = best_splits(
                order, xsorted, grad, hess, node_of_row, G, H, lam, config.gamma, config.min_child_weight)
        else:
            best_gain = np.full(len(level), -np.inf)
            best_feat = np.full(len(level), -1)
            best_thr = np.zeros(len(level))

        remap = np.full((len(level), 2), -1, dtype=np.intc)
        next_level = []
        for k, tid in enumerate(level):
            if best_feat[k] >= 0 and best_gain[k] > 0:
                feature[tid] = int(best_feat[k])
                threshold[tid] = float(best_thr[k])
                gains[tid] = float(best_gain[k])
                for side in (0, 1):
                    cid = len(feature)
                    feature.append(-1)
                    threshold.append(0.0)
                    left.append(-1)
                    right.append(-1)
                    weight.append(0.0)
                    gains.append(0.0)
                    remap[k, side] = len(next_level)
                    next_level.append(cid)
                left[tid], right[tid] = next_level[-2], next_level[-1]
            else:
                weight[tid] = -G[k] / (H[k] + lam)

        rows = np.flatnonzero(active)
        k_rows = node_of_row[rows]
        split_rows = best_feat[k_rows] >= 0
        split_rows &= best_gain[k_rows] > 0
        done = rows[~split_rows]
        leaf_of_row[done] = np.asarray(level, dtype=np.int64)[node_of_row[done]]
        node_of_row[done] = -1
        moving = rows[split_rows]
        if not moving.size:
            break
        km = node_of_row[moving]
        go_right = ~(x[moving, best_feat[km]] < best_thr[km])
        node_of_row[moving] = remap[km, go_right.astype(np.intp)]
        level = next_level

    tree = RegressionTree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(weight, dtype=np.float64), np.ones(len(feature), dtype=bool),
        np.array(gains, dtype=np.float64),
    )
    return tree, leaf_of_row


def _rmse(a, b) -> float:
    return math.sqrt(float(np.mean((a - b) ** 2)))


def _check_xy(x, y, what):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DimensionMismatch(f"{what}: x {x.shape} and y {y.shape} do not align")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError(f"{what}: non-finite features or targets")
    return x, y


def fit_arrays(x, y, x_valid=None, y_valid=None, config: GbdtConfig | None = None,
               best_splits=None) -> GbdtModel:
    config = config or GbdtConfig()
    x, y = _check_xy(x, y, "train")
    if x.shape[0] == 0:
        raise EmptyTrainingSet("no training rows")
    has_valid = x_valid is not None and len(y_valid) > 0
    if has_valid:
        x_valid, y_valid = _check_xy(x_valid, y_valid, "valid")
        if x_valid.shape[1] != x.shape[1]:
            raise DimensionMismatch("train and valid feature counts differ")

    if np.all(y == y[0]):
        logger.warning("constant training target; returning a base-score-only model")
        base = float(y[0]) if config.base_score is None else float(config.base_score)
        return GbdtModel(base, [], config, x.shape[1], 0, [_rmse(np.full_like(y, base), y)], [])

    base = float(np.mean(y)) if config.base_score is None else float(config.base_score)
    order, xsorted = presort(x)
    hess = np.ones_like(y)
    pred = np.full_like(y, base)
    pred_v = np.full_like(y_valid, base) if has_valid else None
    eta = config.learning_rate

    trees: list[RegressionTree] = []
    train_rmse: list[float] = []
    valid_rmse: list[float] = []
    best, best_round, stale = np.inf, 0, 0
    for _ in range(config.n_rounds):
        tree, leaf = grow_tree(x, order, xsorted, pred - y, hess, config, best_splits)
        trees.append(tree)
        pred = pred + eta * tree.weight[leaf]
        train_rmse.append(_rmse(pred, y))
        if has_valid:
            pred_v = pred_v + eta * tree.predict(x_valid)
            score = _rmse(pred_v, y_valid)
            valid_rmse.append(score)
            if score < best:
                best, best_round, stale = score, len(trees), 0
            else:
                stale += 1
                if stale >= config.early_stopping_rounds:
                    break
    if not has_valid:
        best_round = len(trees)
    return GbdtModel(base, trees[:best_round], config, x.shape[1], best_round, train_rmse, valid_rmse)


def fit_gbdt(train, valid=None, config: GbdtConfig | None = None) -> GbdtModel:
    """Fit on raw (unnormalized) supervised sets."""
    if valid is None:
        return fit_arrays(train.x, train.y, config=config)
    return fit_arrays(train.x, train.y, valid.x, valid.y, config=config)


def predict_raw(model: GbdtModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionMismatch(f"expected {model.n_features} features, got shape {x.shape}")
    pred = np.full(x.shape[0], model.base_score)
    for tree in model.trees:
        pred = pred + model.config.learning_rate * tree.predict(x)
    return pred


def predict_gbdt(model: GbdtModel, x) -> np.ndarray:
    """Visibility estimates in km, clamped at zero."""
    return np.maximum(predict_raw(model, x), 0.0)
