"""Supervised datasets built from gap-free observation segments.

Feature layout is variable-major with the oldest lag first inside each
variable block, so column ``v * lag + (lag - 1)`` holds variable ``v`` at the
anchor minute ``t`` and the target is visibility at ``t + lead``.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataio import ObservationSeries, Segment, segment_contiguous
from .errors import ConfigError, DataError

DEFAULT_VARIABLES = ("vis", "wind", "rhw", "dpd")
CANDIDATE_VARIABLES = ("vis", "wind", "rhw", "dpd", "pr")
FORMAT_VERSION = 1


class ConstantInput(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass


class ConstantColumn(DataError):
    def __init__(self, index: int):
        super().__init__(f"feature column {index} is constant on the fitting rows")
        self.index = index


class DegenerateSplit(DataError):
    pass


@dataclass(frozen=True)
class LagSpec:
    lag_minutes: int = 120
    lead_minutes: int = 30
    variables: tuple[str, ...] = DEFAULT_VARIABLES

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if int(self.lag_minutes) < 1 or int(self.lead_minutes) < 1:
            raise ConfigError("lag_minutes and lead_minutes must be >= 1")
        if not self.variables or len(set(self.variables)) != len(self.variables):
            raise ConfigError("variables must be non-empty and duplicate-free")
        unknown = set(self.variables) - set(CANDIDATE_VARIABLES)
        if unknown:
            raise ConfigError(f"unknown variables {sorted(unknown)}")

    @property
    def n_features(self) -> int:
        return len(self.variables) * self.lag_minutes

    def column(self, variable: str, age: int) -> int:
        """Column holding ``variable`` at ``t - age`` (age 0 is the anchor)."""
        v = self.variables.index(variable)
        if not 0 <= age < self.lag_minutes:
            raise IndexError(age)
        return v * self.lag_minutes + (self.lag_minutes - 1 - age)

    def feature_names(self) -> list[str]:
        return [
            f"{v}_t-{self.lag_minutes - 1 - j}"
            for v in self.variables
            for j in range(self.lag_minutes)
        ]


@dataclass(frozen=True, eq=False)
class SupervisedSet:
    """Lagged feature matrix with aligned targets.

    ``t_target`` is in integer minutes since the epoch; ``anchor`` is the
    index of the anchor minute in the source series.
    """

    x: np.ndarray
    y: np.ndarray
    t_target: np.ndarray
    spec: LagSpec
    anchor: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            x = x.reshape(-1, self.spec.n_features)
        n = x.shape[0]
        y = np.asarray(self.y, dtype=np.float64)
        t = np.asarray(self.t_target, dtype=np.int64)
        anchor = np.full(n, -1, dtype=np.int64) if self.anchor is None else np.asarray(self.anchor, dtype=np.int64)
        if x.shape[1] != self.spec.n_features:
            raise LengthMismatch(f"x has {x.shape[1]} columns, spec requires {self.spec.n_features}")
        if not (y.shape == (n,) and t.shape == (n,) and anchor.shape == (n,)):
            raise LengthMismatch("x, y, t_target and anchor must have matching row counts")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t_target", t)
        object.__setattr__(self, "anchor", anchor)

    def __len__(self) -> int:
        return int(self.y.shape[0])

    def subset(self, index) -> "SupervisedSet":
        return SupervisedSet(self.x[index], self.y[index], self.t_target[index], self.spec, self.anchor[index])

    def block(self, variable: str) -> np.ndarray:
        """The ``lag_minutes`` columns of one variable, oldest first."""
        v = self.spec.variables.index(variable)
        L = self.spec.lag_minutes
        return self.x[:, v * L:(v + 1) * L]

    def equals(self, other: "SupervisedSet") -> bool:
        return (
            self.spec == other.spec
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t_target, other.t_target)
            and np.array_equal(self.anchor, other.anchor)
        )


def pearson_corr(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"shapes {a.shape} and {b.shape} differ")
    if a.size < 2:
        raise LengthMismatch("need at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    saa = np.dot(da, da)
    sbb = np.dot(db, db)
    if saa == 0 or sbb == 0:
        raise ConstantInput("correlation undefined for a constant vector")
    r = np.dot(da, db) / np.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, r)))


def _aligned_pairs(series: ObservationSeries, variable: str, lead: int):
    src, dst = [], []
    col = series.column(variable)
    for seg in segment_contiguous(series):
        if len(seg) > lead:
            src.append(col[seg.start:seg.end - lead])
            dst.append(series.vis[seg.start + lead:seg.end])
    if not src:
        return np.empty(0), np.empty(0)
    return np.concatenate(src), np.concatenate(dst)


def feature_correlations(series: ObservationSeries, candidates, lead_minutes: int) -> dict[str, float]:
    """Correlation of each candidate at ``t`` with visibility at ``t + lead``."""
    out = {}
    for name in candidates:
        a, b = _aligned_pairs(series, name, lead_minutes)
        if a.size < 2:
            raise InsufficientData(f"fewer than 2 aligned pairs for {name!r}")
        try:
            out[name] = pearson_corr(a, b)
        except ConstantInput:
            out[name] = 0.0
    return out


def select_features(series: ObservationSeries, candidates=CANDIDATE_VARIABLES,
                    lead_minutes: int = 30, min_abs_corr: float = 0.3) -> list[str]:
    corrs = feature_correlations(series, candidates, lead_minutes)
    keep = [name for name in candidates if abs(corrs[name]) >= min_abs_corr]
    # stable sort keeps candidate order on ties
    return sorted(keep, key=lambda n: -abs(corrs[n]))


def build_lagged(segments, series: ObservationSeries, spec: LagSpec) -> SupervisedSet:
    L, h = spec.lag_minutes, spec.lead_minutes
    cols = [series.column(v) for v in spec.variables]
    xs, ys, ts, anchors = [], [], [], []
    for seg in segments:
        n = len(seg)
        rows = n - L - h + 1
        if rows <= 0:
            continue
        s = seg.start
        blocks = [sliding_window_view(c[s:s + n - h], L) for c in cols]
        xs.append(np.concatenate(blocks, axis=1))
        ys.append(series.vis[s + L - 1 + h:seg.end])
        ts.append(series.minutes[s + L - 1 + h:seg.end])
        anchors.append(np.arange(s + L - 1, s + L - 1 + rows))
    if not xs:
        return SupervisedSet(np.empty((0, spec.n_features)), np.empty(0), np.empty(0, np.int64), spec,
                             np.empty(0, np.int64))
    return SupervisedSet(np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), spec,
                         np.concatenate(anchors))


@dataclass(frozen=True, eq=False)
class NormStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": float(self.y_mean),
            "y_std": float(self.y_std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["x_mean"], dtype=np.float64), np.asarray(d["x_std"], dtype=np.float64),
                   float(d["y_mean"]), float(d["y_std"]))


def fit_norm(x, y) -> NormStats:
    """Column-wise z-score statistics (population std).

    A constant feature column raises :class:`ConstantColumn`. A constant
    target gets unit scale so that degenerate regression problems stay
    trainable.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] == 0:
        raise DataError("cannot fit normalization on zero rows")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    y_sd = float(y.std())
    return NormStats(mu, sd, float(y.mean()), y_sd if y_sd > 0 else 1.0)


def apply_norm(x, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.x_mean) / stats.x_std


def normalize_target(y, stats: NormStats) -> np.ndarray:
    return (np.asarray(y, dtype=np.float64) - stats.y_mean) / stats.y_std


def invert_norm_target(values, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * stats.y_std + stats.y_mean


TRAIN, PURGED, TEST = 0, 1, 2


@dataclass(frozen=True, eq=False)
class SplitLabels:
    labels: np.ndarray

    @property
    def train(self) -> np.ndarray:
        return np.flatnonzero(self.labels == TRAIN)

    @property
    def purged(self) -> np.ndarray:
        return np.flatnonzero(self.labels == PURGED)

    @property
    def test(self) -> np.ndarray:
        return np.flatnonzero(self.labels == TEST)


def chrono_split(data: SupervisedSet, train_frac: float = 0.7) -> SplitLabels:
    """Chronological split with a purge band after the training period.

    A row's source minutes run from ``t_target - lead - lag + 1`` (oldest
    lag) to ``t_target``. Rows after the cut whose oldest lag falls on or
    before the last training target are purged, so no source minute is shared
    between train and test.
    """
    if not 0 < train_frac < 1:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    n = len(data)
    order = np.argsort(data.t_target, kind="stable")
    n_train = int(np.floor(train_frac * n))
    labels = np.full(n, TEST, dtype=np.int8)
    if n_train == 0:
        raise DegenerateSplit(f"no training rows with n={n}, train_frac={train_frac}")
    train_idx = order[:n_train]
    labels[train_idx] = TRAIN
    last_train = data.t_target[train_idx].max()
    span = data.spec.lag_minutes + data.spec.lead_minutes - 1
    rest = order[n_train:]
    labels[rest[data.t_target[rest] - span <= last_train]] = PURGED
    if not np.any(labels == TEST):
        raise DegenerateSplit(f"no test rows remain after purging (n={n}, train_frac={train_frac})")
    return SplitLabels(labels)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_supervised(data: SupervisedSet, path, provenance: dict | None = None) -> None:
    """Write a version-tagged zip archive with fixed member timestamps.

    Identical inputs give byte-identical files.
    """
    header = {
        "format": "fognow.supervised",
        "version": FORMAT_VERSION,
        "spec": {**asdict(data.spec), "variables": list(data.spec.variables)},
        "layout": "variable-major, oldest lag first",
        "n_rows": len(data),
        "provenance": provenance or {},
    }
    members = {
        "header.json": json.dumps(header, indent=2, sort_keys=True).encode(),
        "x.npy": _npy_bytes(data.x),
        "y.npy": _npy_bytes(data.y),
        "t_target.npy": _npy_bytes(data.t_target),
        "anchor.npy": _npy_bytes(data.anchor),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, payload in members.items():
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload)


def load_supervised(path) -> tuple[SupervisedSet, dict]:
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format") != "fognow.supervised" or header.get("version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported supervised-set file")
        arrays = {
            name: np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
            for name in ("x", "y", "t_target", "anchor")
        }
    spec = LagSpec(**header["spec"])
    data = SupervisedSet(arrays["x"], arrays["y"], arrays["t_target"], spec, arrays["anchor"])
    return data, header["provenance"]
