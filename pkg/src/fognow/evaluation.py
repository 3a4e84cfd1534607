"""Stratified RMSE, skill scores and the evaluation report.

Strata are defined on the observed visibility, with the dense-fog boundary
(0.4 km) counted in the lower stratum.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataio import format_timestamp
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

DENSE_FOG_KM = 0.4
BASELINE_NAMES = ("per", "perw")
METHOD_ORDER = ("xgb", "cgan", "per", "perw")
DISPLAY_NAMES = {"xgb": "XGBoost", "cgan": "cGAN", "per": "Per", "perw": "PerW"}
LEVELS = {1.0: "sub1km", 10.0: "sub10km"}
PLOT_HEADER = "t_target,truth_km,pred_km,method"


class LengthMismatch(DataError):
    pass


class Empty(DataError):
    pass


class ZeroBaseline(DataError):
    pass


class InconsistentTestSets(DataError):
    pass


class NoMethods(ConfigError):
    pass


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} truths")
    return p, t


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    if not p.size:
        raise Empty("rmse of zero rows")
    d = p - t
    return math.sqrt(float(np.dot(d, d)) / d.size)


@dataclass(frozen=True)
class Stratified:
    all: float | None
    le: float | None
    gt: float | None
    n_le: int
    n_gt: int


def rmse_stratified(pred, truth, dense_threshold: float = DENSE_FOG_KM) -> Stratified:
    """RMSE overall and within each stratum of the true visibility.

    An empty stratum is reported as ``None``.
    """
    p, t = _pair(pred, truth)
    low = t <= dense_threshold
    n_le = int(low.sum())
    n_gt = int(low.size - n_le)
    return Stratified(
        rmse(p, t) if p.size else None,
        rmse(p[low], t[low]) if n_le else None,
        rmse(p[~low], t[~low]) if n_gt else None,
        n_le,
        n_gt,
    )


def skill_vs_baseline(rmse_model: float, rmse_base: float) -> float:
    """Percent improvement over the baseline; positive means the model is better."""
    if not rmse_base > 0:
        raise ZeroBaseline(f"baseline RMSE must be positive, got {rmse_base}")
    return 100.0 * (rmse_base - rmse_model) / rmse_base


def fog_fraction(truth, threshold: float = DENSE_FOG_KM) -> float:
    t = np.asarray(truth, dtype=np.float64).ravel()
    if not t.size:
        raise Empty("fog fraction of zero rows")
    return int(np.count_nonzero(t <= threshold)) / t.size


def visibility_level(vis_max: float) -> str:
    try:
        return LEVELS[float(vis_max)]
    except KeyError:
        raise ConfigError(f"vis_max must be one of {sorted(LEVELS)}, got {vis_max}") from None


@dataclass(frozen=True)
class MethodResult:
    name: str
    rmse_all: float
    rmse_le400: float | None
    rmse_gt400: float | None
    n_le: int | None = None
    n_gt: int | None = None

    def cell(self, stratum: str) -> float | None:
        return {"all": self.rmse_all, "le400": self.rmse_le400, "gt400": self.rmse_gt400}[stratum]


@dataclass(frozen=True)
class SkillEntry:
    method: str
    baseline: str
    percent: float


@dataclass(eq=True)
class EvalReport:
    visibility_level: str
    lead_minutes: int
    n_test: int
    fog_fraction_le400: float
    methods: list[MethodResult]
    skill: list[SkillEntry]
    provenance: dict = field(default_factory=dict)

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    def skill_of(self, method: str, baseline: str) -> float:
        for s in self.skill:
            if s.method == method and s.baseline == baseline:
                return s.percent
        raise KeyError((method, baseline))

    def to_dict(self) -> dict:
        return {
            "visibility_level": self.visibility_level,
            "lead_minutes": self.lead_minutes,
            "n_test": self.n_test,
            "fog_fraction_le400": self.fog_fraction_le400,
            "methods": [
                {"name": m.name, "rmse_all_km": m.rmse_all, "rmse_le400_km": m.rmse_le400,
                 "rmse_gt400_km": m.rmse_gt400}
                for m in self.methods
            ],
            "skill": [{"method": s.method, "baseline": s.baseline, "percent": s.percent} for s in self.skill],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        try:
            return cls(
                d["visibility_level"],
                int(d["lead_minutes"]),
                int(d["n_test"]),
                d["fog_fraction_le400"],
                [MethodResult(m["name"], m["rmse_all_km"], m["rmse_le400_km"], m["rmse_gt400_km"])
                 for m in d["methods"]],
                [SkillEntry(s["method"], s["baseline"], s["percent"]) for s in d["skill"]],
                d.get("provenance", {}),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed report document: {exc}") from None


def _ordered(names: Sequence[str]) -> list[str]:
    rank = {n: i for i, n in enumerate(METHOD_ORDER)}
    return sorted(names, key=lambda n: (rank.get(n, len(rank)), n))


def build_report(results: Sequence[MethodResult], visibility_level: str, lead_minutes: int, n_test: int,
                 fog_fraction_le400: float, provenance: dict | None = None,
                 baselines: Sequence[str] = BASELINE_NAMES) -> EvalReport:
    """Assemble a report; skill is every other method against each baseline present.

    A baseline with zero RMSE has no defined skill, so its entries are left out.
    """
    if not results:
        raise NoMethods("a report needs at least one method")
    names = [r.name for r in results]
    if len(set(names)) != len(names):
        raise InconsistentTestSets(f"duplicate method names {names}")
    counts = {(r.n_le, r.n_gt) for r in results if r.n_le is not None}
    if len(counts) > 1 or any(a + b != n_test for a, b in counts):
        raise InconsistentTestSets(f"stratum counts {sorted(counts)} disagree with n_test={n_test}")
    by_name = {r.name: r for r in results}
    ordered = [by_name[n] for n in _ordered(names)]
    present = [b for b in baselines if b in by_name]
    for b in [b for b in present if not by_name[b].rmse_all > 0]:
        log.warning("baseline %s has zero RMSE; skill against it is omitted", b)
        present.remove(b)
    skill = []
    for m in ordered:
        for b in present:
            if m.name == b or (m.name in baselines and baselines.index(m.name) < baselines.index(b)):
                continue
            skill.append(SkillEntry(m.name, b, skill_vs_baseline(m.rmse_all, by_name[b].rmse_all)))
    return EvalReport(visibility_level, int(lead_minutes), int(n_test), fog_fraction_le400, ordered, skill,
                      dict(provenance or {}))


def score_methods(truth, t_target, forecasts: Mapping[str, tuple], visibility_level: str, lead_minutes: int,
                  provenance: dict | None = None) -> EvalReport:
    """Score ``{name: (t_target, predictions)}`` against one shared test set."""
    truth = np.asarray(truth, dtype=np.float64)
    t_target = np.asarray(t_target)
    if not truth.size:
        raise Empty("empty test set")
    results = []
    for name, (t_m, pred) in forecasts.items():
        t_m = np.asarray(t_m)
        if t_m.shape != t_target.shape or not np.array_equal(t_m, t_target):
            raise InconsistentTestSets(f"method {name!r} was evaluated on different rows")
        s = rmse_stratified(pred, truth)
        results.append(MethodResult(name, s.all, s.le, s.gt, s.n_le, s.n_gt))
    return build_report(results, visibility_level, lead_minutes, truth.size, fog_fraction(truth), provenance)


STRATA = ("all", "le400", "gt400")


def best_methods(report: EvalReport, learned_only: bool = False,
                 baselines: Sequence[str] = BASELINE_NAMES) -> dict[str, str | None]:
    """Lowest-RMSE method per stratum; ties go to the earlier row."""
    rows = [m for m in report.methods if not (learned_only and m.name in baselines)]
    out = {}
    for stratum in STRATA:
        scored = [(m.cell(stratum), i, m.name) for i, m in enumerate(rows) if m.cell(stratum) is not None]
        out[stratum] = min(scored)[2] if scored else None
    return out


def dumps_report(report: EvalReport) -> str:
    # json writes floats with repr, the shortest string that round-trips exactly
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_report(report))


def read_report(path) -> EvalReport:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a JSON report ({exc})") from None
    return EvalReport.from_dict(doc)


def write_predictions_csv(stream, method: str, t_target, truth, pred) -> None:
    stream.write(PLOT_HEADER + "\n")
    for t, y, p in zip(np.asarray(t_target).tolist(), np.asarray(truth, dtype=np.float64).tolist(),
                       np.asarray(pred, dtype=np.float64).tolist()):
        stream.write(f"{format_timestamp(t)},{y!r},{p!r},{method}\n")


def _fmt(v: float | None) -> str:
    return "   -  " if v is None else f"{v:6.3f}"


def format_report(report: EvalReport) -> str:
    """Plain-text table: one row per method, RMSE in km by fog intensity."""
    level = {"sub1km": "Vis < 1 km", "sub10km": "Vis < 10 km"}.get(report.visibility_level,
                                                                    report.visibility_level)
    lines = [
        f"{level}, lead {report.lead_minutes} min, n_test={report.n_test}, "
        f"fraction <= 400 m: {report.fog_fraction_le400:.3f}",
        f"{'method':<10}{'All':>8}{'<=400 m':>10}{'>400 m':>9}",
    ]
    for m in report.methods:
        lines.append(f"{DISPLAY_NAMES.get(m.name, m.name):<10}{_fmt(m.rmse_all):>8}"
                     f"{_fmt(m.rmse_le400):>10}{_fmt(m.rmse_gt400):>9}")
    if report.skill:
        lines.append("skill (%):")
        for s in report.skill:
            lines.append(f"  {DISPLAY_NAMES.get(s.method, s.method)} vs "
                         f"{DISPLAY_NAMES.get(s.baseline, s.baseline)}: {s.percent:+.1f}")
    return "\n".join(lines) + "\n"
