"""End-to-end run: synth, prepare, train, evaluate.

Each stage reads and writes files under one output directory with fixed
names, so stages can be run separately from the command line.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, cgan, gbdt
from .baselines import BASELINES
from .dataio import (DuplicateTimestamp, ObservationSeries, filter_precipitation, read_csv, segment_contiguous,
                     threshold_visibility, write_csv)
from .errors import ConfigError, DataError
from .evaluation import (EvalReport, score_methods, visibility_level, write_predictions_csv, write_report)
from .features import (DEFAULT_VARIABLES, LagSpec, SupervisedSet, build_lagged, chrono_split, load_supervised,
                       save_supervised)
from .synthgen import SynthConfig, generate, write_truth_csv

logger = logging.getLogger(__name__)

METHODS = ("cgan", "xgb", "per", "perw")
LEARNED = ("cgan", "xgb")
VIS_LEVELS = (1.0, 10.0)
LEADS = (30, 60)

SYNTH_CSV = "observations.csv"
SYNTH_TRUTH = "observations.truth.csv"
SYNTH_PROVENANCE = "observations.provenance.json"
TRAIN_FILE = "train.npz"
TEST_FILE = "test.npz"
PREPARE_FILE = "prepare.json"


class MissingInput(DataError):
    pass


def _pipeline_cgan() -> cgan.CganConfig:
    # 500 epochs as the ceiling; stop once validation RMSE stalls for 50
    return cgan.CganConfig(patience=50)


@dataclass(frozen=True)
class RunConfig:
    input: tuple[str, ...] = ()
    out: str = "."
    vis_max: float = 1.0
    lead: int = 30
    lag: int = 120
    variables: tuple[str, ...] = DEFAULT_VARIABLES
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    pr_max: float = 0.05
    train_frac: float = 0.7
    valid_frac: float = 0.2
    synth_minutes: int = 200_000
    cgan: cgan.CganConfig = field(default_factory=_pipeline_cgan)
    gbdt: gbdt.GbdtConfig = field(default_factory=gbdt.GbdtConfig)

    def __post_init__(self):
        object.__setattr__(self, "input", tuple(str(p) for p in self.input))
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "vis_max", float(self.vis_max))
        if self.vis_max not in VIS_LEVELS:
            raise ConfigError(f"vis_max must be 1 or 10 km, got {self.vis_max:g}")
        if self.lead not in LEADS:
            raise ConfigError(f"lead must be 30 or 60 minutes, got {self.lead}")
        if self.lag < 1:
            raise ConfigError("lag must be >= 1 minute")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
        if "vis" not in self.variables:
            raise ConfigError("vis must be one of the lagged variables")
        if not 0 < self.train_frac < 1 or not 0 < self.valid_frac < 1:
            raise ConfigError("train_frac and valid_frac must lie in (0, 1)")
        if not self.pr_max > 0:
            raise ConfigError("pr_max must be positive")
        # one seed drives every stochastic component
        if self.cgan.seed != self.seed:
            object.__setattr__(self, "cgan", replace(self.cgan, seed=self.seed))
        if self.gbdt.seed != self.seed:
            object.__setattr__(self, "gbdt", replace(self.gbdt, seed=self.seed))

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def lag_spec(self) -> LagSpec:
        return LagSpec(self.lag, self.lead, self.variables)

    @property
    def report_name(self) -> str:
        return f"report_{self.vis_max:g}km_{self.lead}min.json"

    def input_paths(self) -> list[Path]:
        if not self.input:
            return [self.out_dir / SYNTH_CSV]
        return [Path(p) if Path(p).is_absolute() else self.out_dir / p for p in self.input]

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["cgan"] = asdict(self.cgan)
        d["gbdt"] = asdict(self.gbdt)
        for k in ("input", "variables", "methods"):
            d[k] = list(d[k])
        for k in ("gen_hidden", "disc_hidden"):
            d["cgan"][k] = list(d["cgan"][k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config key(s) {sorted(extra)}")
        d = dict(d)
        try:
            if "cgan" in d:
                d["cgan"] = replace(_pipeline_cgan(), **d["cgan"])
            if "gbdt" in d:
                d["gbdt"] = gbdt.GbdtConfig(**d["gbdt"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> dict:
    """Config keys from a JSON file; an artifact's embedded provenance is accepted too."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "provenance" in doc and isinstance(doc["provenance"], dict) and "config" in doc["provenance"]:
        doc = doc["provenance"]["config"]
    elif "config" in doc and "package" in doc:
        doc = doc["config"]
    return doc


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _portable_input(config: RunConfig) -> list[str]:
    out = config.out_dir.resolve()
    names = []
    for p in config.input_paths():
        try:
            names.append(str(p.resolve().relative_to(out)))
        except ValueError:
            names.append(str(p.resolve()))
    return names


def provenance(config: RunConfig, stage: str, hash_inputs: bool = True, **extra) -> dict:
    """Resolved config and seed, with no timestamps or machine-specific paths.

    Inputs inside the output directory are recorded relative to it and the
    output directory itself is left out, so identical runs in different
    directories write identical bytes.
    """
    cfg = config.to_dict()
    cfg.pop("out")
    cfg["input"] = _portable_input(config)
    inputs = [{"path": name, "sha256": _sha256(p)}
              for name, p in zip(cfg["input"], config.input_paths()) if hash_inputs and p.exists()]
    return {"package": "fognow", "version": __version__, "stage": stage, "seed": config.seed,
            "config": cfg, "inputs": inputs, **extra}


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# -- synth -------------------------------------------------------------------

def run_synth(config: RunConfig) -> dict[str, Path]:
    synth = SynthConfig(duration_minutes=config.synth_minutes, seed=config.seed,
                        min_duration=config.lag + config.lead + 1)
    series, truth = generate(synth)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / SYNTH_CSV, "truth": out / SYNTH_TRUTH, "provenance": out / SYNTH_PROVENANCE}
    with open(paths["csv"], "w", newline="\n") as fh:
        write_csv(series, fh)
    with open(paths["truth"], "w", newline="\n") as fh:
        write_truth_csv(series, truth, fh)
    # synth reads no input, so nothing is hashed
    _write_json(paths["provenance"], provenance(config, "synth", hash_inputs=False, synth=asdict(synth)))
    return paths


# -- prepare -----------------------------------------------------------------

def _merge(parts: list[ObservationSeries]) -> ObservationSeries:
    if len(parts) == 1:
        return parts[0]
    cols = {name: np.concatenate([getattr(p, name) for p in parts])
            for name in ("minutes", "vis", "wind", "rhw", "dpd", "pr")}
    order = np.argsort(cols["minutes"], kind="stable")
    cols = {k: v[order] for k, v in cols.items()}
    dup = np.flatnonzero(np.diff(cols["minutes"]) == 0)
    if dup.size:
        raise DuplicateTimestamp(int(cols["minutes"][dup[0]]))
    return ObservationSeries(cols["minutes"], cols["vis"], cols["wind"], cols["rhw"], cols["dpd"], cols["pr"],
                             source_id="+".join(p.source_id for p in parts))


def load_inputs(config: RunConfig) -> ObservationSeries:
    paths = config.input_paths()
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise MissingInput(f"input file(s) not found: {', '.join(missing)}")
    return _merge([read_csv(p) for p in paths])


@dataclass(frozen=True)
class Prepared:
    train: SupervisedSet
    test: SupervisedSet
    counts: dict


def prepare(config: RunConfig, series: ObservationSeries | None = None) -> Prepared:
    series = load_inputs(config) if series is None else series
    dry = filter_precipitation(series, config.pr_max)
    low = threshold_visibility(dry, config.vis_max)
    segments = segment_contiguous(low)
    data = build_lagged(segments, low, config.lag_spec)
    split = chrono_split(data, config.train_frac)
    counts = {
        "raw": len(series),
        "precipitation_filtered": len(dry),
        "visibility_thresholded": len(low),
        "segments": len(segments),
        "supervised_rows": len(data),
        "train": int(split.train.size),
        "purged": int(split.purged.size),
        "test": int(split.test.size),
    }
    return Prepared(data.subset(split.train), data.subset(split.test), counts)


def run_prepare(config: RunConfig) -> Prepared:
    prep = prepare(config)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(config, "prepare", counts=prep.counts)
    save_supervised(prep.train, out / TRAIN_FILE, prov)
    save_supervised(prep.test, out / TEST_FILE, prov)
    _write_json(out / PREPARE_FILE, prov)
    return prep


# -- train -------------------------------------------------------------------

def _load_set(path: Path, what: str) -> SupervisedSet:
    if not path.is_file():
        raise MissingInput(f"{what} set {path} not found; run prepare first")
    data, _ = load_supervised(path)
    return data


def inner_split(train: SupervisedSet, valid_frac: float) -> tuple[SupervisedSet, SupervisedSet]:
    """Chronological fit/validation split of the training rows, purged like the outer split."""
    labels = chrono_split(train, 1.0 - valid_frac)
    return train.subset(labels.train), train.subset(labels.test)


def train_models(config: RunConfig, train: SupervisedSet) -> dict:
    fit, valid = inner_split(train, config.valid_frac)
    models = {}
    for method in config.methods:
        if method == "xgb":
            logger.info("training xgb on %d rows (%d validation)", len(fit), len(valid))
            models[method] = gbdt.fit_gbdt(fit, valid, config.gbdt)
        elif method == "cgan":
            logger.info("training cgan on %d rows (%d validation)", len(fit), len(valid))
            models[method] = cgan.train_cgan(fit, valid, config.cgan)
    return models


def model_path(config: RunConfig, method: str) -> Path:
    return config.out_dir / f"model_{method}.json"


def run_train(config: RunConfig) -> dict:
    train = _load_set(config.out_dir / TRAIN_FILE, "training")
    models = train_models(config, train)
    for method, model in models.items():
        prov = provenance(config, "train", method=method)
        if method == "xgb":
            gbdt.save_model(model, model_path(config, method), prov)
        else:
            cgan.save_model(model, model_path(config, method), prov)
    return models


# -- evaluate ----------------------------------------------------------------

def predict(method: str, model, test: SupervisedSet) -> np.ndarray:
    if method in BASELINES:
        return BASELINES[method](test).predictions
    if method == "xgb":
        return gbdt.predict_gbdt(model, test.x)
    return cgan.predict_point(model, test.x)


def _model_summary(method: str, model) -> dict:
    if method == "xgb":
        return {"best_round": model.best_round, "n_trees": len(model.trees)}
    return {"best_epoch": model.best_epoch, "epochs_run": len(model.training_log)}


def evaluate(config: RunConfig, test: SupervisedSet, models: dict) -> tuple[EvalReport, dict]:
    """Score requested methods plus both baselines on the same test rows."""
    names = [m for m in config.methods if m in LEARNED] + [b for b in BASELINES]
    preds = {}
    for name in names:
        if name in LEARNED and name not in models:
            raise MissingInput(f"no trained model for {name}; run train first")
        preds[name] = predict(name, models.get(name), test)
    prov = provenance(config, "evaluate",
                      models={m: _model_summary(m, models[m]) for m in names if m in LEARNED})
    report = score_methods(test.y, test.t_target, {n: (test.t_target, p) for n, p in preds.items()},
                           visibility_level(config.vis_max), config.lead, prov)
    return report, preds


def load_models(config: RunConfig) -> dict:
    models = {}
    for method in config.methods:
        if method not in LEARNED:
            continue
        path = model_path(config, method)
        if not path.is_file():
            raise MissingInput(f"model file {path} not found; run train first")
        models[method] = gbdt.load_model(path) if method == "xgb" else cgan.load_model(path)
    return models


def run_evaluate(config: RunConfig, models: dict | None = None) -> EvalReport:
    test = _load_set(config.out_dir / TEST_FILE, "test")
    models = load_models(config) if models is None else models
    report, preds = evaluate(config, test, models)
    write_report(report, config.out_dir / config.report_name)
    for name, pred in preds.items():
        with open(config.out_dir / f"preds_{name}.csv", "w", newline="\n") as fh:
            write_predictions_csv(fh, name, test.t_target, test.y, pred)
    return report


def run_all(config: RunConfig, synth: bool = True) -> EvalReport:
    if synth:
        run_synth(config)
    run_prepare(config)
    run_train(config)
    return run_evaluate(config)
