import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from fognow.dataio import ObservationSeries
from fognow.features import LagSpec, SupervisedSet


def make_series(minutes, vis=None, seed=0, **cols):
    """Series over the given minute stamps with random but valid columns."""
    minutes = np.asarray(minutes, dtype=np.int64)
    rng = np.random.default_rng(seed)
    n = minutes.size
    data = {
        "vis": rng.uniform(0.05, 2.0, n) if vis is None else vis,
        "wind": rng.uniform(0.0, 12.0, n),
        "rhw": rng.uniform(60.0, 100.0, n),
        "dpd": rng.uniform(0.0, 5.0, n),
        "pr": np.zeros(n),
    }
    data.update(cols)
    return ObservationSeries(minutes, data["vis"], data["wind"], data["rhw"], data["dpd"], data["pr"])


def gappy_minutes(rng, n_segments, max_len, start=27_000_000):
    """Strictly increasing minutes made of runs separated by random gaps."""
    out, t = [], start
    for _ in range(n_segments):
        length = int(rng.integers(1, max_len + 1))
        out.append(np.arange(t, t + length))
        t += length + int(rng.integers(2, 6))
    return np.concatenate(out)


def random_supervised(rng, n_rows, lag, lead=30, variables=("vis", "wind", "rhw", "dpd")):
    spec = LagSpec(lag, lead, variables)
    x = rng.uniform(0.0, 1.0, (n_rows, spec.n_features))
    y = rng.uniform(0.0, 1.0, n_rows)
    return SupervisedSet(x, y, np.arange(n_rows, dtype=np.int64) + 10_000, spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@dataclass
class PipelineRun:
    out: Path
    seconds: float
    codes: list


def run_default_pipeline(out: Path) -> PipelineRun:
    from fognow.cli import main

    t0 = time.perf_counter()
    codes = [main([stage, "--out", str(out)]) for stage in ("synth", "prepare", "train", "evaluate")]
    return PipelineRun(out, time.perf_counter() - t0, codes)


@pytest.fixture(scope="session")
def default_runs(tmp_path_factory):
    """The default synthetic scenario, run end to end twice in separate directories."""
    return [run_default_pipeline(tmp_path_factory.mktemp(f"default{i}")) for i in range(2)]


def pytest_terminal_summary(terminalreporter):
    import sys
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
