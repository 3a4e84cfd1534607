"""Persistence forecasts read straight from the supervised rows.

Both baselines take Vis out of each row's own lag block, so they are scored
on exactly the rows the learned models see.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import SupervisedSet

PER = "per"
PERW = "perw"


class VisNotInFeatures(DataError):
    pass


@dataclass(frozen=True, eq=False)
class BaselineForecast:
    method: str
    lead_minutes: int
    predictions: np.ndarray
    t_target: np.ndarray

    def __len__(self) -> int:
        return int(self.predictions.shape[0])


def _vis_block(data: SupervisedSet) -> np.ndarray:
    if "vis" not in data.spec.variables:
        raise VisNotInFeatures(f"lagged variables {data.spec.variables} do not include vis")
    return data.block("vis")


def persistence(data: SupervisedSet) -> BaselineForecast:
    """Vis(t + h) = Vis(t), the newest lag of the Vis block."""
    pred = _vis_block(data)[:, -1].copy()
    return BaselineForecast(PER, data.spec.lead_minutes, pred, data.t_target.copy())


def persistence_window(data: SupervisedSet) -> BaselineForecast:
    """Mean of the Vis lag block."""
    pred = _vis_block(data).mean(axis=1)
    return BaselineForecast(PERW, data.spec.lead_minutes, pred, data.t_target.copy())


BASELINES = {PER: persistence, PERW: persistence_window}
