"""Seeded synthetic marine-fog observations.

A two-state (fog/clear) Markov chain drives every variable. Log-visibility
relaxes toward the regime's log-median, shifted by a slow moisture anomaly,
with fast Gaussian innovations. Each fog episode is either dense or light,
with its median scaled from ``fog_vis_median`` by ``dense_fog_factor`` or
``light_fog_factor``.

Humidity and dew-point depression follow a smoothed regime indicator and
register the moisture anomaly ``precursor_lead`` minutes before visibility
responds, which gives the exogenous inputs genuine predictive value. Wind is
a log-normal AR(1) process that slackens in fog. Rain events are Bernoulli
starts with geometric durations.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .dataio import ObservationSeries, format_timestamp, write_csv
from .errors import ConfigError

FOG, CLEAR = 1, 0


class InvalidConfig(ConfigError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    duration_minutes: int = 200_000
    seed: int = 0
    fog_entry_prob: float = 0.002
    fog_exit_prob: float = 0.004
    fog_vis_median: float = 0.2
    clear_vis_median: float = 15.0
    reversion_rate: float = 0.05
    noise_scale: float = 0.08
    density_sd: float = 0.4
    density_rate: float = 0.005
    precursor_lead: int = 45
    light_fog_prob: float = 0.5
    light_fog_factor: float = 2.0
    dense_fog_factor: float = 0.5
    rain_event_rate: float = 0.0005
    rain_mean_duration: float = 45.0
    rain_vis_median: float = 3.0
    wind_mean: float = 6.0
    start: str = "2022-07-01T00:00"
    min_duration: int = 151

    def __post_init__(self):
        for name in ("fog_entry_prob", "fog_exit_prob", "rain_event_rate", "light_fog_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        for name in ("fog_vis_median", "clear_vis_median", "rain_vis_median", "wind_mean", "light_fog_factor",
                     "dense_fog_factor"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if not 0 < self.reversion_rate <= 1 or not 0 < self.density_rate <= 1:
            raise InvalidConfig("reversion rates must lie in (0, 1]")
        if self.noise_scale < 0 or self.density_sd < 0:
            raise InvalidConfig("noise scales must be non-negative")
        if self.precursor_lead < 0:
            raise InvalidConfig("precursor_lead must be >= 0")
        if self.rain_mean_duration < 1:
            raise InvalidConfig("rain_mean_duration must be >= 1 minute")
        if self.duration_minutes < self.min_duration:
            raise InvalidConfig(
                f"duration_minutes={self.duration_minutes} is shorter than one lag window "
                f"plus lead ({self.min_duration} minutes)")
        if self.fog_entry_prob + self.fog_exit_prob == 0:
            raise InvalidConfig("fog_entry_prob and fog_exit_prob cannot both be zero")

    @property
    def stationary_fog_fraction(self) -> float:
        return self.fog_entry_prob / (self.fog_entry_prob + self.fog_exit_prob)


@dataclass(frozen=True, eq=False)
class SynthTruth:
    regime: np.ndarray
    rain: np.ndarray

    def __len__(self) -> int:
        return int(self.regime.shape[0])


def _ar1(rng, n, rate, sd, x0=0.0):
    """Stationary AR(1) ``x_t = (1 - rate) x_{t-1} + e_t`` with marginal sd ``sd``."""
    phi = 1.0 - rate
    innov = sd * np.sqrt(1.0 - phi * phi)
    e = rng.standard_normal(n) * innov
    e[0] = x0 if x0 is not None else sd * rng.standard_normal()
    return lfilter([1.0], [1.0, -phi], e)


def _relax(target, rate, noise):
    """``x_t = x_{t-1} + rate (target_t - x_{t-1}) + noise_t`` started at ``target_0``."""
    u = rate * target + noise
    u[0] = target[0] + noise[0]
    return lfilter([1.0], [1.0, -(1.0 - rate)], u)


def regime_chain(rng, n, entry, exit_):
    """Two-state Markov chain built from geometric dwell times."""
    p_fog = entry / (entry + exit_)
    state = FOG if rng.random() < p_fog else CLEAR
    out = np.empty(n, dtype=np.int8)
    pos = 0
    while pos < n:
        p_leave = exit_ if state == FOG else entry
        dwell = n - pos if p_leave == 0 else int(rng.geometric(p_leave))
        out[pos:pos + dwell] = state
        pos += dwell
        state = 1 - state
    return out


def rain_indicator(rng, n, rate, mean_duration):
    starts = np.flatnonzero(rng.random(n) < rate)
    if not starts.size:
        return np.zeros(n, dtype=bool)
    durations = rng.geometric(1.0 / mean_duration, size=starts.size)
    edges = np.zeros(n + 1, dtype=np.int64)
    np.add.at(edges, starts, 1)
    np.add.at(edges, np.minimum(starts + durations, n), -1)
    return np.cumsum(edges[:-1]) > 0


def generate(config: SynthConfig) -> tuple[ObservationSeries, SynthTruth]:
    n = config.duration_minutes
    ss = np.random.SeedSequence(config.seed)
    r_regime, r_vis, r_density, r_hum, r_dpd, r_wind, r_rain, r_episode = (
        np.random.default_rng(s) for s in ss.spawn(8))

    regime = regime_chain(r_regime, n, config.fog_entry_prob, config.fog_exit_prob)
    rain = rain_indicator(r_rain, n, config.rain_event_rate, config.rain_mean_duration)
    fog = regime == FOG

    log_target = np.where(fog, np.log(config.fog_vis_median), np.log(config.clear_vis_median))
    log_target = np.where(rain & ~fog, np.log(config.rain_vis_median), log_target)
    episode = np.concatenate(([0], np.cumsum(regime[1:] != regime[:-1])))
    light = r_episode.random(episode[-1] + 1) < config.light_fog_prob
    log_target = log_target + np.where(
        fog, np.where(light[episode], np.log(config.light_fog_factor), np.log(config.dense_fog_factor)), 0.0)
    # moisture anomaly: seen by humidity now, thickens the fog precursor_lead minutes later
    tau = config.precursor_lead
    q = _ar1(r_density, n + tau, config.density_rate, config.density_sd, x0=None)
    q_now, q_vis = q[tau:], q[:n]
    log_target = log_target - q_vis
    noise = config.noise_scale * r_vis.standard_normal(n)
    vis = np.exp(_relax(log_target, config.reversion_rate, noise))

    # moisture: regime indicator smoothed over ~10 minutes
    moist = _relax(fog.astype(np.float64), 0.1, np.zeros(n))
    rhw = (80.0 + 19.0 * moist + (1.0 + 4.0 * (1.0 - moist)) * q_now
           + (0.15 + 3.0 * (1.0 - moist)) * _ar1(r_hum, n, 0.05, 1.0, x0=None))
    rhw = np.clip(rhw, 40.0, 101.0)
    dpd = (3.5 - 3.25 * moist - (0.25 + 1.0 * (1.0 - moist)) * q_now
           + (0.05 + 1.0 * (1.0 - moist)) * _ar1(r_dpd, n, 0.05, 1.0, x0=None))
    dpd = np.maximum(dpd, -0.4)

    # calmer air in fog; rescaled so the long-run mean stays at wind_mean
    sd_w, calm = 0.35, 0.6
    p_fog = config.stationary_fog_fraction
    calm_norm = (1.0 - p_fog) + p_fog * np.exp(-calm)
    wind = (config.wind_mean / calm_norm) * np.exp(
        _ar1(r_wind, n, 0.01, sd_w, x0=None) - 0.5 * sd_w ** 2 - calm * moist)

    pr = np.zeros(n)
    k = int(rain.sum())
    if k:
        pr[rain] = 0.06 + np.exp(r_rain.normal(0.0, 0.6, size=k))

    start = np.datetime64(config.start, "m").astype(np.int64)
    minutes = start + np.arange(n, dtype=np.int64)
    series = ObservationSeries(minutes, vis, wind, rhw, dpd, pr, source_id=f"synthetic(seed={config.seed})")
    return series, SynthTruth(regime, rain)


def write_truth_csv(series: ObservationSeries, truth: SynthTruth, stream) -> None:
    stream.write("timestamp,regime,rain\n")
    names = np.where(truth.regime == FOG, "fog", "clear")
    for m, r, w in zip(series.minutes, names, truth.rain):
        stream.write(f"{format_timestamp(m)},{r},{int(w)}\n")


def to_csv_text(series: ObservationSeries) -> str:
    buf = io.StringIO()
    write_csv(series, buf)
    return buf.getvalue()
