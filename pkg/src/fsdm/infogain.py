"""Per-sensor, per-epoch information gain.

A sensor's information gain at an epoch is the cosine distance between
its likelihood-denoised and prior-denoised stage-probability columns,
averaged over the M recorded sampling states and over trajectories
(a Monte-Carlo expectation over the sampler's initial states).  A value
of 0 means the sensor never moved the estimate away from the prior.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .sampler import SampleResult, SamplerConfig, sample_many
from .scorekit import Features, Observations, SensorBank

_MIN_NORM = 1e-12


@dataclass(frozen=True)
class InfoGain:
    sensor: str
    values: np.ndarray
    n_trajectories: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("values must be a vector of per-epoch gains")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("information gain values must lie in [0, 1]")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 − cos(a, b); lies in [0, 1] for nonnegative inputs."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < _MIN_NORM or nb < _MIN_NORM:
        raise ValueError("cosine distance undefined for (near-)zero-norm input")
    return float(1.0 - float(a @ b) / (na * nb))


def _columnwise_cosine_distance(lik: np.ndarray, pri: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(lik, axis=0)
    nb = np.linalg.norm(pri, axis=0)
    if np.any(na < _MIN_NORM) or np.any(nb < _MIN_NORM):
        raise ValueError("cosine distance undefined for (near-)zero-norm column")
    return 1.0 - (lik * pri).sum(axis=0) / (na * nb)


def information_gain(
    bank: SensorBank,
    obs: Observations,
    sensor_name: str,
    cfg: SamplerConfig,
    n_epochs: int | None = None,
    results: list[SampleResult] | None = None,
) -> InfoGain:
    """Trajectory-averaged per-epoch gain for one observed sensor.

    Requires cfg.record_trajectory.  When ``results`` from a previous
    sample_many call with the same (bank, obs, cfg) are supplied, the
    recorded denoised pairs are reused instead of re-running the sampler.
    """
    names = [name for name, _ in obs]
    if sensor_name not in names:
        raise KeyError(f"sensor {sensor_name!r} is not among the observations")
    if not cfg.record_trajectory:
        raise ValueError("information gain requires cfg.record_trajectory")
    if n_epochs is None:
        for name, cond in obs:
            if isinstance(cond, Features):
                n_epochs = cond.n_epochs
                break
        if n_epochs is None:
            raise ValueError("n_epochs is required when no observation carries features")
    if results is None:
        results = sample_many(bank, obs, cfg, n_epochs)
    total = np.zeros(n_epochs)
    for result in results:
        if result.trajectory is None:
            raise ValueError("sample results carry no recorded trajectory")
        per_traj = np.zeros(n_epochs)
        for step in result.trajectory:
            for name, lik, pri in step.pairs:
                if name == sensor_name:
                    per_traj += _columnwise_cosine_distance(lik, pri)
                    break
            else:
                raise KeyError(f"trajectory carries no pair for {sensor_name!r}")
        total += per_traj / len(result.trajectory)
    values = np.clip(total / len(results), 0.0, 1.0)
    return InfoGain(sensor=sensor_name, values=values, n_trajectories=len(results))


def mean_information_gain(gain: InfoGain, mask: np.ndarray | None = None) -> float:
    """Arithmetic mean of per-epoch gain over the valid-epoch mask."""
    if mask is None:
        mask = np.ones(gain.values.shape[0], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gain.values.shape:
        raise ValueError("mask length must match the number of epochs")
    if not np.any(mask):
        raise ValueError("at least one valid epoch is required")
    return float(gain.values[mask].mean())


def write_infogain_csv(path, gain: InfoGain) -> None:
    """Emit per-epoch gain as (epoch_index, value) rows with a header."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch_index", "value"])
        for e, v in enumerate(gain.values):
            writer.writerow([e, repr(float(v))])
