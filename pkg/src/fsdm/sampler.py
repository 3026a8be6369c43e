"""Second-order (Heun) probability-flow sampler and posterior aggregation.

Each sample integrates the ODE dy = −σ̇(t)σ(t)·score dt from t_0 down the
discrete grid to 0, starting from y_0 ~ N(0, σ(t_0)²·I) drawn from a
counter-based generator seeded by (base_seed, sample_index), so samples
are reproducible and independent of execution order.  The second-order
correction is skipped on the final step where σ(t) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import evalkit
from .hypno import Hypnodensity, Hypnogram, argmax_stages, majority_vote
from .sched import ScheduleParams, noise_level, time_steps
from .scorekit import Observations, SensorBank, fsdm_denoise_batch


class SamplingError(RuntimeError):
    """Raised when the sampler state leaves the finite range."""


@dataclass(frozen=True)
class SamplerConfig:
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    n_samples: int = 64
    lam: float | None = None  # None = automatic 1/N weighting
    base_seed: int = 0
    record_trajectory: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass(frozen=True)
class TrajectoryStep:
    """State at which the factorized score was evaluated for step m.

    ``pairs`` holds, per observation (in observation order), the sensor
    name and the (likelihood, prior) denoised estimates at this state;
    the information-gain metric consumes them directly.
    """

    m: int
    sigma: float
    y: np.ndarray
    pairs: tuple[tuple[str, np.ndarray, np.ndarray], ...]


@dataclass(frozen=True)
class SampleResult:
    y: Hypnodensity
    trajectory: tuple[TrajectoryStep, ...] | None


@dataclass(frozen=True)
class InferenceResult:
    hypnogram: Hypnogram
    samples: tuple[Hypnodensity, ...]
    stats: dict[str, float]
    results: tuple[SampleResult, ...]


def _initial_state(base_seed: int, sample_index: int, n_epochs: int, sigma0: float) -> np.ndarray:
    rng = np.random.default_rng([int(base_seed), int(sample_index)])
    return rng.standard_normal((5, n_epochs)) * sigma0


def _run_indices(
    bank: SensorBank,
    obs: Observations,
    cfg: SamplerConfig,
    indices: Sequence[int],
    n_epochs: int,
) -> list[SampleResult]:
    for _, cond in obs:
        if hasattr(cond, "n_epochs") and cond.n_epochs != n_epochs:
            raise ValueError("observation epoch count does not match n_epochs")
    ts = time_steps(cfg.schedule)
    n_steps = cfg.schedule.M
    sigma0, _ = noise_level(ts[0])
    y = np.stack(
        [_initial_state(cfg.base_seed, i, n_epochs, sigma0) for i in indices]
    )
    trajs: list[list[TrajectoryStep]] | None = (
        [[] for _ in indices] if cfg.record_trajectory else None
    )
    for m in range(n_steps):
        t_cur = ts[m]
        t_next = ts[m + 1]
        sigma, _ = noise_level(t_cur)
        parts: dict | None = {} if cfg.record_trajectory else None
        denoised = fsdm_denoise_batch(y, sigma, bank, obs, cfg.lam, parts)
        d = (y - denoised) / sigma  # −σ(t)·score
        if trajs is not None:
            for b in range(len(indices)):
                pairs = tuple(
                    (obs[k][0], parts[k][0][b].copy(), parts[k][1][b].copy())
                    for k in range(len(obs))
                )
                trajs[b].append(TrajectoryStep(m, sigma, y[b].copy(), pairs))
        y_next = y + (t_next - t_cur) * d
        sigma_next, _ = noise_level(t_next)
        if sigma_next != 0.0:
            denoised2 = fsdm_denoise_batch(y_next, sigma_next, bank, obs, cfg.lam)
            d2 = (y_next - denoised2) / sigma_next
            y_next = y + 0.5 * (t_next - t_cur) * (d + d2)
        if not np.all(np.isfinite(y_next)):
            raise SamplingError(
                f"non-finite state after step {m} (sigma={sigma!r} -> {sigma_next!r})"
            )
        y = y_next
    return [
        SampleResult(
            y=Hypnodensity(y[b]),
            trajectory=tuple(trajs[b]) if trajs is not None else None,
        )
        for b in range(len(indices))
    ]


def sample_one(
    bank: SensorBank,
    obs: Observations,
    cfg: SamplerConfig,
    sample_index: int,
    n_epochs: int,
) -> SampleResult:
    """Run one probability-flow sample; deterministic in (cfg, sample_index)."""
    return _run_indices(bank, obs, cfg, [sample_index], n_epochs)[0]


def sample_many(
    bank: SensorBank,
    obs: Observations,
    cfg: SamplerConfig,
    n_epochs: int,
) -> list[SampleResult]:
    """Run cfg.n_samples samples with indices 0..n−1.

    Samples share the time grid and are integrated in lockstep as a
    batch; per-sample arithmetic is independent, so the output equals a
    sequential run of sample_one bitwise.
    """
    return _run_indices(bank, obs, cfg, range(cfg.n_samples), n_epochs)


_STAT_NAMES = (
    "tst_min",
    "sol_min",
    "waso_min",
    "rem_latency_min",
    "time_in_rem_min",
    "w_min",
    "n1_min",
    "n2_min",
    "n3_min",
    "r_min",
)


def infer(
    bank: SensorBank,
    obs: Observations,
    cfg: SamplerConfig,
    n_epochs: int,
) -> InferenceResult:
    """Sample, majority-vote a hypnogram, and aggregate overnight stats.

    The reported statistics are the per-statistic median over the
    per-sample argmax hypnograms; statistics absent from every sample
    (e.g. REM latency with no REM) are omitted from the map.
    """
    results = sample_many(bank, obs, cfg, n_epochs)
    samples = tuple(r.y for r in results)
    hypnogram = majority_vote(samples)
    reports = [
        evalkit.overnight_stats(argmax_stages(y), n_epochs) for y in samples
    ]
    stats: dict[str, float] = {}
    for name in _STAT_NAMES:
        value = evalkit.aggregate_stat(reports, name)
        if value is not None:
            stats[name] = value
    return InferenceResult(hypnogram=hypnogram, samples=samples, stats=stats, results=tuple(results))
