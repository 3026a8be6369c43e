"""Verification suites behind the oracle-check command, plus the random
world generators they (and the test suite) share.

Every check compares an implementation path against an independent
ground truth: closed-form schedule values, the linear-ODE argument for
point-mass worlds, exact posterior enumeration, or the algebraic
identities of the combination rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hypno import Hypnogram, Hypnodensity, argmax_stages, one_hot
from .oracle import (
    JOINT,
    PRIOR,
    CategoricalEmission,
    ExplicitPrior,
    MarkovPrior,
    WorldModel,
    enumerate_posterior,
    exact_denoiser,
    exact_smoothed_score,
    hypnogram_table,
)
from .sampler import SamplerConfig, sample_many, sample_one
from .sched import ScheduleParams, time_steps
from .scorekit import Features, SensorBank, fsdm_combine, fsdm_denoise, fsdm_score


@dataclass(frozen=True)
class CheckResult:
    name: str
    tolerance: float | None  # None = measured only, no bound asserted
    measured: float
    passed: bool


# -- world generators ---------------------------------------------------------


def informative_emission(rng: np.random.Generator, base: float = 0.96,
                         jitter: float = 0.01) -> CategoricalEmission:
    """Categorical emission whose symbol mostly identifies the stage."""
    table = np.full((5, 5), (1.0 - base) / 4)
    np.fill_diagonal(table, base)
    table = table + rng.uniform(0.0, jitter, (5, 5))
    table /= table.sum(axis=1, keepdims=True)
    return CategoricalEmission(table)


def uniform_emission(n_symbols: int = 5) -> CategoricalEmission:
    """Zero-evidence emission: every stage emits every symbol equally."""
    return CategoricalEmission(np.full((5, n_symbols), 1.0 / n_symbols))


def persistent_markov(rng: np.random.Generator, persistence: float = 0.5) -> MarkovPrior:
    init = rng.dirichlet(np.full(5, 5.0))
    trans = np.full((5, 5), (1.0 - persistence) / 4)
    np.fill_diagonal(trans, persistence)
    trans = trans + rng.uniform(0.0, 0.03, (5, 5))
    trans /= trans.sum(axis=1, keepdims=True)
    return MarkovPrior(init, trans)


def random_explicit_prior(rng: np.random.Generator, n_epochs: int) -> ExplicitPrior:
    table = rng.gamma(1.0, 1.0, 5**n_epochs) + 0.05
    return ExplicitPrior(table / table.sum())


def random_world(n_epochs: int, n_sensors: int, rng: np.random.Generator,
                 base: float = 0.96, markov: bool = True) -> WorldModel:
    prior = persistent_markov(rng) if markov else random_explicit_prior(rng, n_epochs)
    sensors = tuple(
        (f"s{i}", informative_emission(rng, base)) for i in range(n_sensors)
    )
    return WorldModel(n_epochs, prior, sensors)


def single_atom_world(h: Hypnogram) -> WorldModel:
    """Point-mass prior on one hypnogram, no sensors."""
    n_epochs = len(h)
    table = np.zeros(5**n_epochs)
    ht = hypnogram_table(n_epochs)
    idx = int(np.flatnonzero((ht == h.to_indices()).all(axis=1))[0])
    table[idx] = 1.0
    return WorldModel(n_epochs, ExplicitPrior(table))


def stage_observations(world: WorldModel, h: Hypnogram) -> dict[str, np.ndarray]:
    """Observations where each sensor reports its stage-identifying symbol."""
    seq = h.to_indices().astype(np.float64)
    return {name: seq.copy() for name, _ in world.sensors}


def oracle_bank(world: WorldModel) -> SensorBank:
    return SensorBank(
        exact_denoiser(world, PRIOR),
        tuple((name, exact_denoiser(world, name)) for name, _ in world.sensors),
    )


def posterior_marginals(world: WorldModel, post: np.ndarray) -> np.ndarray:
    """Per-epoch stage marginals of an enumerated posterior table (5×E)."""
    ht = hypnogram_table(world.n_epochs)
    out = np.zeros((5, world.n_epochs))
    for e in range(world.n_epochs):
        out[:, e] = np.bincount(ht[:, e], weights=post, minlength=5)
    return out


def hypnogram_index(h: Hypnogram) -> int:
    powers = 5 ** np.arange(len(h) - 1, -1, -1)
    return int(h.to_indices() @ powers)


def near_vertex_states(rng: np.random.Generator, h: Hypnogram, n_points: int,
                       radius: float = 0.05) -> list[Hypnodensity]:
    base = one_hot(h).values
    out = []
    for _ in range(n_points):
        u = rng.standard_normal(base.shape)
        u /= np.linalg.norm(u)
        out.append(Hypnodensity(base + u * rng.uniform(0.0, radius)))
    return out


# -- suites -------------------------------------------------------------------


def suite_schedule() -> list[CheckResult]:
    ts = time_steps(ScheduleParams())
    results = [
        CheckResult("schedule.t0_equals_sigma_max", 0.0, abs(ts[0] - 40.0), ts[0] == 40.0),
        CheckResult("schedule.t31_equals_sigma_min", 0.0, abs(ts[31] - 1e-4), ts[31] == 1e-4),
        CheckResult("schedule.t32_equals_zero", 0.0, abs(ts[32]), ts[32] == 0.0),
    ]
    mono = float(np.max(np.diff(ts)))
    results.append(CheckResult("schedule.strictly_decreasing", 0.0, mono, mono < 0.0))
    return results


def suite_single_atom(seed: int = 0, n_worlds: int = 6, n_seeds: int = 2) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for w in range(n_worlds):
        n_epochs = 1 + w % 6
        h = Hypnogram.from_indices(rng.integers(0, 5, n_epochs))
        bank = oracle_bank(single_atom_world(h))
        target = one_hot(h).values
        for s in range(n_seeds):
            cfg = SamplerConfig(base_seed=1000 * w + s)
            result = sample_one(bank, [], cfg, 0, n_epochs)
            worst = max(worst, float(np.abs(result.y.values - target).max()))
    return [CheckResult("single_atom.inf_norm", 1e-6, worst, worst <= 1e-6)]


def suite_posterior(seed: int = 0, n_worlds: int = 2, n_samples: int = 1024) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for w in range(n_worlds):
        world = random_world(4, 1, rng)
        h = Hypnogram.from_indices(rng.integers(0, 5, 4))
        obs = stage_observations(world, h)
        post = enumerate_posterior(world, obs)
        bank = oracle_bank(world)
        obs_list = [("s0", Features(obs["s0"]))]
        cfg = SamplerConfig(n_samples=n_samples, base_seed=w, lam=1.0)
        counts = np.zeros(post.size)
        for result in sample_many(bank, obs_list, cfg, 4):
            counts[hypnogram_index(argmax_stages(result.y))] += 1
        tv = float(0.5 * np.abs(counts / n_samples - post).sum())
        results.append(CheckResult(f"posterior.tv_world{w}", 0.1, tv, tv <= 0.1))
    return results


def suite_factorization(seed: int = 0, n_worlds: int = 4, n_points: int = 20) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    by_sigma: dict[float, list[float]] = {0.01: [], 1.0: [], 10.0: []}
    for _ in range(n_worlds):
        world = random_world(4, 2, rng)
        h = Hypnogram.from_indices(rng.integers(0, 5, 4))
        obs = stage_observations(world, h)
        bank = oracle_bank(world)
        obs_list = [(name, Features(seq)) for name, seq in obs.items()]
        for y in near_vertex_states(rng, h, n_points):
            for sigma in by_sigma:
                s_f = fsdm_score(y, sigma, bank, obs_list, lam=1.0)
                s_j = exact_smoothed_score(world, obs, y, sigma)
                denom = np.linalg.norm(s_j)
                by_sigma[sigma].append(float(np.linalg.norm(s_f - s_j) / denom))
    worst_small = max(by_sigma[0.01])
    results = [CheckResult("factorization.rel_l2_sigma_0.01", 1e-3, worst_small,
                           worst_small <= 1e-3)]
    for sigma in (1.0, 10.0):
        results.append(CheckResult(
            f"factorization.rel_l2_sigma_{sigma:g}", None,
            float(np.median(by_sigma[sigma])), True,
        ))
    return results


def suite_identities(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    world = random_world(4, 1, rng)
    h = Hypnogram.from_indices(rng.integers(0, 5, 4))
    obs_seq = stage_observations(world, h)["s0"]
    bank = oracle_bank(world)
    likelihood = exact_denoiser(world, "s0")
    results = []

    worst_identity = 0.0
    worst_dup = 0.0
    worst_colsum = 0.0
    for _ in range(10):
        y = Hypnodensity(rng.standard_normal((5, 4)))
        sigma = float(rng.uniform(0.3, 3.0))
        cond = Features(obs_seq)
        single = fsdm_denoise(y, sigma, bank, [("s0", cond)], lam=None)
        direct = likelihood.evaluate(y, cond, sigma)
        worst_identity = max(worst_identity,
                             float(np.abs(single.values - direct.values).max()))
        for k in (2, 4, 8):
            dup = fsdm_denoise(y, sigma, bank, [("s0", cond)] * k, lam=None)
            worst_dup = max(worst_dup, float(np.abs(dup.values - single.values).max()))
        combined = fsdm_combine(y, sigma, bank, [("s0", cond)], lam=None)
        worst_colsum = max(worst_colsum,
                           float(np.abs(combined.values.sum(axis=0) - 1.0).max()))
    results.append(CheckResult("identities.n1_equals_likelihood", 1e-12,
                               worst_identity, worst_identity <= 1e-12))
    results.append(CheckResult("identities.duplication_invariance", 1e-12,
                               worst_dup, worst_dup <= 1e-12))
    results.append(CheckResult("identities.column_sums_pre_projection", 1e-9,
                               worst_colsum, worst_colsum <= 1e-9))

    joint = exact_denoiser(world, JOINT)
    post = enumerate_posterior(world, {"s0": obs_seq})
    marg = posterior_marginals(world, post)
    y = Hypnodensity(one_hot(h).values)
    big = joint.evaluate(y, Features(obs_seq[None, :]), 1e6).values
    err = float(np.abs(big - marg).max())
    results.append(CheckResult("identities.large_sigma_prior_marginals", 1e-6,
                               err, err <= 1e-6))
    return results


SUITES = {
    "schedule": suite_schedule,
    "single_atom": suite_single_atom,
    "posterior": suite_posterior,
    "factorization": suite_factorization,
    "identities": suite_identities,
}


def run_suites(names: list[str]) -> list[CheckResult]:
    results: list[CheckResult] = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r} (have {sorted(SUITES)})")
        results.extend(SUITES[name]())
    return results
