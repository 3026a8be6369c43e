"""Small synthetic worlds with exact posterior enumeration and
closed-form Bayes-optimal denoisers.

A world has at most 8 epochs so the full set of 5^E hypnograms can be
enumerated; emissions are per-epoch independent given the stage.  All
mixture computations run in log space with log-sum-exp normalization.
The exact denoiser at noise level σ is the posterior mean of the one-hot
vertices under Gaussian smoothing:

    D(y, cond, σ) = Σ_h w_h · onehot(h),
    w_h ∝ p(h | cond) · exp(−‖y − onehot(h)‖² / (2σ²)),

whose column e is the smoothed posterior marginal of epoch e.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import mixture_marginals
from .hypno import N_STAGES, Hypnodensity
from .scorekit import ABSENT, Conditioning, Features, tweedie_score

ENUMERATION_CAP = 8
PRIOR = "PRIOR"
JOINT = "JOINT"

# exp(-745) is the smallest positive normal-ish double; flooring log
# densities here keeps -inf out of Gaussian likelihood sums.
LOG_DENSITY_FLOOR = -745.0

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class CategoricalEmission:
    """Per-stage categorical law over K symbols (5×K row-stochastic)."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != N_STAGES or t.shape[1] < 1:
            raise ValueError(f"categorical table must be 5×K, got {t.shape}")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > _NORM_TOL):
            raise ValueError("categorical rows must be nonnegative and sum to 1")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def n_symbols(self) -> int:
        return self.table.shape[1]


@dataclass(frozen=True)
class GaussianEmission:
    """Per-stage Gaussian law with stage-specific mean and sd."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float64)
        s = np.asarray(self.sds, dtype=np.float64)
        if m.shape != (N_STAGES,) or s.shape != (N_STAGES,):
            raise ValueError("means and sds must each have 5 entries")
        if np.any(s <= 0):
            raise ValueError("sds must be positive")
        for name, v in (("means", m), ("sds", s)):
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)


EmissionModel = CategoricalEmission | GaussianEmission


@dataclass(frozen=True)
class ExplicitPrior:
    """Probability table over all 5^E hypnograms, big-endian stage order
    (epoch 0 is the most significant digit)."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 1 or np.any(t < 0) or abs(t.sum() - 1.0) > _NORM_TOL:
            raise ValueError("prior table must be a 1-D distribution summing to 1")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)


@dataclass(frozen=True)
class MarkovPrior:
    initial: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        init = np.asarray(self.initial, dtype=np.float64)
        trans = np.asarray(self.transition, dtype=np.float64)
        if init.shape != (N_STAGES,) or abs(init.sum() - 1.0) > _NORM_TOL:
            raise ValueError("initial distribution must have 5 entries summing to 1")
        if trans.shape != (N_STAGES, N_STAGES) or np.any(
            np.abs(trans.sum(axis=1) - 1.0) > _NORM_TOL
        ):
            raise ValueError("transition matrix must be 5×5 row-stochastic")
        if np.any(init < 0) or np.any(trans < 0):
            raise ValueError("probabilities must be nonnegative")
        init = init.copy()
        init.setflags(write=False)
        trans = trans.copy()
        trans.setflags(write=False)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "transition", trans)


Prior = ExplicitPrior | MarkovPrior


@dataclass(frozen=True)
class WorldModel:
    n_epochs: int
    prior: Prior
    sensors: tuple[tuple[str, EmissionModel], ...] = ()

    def __post_init__(self):
        if self.n_epochs < 1:
            raise ValueError("world must have at least one epoch")
        object.__setattr__(self, "sensors", tuple(self.sensors))
        names = [n for n, _ in self.sensors]
        if len(set(names)) != len(names):
            raise ValueError("sensor names must be unique")
        if isinstance(self.prior, ExplicitPrior):
            if self.n_epochs > ENUMERATION_CAP:
                raise ValueError("explicit priors require n_epochs <= 8")
            if self.prior.table.shape[0] != N_STAGES**self.n_epochs:
                raise ValueError("explicit prior table must have 5^E entries")

    def sensor_names(self) -> list[str]:
        return [n for n, _ in self.sensors]

    def emission(self, name: str) -> EmissionModel:
        for n, em in self.sensors:
            if n == name:
                return em
        raise KeyError(f"unknown sensor {name!r}")


@lru_cache(maxsize=None)
def hypnogram_table(n_epochs: int) -> np.ndarray:
    """All 5^E hypnograms as a (5^E, E) uint8 array, big-endian order."""
    if n_epochs > ENUMERATION_CAP:
        raise ValueError(
            f"n_epochs={n_epochs} too large for enumeration (cap {ENUMERATION_CAP})"
        )
    grids = np.meshgrid(*([np.arange(N_STAGES, dtype=np.uint8)] * n_epochs), indexing="ij")
    table = np.stack([g.ravel() for g in grids], axis=1)
    table.setflags(write=False)
    return table


def log_prior_table(world: WorldModel) -> np.ndarray:
    """Log prior over all 5^E hypnograms, matching hypnogram_table order."""
    if world.n_epochs > ENUMERATION_CAP:
        raise ValueError(
            f"E={world.n_epochs} too large for enumeration (cap {ENUMERATION_CAP})"
        )
    with np.errstate(divide="ignore"):
        if isinstance(world.prior, ExplicitPrior):
            return np.log(world.prior.table)
        lp = np.log(world.prior.initial)
        lt = np.log(world.prior.transition)
    for _ in range(world.n_epochs - 1):
        lp = lp[..., None] + lt[(np.newaxis,) * (lp.ndim - 1)]
    return lp.ravel()


def emission_loglik(em: EmissionModel, obs: np.ndarray) -> np.ndarray:
    """Per-stage log likelihood matrix L[s, e] = log p(obs_e | stage s).

    NaN observations mark missing epochs and contribute a zero column.
    """
    obs = np.asarray(obs, dtype=np.float64).ravel()
    out = np.zeros((N_STAGES, obs.shape[0]))
    present = ~np.isnan(obs)
    if not np.any(present):
        return out
    if isinstance(em, CategoricalEmission):
        symbols = obs[present]
        sym_int = symbols.astype(np.int64)
        if np.any(sym_int != symbols) or np.any(sym_int < 0) or np.any(
            sym_int >= em.n_symbols
        ):
            raise ValueError("categorical observations must be symbol indices")
        with np.errstate(divide="ignore"):
            out[:, present] = np.log(em.table)[:, sym_int]
    else:
        x = obs[present]
        z = (x[None, :] - em.means[:, None]) / em.sds[:, None]
        logpdf = -0.5 * z**2 - np.log(em.sds)[:, None] - 0.5 * np.log(2 * np.pi)
        out[:, present] = np.maximum(logpdf, LOG_DENSITY_FLOOR)
    return out


def _conditional_loglik(world: WorldModel, obs: dict[str, np.ndarray]) -> np.ndarray:
    total = np.zeros((N_STAGES, world.n_epochs))
    for name, seq in obs.items():
        seq = np.asarray(seq, dtype=np.float64).ravel()
        if seq.shape[0] != world.n_epochs:
            raise ValueError(f"observation for {name!r} must have E={world.n_epochs} entries")
        total += emission_loglik(world.emission(name), seq)
    return total


def enumerate_posterior(world: WorldModel, obs: dict[str, np.ndarray]) -> np.ndarray:
    """Exact posterior over all 5^E hypnograms given an observation subset."""
    hyp = hypnogram_table(world.n_epochs)
    s = log_prior_table(world).copy()
    ll = _conditional_loglik(world, obs)
    for e in range(world.n_epochs):
        s += ll[hyp[:, e], e]
    m = s.max()
    if not np.isfinite(m):
        raise ValueError("observations have zero probability under this world")
    w = np.exp(s - m)
    return w / w.sum()


def joint_conditioning(world: WorldModel, obs: dict[str, np.ndarray]) -> Features:
    """Stack observations into the JOINT denoiser's conditioning matrix.

    Rows follow world sensor order; sensors without observations are NaN.
    """
    mat = np.full((len(world.sensors), world.n_epochs), np.nan)
    names = world.sensor_names()
    for name, seq in obs.items():
        if name not in names:
            raise KeyError(f"unknown sensor {name!r}")
        mat[names.index(name)] = np.asarray(seq, dtype=np.float64).ravel()
    return Features(mat)


class ExactDenoiser:
    """Bayes-optimal denoiser for a world, for one sensor, the prior, or
    the joint posterior.  Satisfies the scorekit Denoiser contract."""

    def __init__(self, world: WorldModel, target: str):
        if target not in (PRIOR, JOINT) and target not in world.sensor_names():
            raise KeyError(f"unknown denoiser target {target!r}")
        self.world = world
        self.target = target
        self._hyp = hypnogram_table(world.n_epochs)
        self._log_prior = log_prior_table(world)

    def _cond_loglik(self, cond: Conditioning) -> np.ndarray:
        zeros = np.zeros((N_STAGES, self.world.n_epochs))
        if self.target == PRIOR or cond is ABSENT:
            return zeros
        if not isinstance(cond, Features):
            raise TypeError("conditioning must be Features or ABSENT")
        v = cond.values
        if v.shape[1] != self.world.n_epochs:
            raise ValueError("conditioning epoch count does not match world")
        if self.target == JOINT:
            if v.shape[0] != len(self.world.sensors):
                raise ValueError("JOINT conditioning needs one row per world sensor")
            total = zeros
            for row, (_, em) in zip(v, self.world.sensors):
                total = total + emission_loglik(em, row)
            return total
        if v.shape[0] != 1:
            raise ValueError("per-sensor conditioning must have a single row")
        return emission_loglik(self.world.emission(self.target), v[0])

    def evaluate_batch(self, ys: np.ndarray, cond: Conditioning, sigma: float) -> np.ndarray:
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        ys = np.asarray(ys, dtype=np.float64)
        a = self._cond_loglik(cond)[None] + ys / (sigma * sigma)
        try:
            return mixture_marginals(self._log_prior, self._hyp, a)
        except FloatingPointError as err:
            raise ValueError("conditioning has zero probability under this world") from err

    def evaluate(self, y_noisy: Hypnodensity, cond: Conditioning, sigma: float) -> Hypnodensity:
        out = self.evaluate_batch(y_noisy.values[None], cond, sigma)
        return Hypnodensity(out[0])


def exact_denoiser(world: WorldModel, target: str) -> ExactDenoiser:
    return ExactDenoiser(world, target)


def exact_smoothed_score(
    world: WorldModel,
    obs: dict[str, np.ndarray],
    y: Hypnodensity | np.ndarray,
    sigma: float,
) -> np.ndarray:
    """∇_y log of the σ-smoothed posterior mixture, via the JOINT denoiser."""
    y = y if isinstance(y, Hypnodensity) else Hypnodensity(y)
    denoiser = ExactDenoiser(world, JOINT)
    cond: Conditioning = joint_conditioning(world, obs) if obs else ABSENT
    return tweedie_score(denoiser.evaluate(y, cond, sigma), y, sigma)


# ---------------------------------------------------------------------------
# JSON serialization (explicit field names, matrices row-major)
# ---------------------------------------------------------------------------


def _emission_to_dict(em: EmissionModel) -> dict:
    if isinstance(em, CategoricalEmission):
        return {"type": "categorical", "table": em.table.tolist()}
    return {"type": "gaussian", "means": em.means.tolist(), "sds": em.sds.tolist()}


def _emission_from_dict(d: dict) -> EmissionModel:
    if d["type"] == "categorical":
        return CategoricalEmission(np.array(d["table"]))
    if d["type"] == "gaussian":
        return GaussianEmission(np.array(d["means"]), np.array(d["sds"]))
    raise ValueError(f"unknown emission type {d['type']!r}")


def world_to_dict(world: WorldModel) -> dict:
    if isinstance(world.prior, ExplicitPrior):
        prior = {"type": "explicit", "table": world.prior.table.tolist()}
    else:
        prior = {
            "type": "markov",
            "initial": world.prior.initial.tolist(),
            "transition": world.prior.transition.tolist(),
        }
    return {
        "n_epochs": world.n_epochs,
        "prior": prior,
        "sensors": [
            {"name": name, "emission": _emission_to_dict(em)}
            for name, em in world.sensors
        ],
    }


def world_from_dict(d: dict) -> WorldModel:
    pd = d["prior"]
    if pd["type"] == "explicit":
        prior: Prior = ExplicitPrior(np.array(pd["table"]))
    elif pd["type"] == "markov":
        prior = MarkovPrior(np.array(pd["initial"]), np.array(pd["transition"]))
    else:
        raise ValueError(f"unknown prior type {pd['type']!r}")
    sensors = tuple(
        (s["name"], _emission_from_dict(s["emission"])) for s in d.get("sensors", [])
    )
    return WorldModel(n_epochs=int(d["n_epochs"]), prior=prior, sensors=sensors)


def save_world(path, world: WorldModel) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(world_to_dict(world), f, indent=2, sort_keys=True)
        f.write("\n")


def load_world(path) -> WorldModel:
    with open(path, "r", encoding="utf-8") as f:
        return world_from_dict(json.load(f))
