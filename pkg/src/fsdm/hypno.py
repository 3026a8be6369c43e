"""Core categorical-sequence types: hypnograms, hypnodensities, and votes.

A hypnogram is a sequence of 30-second sleep-stage labels; a hypnodensity
is its continuous relaxation, a 5×E matrix of per-epoch stage
probabilities that doubles as the diffusion state.  All types are
immutable after construction and every operation here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

EPOCH_SECONDS = 30
N_STAGES = 5


class SleepStage(IntEnum):
    """The five scoring stages, in fixed order."""

    W = 0
    N1 = 1
    N2 = 2
    N3 = 3
    R = 4


STAGE_LABELS = tuple(s.name for s in SleepStage)


@dataclass(frozen=True)
class Hypnogram:
    """A sequence of sleep stages, one per 30-second epoch."""

    stages: tuple[SleepStage, ...]

    def __post_init__(self):
        if len(self.stages) < 1:
            raise ValueError("hypnogram must contain at least one epoch")
        object.__setattr__(
            self, "stages", tuple(SleepStage(s) for s in self.stages)
        )

    def __len__(self) -> int:
        return len(self.stages)

    def __getitem__(self, e: int) -> SleepStage:
        return self.stages[e]

    @property
    def n_epochs(self) -> int:
        return len(self.stages)

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "Hypnogram":
        return cls(tuple(SleepStage(int(i)) for i in indices))

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "Hypnogram":
        return cls(tuple(SleepStage[label.strip()] for label in labels))

    def to_indices(self) -> np.ndarray:
        return np.array([int(s) for s in self.stages], dtype=np.int64)

    def to_labels(self) -> list[str]:
        return [s.name for s in self.stages]


@dataclass(frozen=True)
class Hypnodensity:
    """5×E matrix of per-epoch stage weights; entries must be finite.

    Columns are not required to lie on the probability simplex: the
    diffusion state wanders off it by construction.  ``on_manifold``
    and ``is_one_hot`` test the two interesting special cases.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != N_STAGES:
            raise ValueError(f"hypnodensity must be 5×E, got shape {v.shape}")
        if v.shape[1] < 1:
            raise ValueError("hypnodensity must have at least one epoch")
        if not np.all(np.isfinite(v)):
            raise ValueError("hypnodensity entries must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_epochs(self) -> int:
        return self.values.shape[1]

    def on_manifold(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.values.sum(axis=0) - 1.0) <= tol))

    def is_one_hot(self, tol: float = 1e-9) -> bool:
        if not self.on_manifold(tol):
            return False
        return bool(np.all(np.sum(self.values == 1.0, axis=0) == 1))


def one_hot(h: Hypnogram) -> Hypnodensity:
    """Encode a hypnogram as a one-hot hypnodensity."""
    v = np.zeros((N_STAGES, len(h)))
    v[h.to_indices(), np.arange(len(h))] = 1.0
    return Hypnodensity(v)


def project_manifold(y: Hypnodensity) -> Hypnodensity:
    """Renormalize each column to sum to 1 (the projection τ).

    Only divides; negative entries survive.  Columns whose sum has
    absolute value below 1e-9 are replaced by the uniform column, since
    the division is undefined there.
    """
    return Hypnodensity(_project_values(y.values))


def _project_values(v: np.ndarray) -> np.ndarray:
    sums = v.sum(axis=0)
    degenerate = np.abs(sums) < 1e-9
    safe = np.where(degenerate, 1.0, sums)
    out = v / safe
    if np.any(degenerate):
        out = out.copy()
        out[:, degenerate] = 1.0 / N_STAGES
    return out


def argmax_stages(y: Hypnodensity) -> Hypnogram:
    """Per-column argmax; ties break toward the lowest stage index."""
    return Hypnogram.from_indices(np.argmax(y.values, axis=0))


def majority_vote(samples: Sequence[Hypnodensity]) -> Hypnogram:
    """Argmax of the element-wise mean over samples (per-epoch vote)."""
    if len(samples) == 0:
        raise ValueError("majority_vote requires at least one sample")
    n_epochs = samples[0].n_epochs
    for s in samples:
        if s.n_epochs != n_epochs:
            raise ValueError("all samples must share the same epoch count")
    mean = np.mean([s.values for s in samples], axis=0)
    return argmax_stages(Hypnodensity(mean))


def write_hypnogram(path, h: Hypnogram) -> None:
    """Write the text format: one stage label per line, newline-terminated."""
    with open(path, "w", encoding="utf-8") as f:
        for label in h.to_labels():
            f.write(label + "\n")


def read_hypnogram(path) -> Hypnogram:
    with open(path, "r", encoding="utf-8") as f:
        labels = [line.strip() for line in f if line.strip()]
    return Hypnogram.from_labels(labels)
