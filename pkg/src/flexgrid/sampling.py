"""Cooperation-level plan sampling over a discomfort-sorted plan space.

Each mechanism picks ``k`` candidates an agent will submit for coordination:
the selfish end keeps the most comfortable plans, the altruistic end the
least comfortable ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import FlexgridError, Plan


class EmptyPlanSpace(FlexgridError, ValueError):
    pass


class Mechanism(str, enum.Enum):
    TOP_RANKED = "top_ranked"
    TOP_POISSON = "top_poisson"
    UNIFORM = "uniform"
    BOTTOM_POISSON = "bottom_poisson"
    BOTTOM_RANKED = "bottom_ranked"

    @classmethod
    def parse(cls, value: str | Mechanism) -> Mechanism:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_").replace(" ", "_"))
        except ValueError:
            choices = ", ".join(m.cli_name for m in cls)
            raise ValueError(f"unknown sampling mechanism {value!r} (choose from {choices})") from None

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")


ALL_MECHANISMS = tuple(Mechanism)


@dataclass(frozen=True)
class SamplingMechanism:
    kind: Mechanism
    k: int = 10
    poisson_rate: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Mechanism.parse(self.kind))
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.poisson_rate > 0:
            raise ValueError("poisson_rate must be positive")


def truncated_poisson_weights(n: int, rate: float) -> np.ndarray:
    """Poisson pmf over ranks ``0..n-1``, renormalised to sum to one."""
    ranks = np.arange(n)
    log_factorial = np.concatenate(([0.0], np.cumsum(np.log(ranks[1:]))))
    log_pmf = ranks * math.log(rate) - rate - log_factorial
    w = np.exp(log_pmf - log_pmf.max())
    return w / w.sum()


def uniform_indices(n: int, k: int) -> np.ndarray:
    """``k`` evenly spaced ranks over ``[0, n-1]``, both ends included, rounded half up."""
    if k == 1:
        return np.array([0])
    return np.floor(np.arange(k) * (n - 1) / (k - 1) + 0.5).astype(np.int64)


def poisson_indices(n: int, k: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct ranks drawn successively with Poisson(``rate``) weights."""
    w = truncated_poisson_weights(n, rate)
    nonzero = np.count_nonzero(w)
    if nonzero < k:
        # Far tail underflows; give the remaining ranks the smallest positive weight.
        w = np.where(w > 0, w, w[w > 0].min())
        w /= w.sum()
    return np.sort(rng.choice(n, size=k, replace=False, p=w))


def sample_indices(n: int, mechanism: SamplingMechanism,
                   seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Ranks (ascending) into a discomfort-sorted space of size ``n``."""
    if n < 1:
        raise EmptyPlanSpace("cannot sample from an empty plan space")
    k = mechanism.k
    if n <= k:
        return np.arange(n)
    kind = mechanism.kind
    if kind is Mechanism.TOP_RANKED:
        return np.arange(k)
    if kind is Mechanism.BOTTOM_RANKED:
        return np.arange(n - k, n)
    if kind is Mechanism.UNIFORM:
        return uniform_indices(n, k)
    rng = np.random.default_rng(seed)
    picked = poisson_indices(n, k, mechanism.poisson_rate, rng)
    if kind is Mechanism.TOP_POISSON:
        return picked
    return np.sort(n - 1 - picked)


def sample(plans: Sequence[Plan], mechanism: SamplingMechanism,
           seed: int | np.random.Generator | None = None) -> list[Plan]:
    """Pick candidate plans from ``plans`` (sorted by increasing discomfort)."""
    idx = sample_indices(len(plans), mechanism, seed)
    if hasattr(plans, "take"):
        return plans.take(idx)
    return [plans[int(i)] for i in idx]
