"""Global cost, discomfort and fairness measures, and peak-window load shifting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import FlexgridError, HORIZON, Plan, check_vectors

#: Evening peak used for load-shifting reports, [17:00, 21:00).
PEAK_WINDOW = (17 * 60, 21 * 60)
#: Morning and evening peaks for the kettle-efficiency scenario.
KETTLE_PEAK_WINDOWS = ((6 * 60 + 30, 8 * 60 + 30), (19 * 60 + 30, 21 * 60 + 30))


class ZeroBaselinePeak(FlexgridError, ZeroDivisionError):
    pass


def global_cost(aggregate) -> float:
    """Population variance of the summed demand over the day's slots (MIN-VAR)."""
    check_vectors(aggregate)
    return float(np.var(aggregate))


def _discomforts(selections) -> np.ndarray:
    d = [s.discomfort if isinstance(s, Plan) else float(s) for s in selections]
    if not d:
        raise ValueError("need at least one selection")
    return np.asarray(d, dtype=float)


def avg_discomfort(selections: Sequence[Plan] | Sequence[float]) -> float:
    return float(np.mean(_discomforts(selections)))


def unfairness(selections: Sequence[Plan] | Sequence[float]) -> float:
    """Population standard deviation of the selected plans' discomforts."""
    d = _discomforts(selections)
    if np.all(d == d[0]):
        return 0.0
    return float(np.std(d))


def peak_shift(baseline, coordinated, window: tuple[int, int] = PEAK_WINDOW) -> float:
    """Fraction of the baseline's in-window energy that coordination moved out of the window."""
    check_vectors(baseline, coordinated)
    lo, hi = window
    if not 0 <= lo < hi <= HORIZON:
        raise ValueError(f"window [{lo}, {hi}) outside the day")
    base = float(np.sum(baseline[lo:hi]))
    if base == 0:
        raise ZeroBaselinePeak("baseline has no energy inside the peak window")
    return (base - float(np.sum(coordinated[lo:hi]))) / base


@dataclass
class RunMetrics:
    """Per-iteration cost trace of one coordination run plus its final demand curve.

    Row 0 is the bootstrap state, before any coordinated iteration.
    """

    global_variance: list[float] = field(default_factory=list)
    avg_discomfort: list[float] = field(default_factory=list)
    unfairness: list[float] = field(default_factory=list)
    aggregate_demand: np.ndarray | None = None

    def record(self, aggregate: np.ndarray, discomforts: Sequence[float]) -> None:
        self.global_variance.append(global_cost(aggregate))
        self.avg_discomfort.append(avg_discomfort(discomforts))
        self.unfairness.append(unfairness(discomforts))
        self.aggregate_demand = np.array(aggregate, dtype=float)

    @property
    def iterations(self) -> int:
        return len(self.global_variance) - 1

    def final(self) -> dict[str, float]:
        return {
            "global_variance": self.global_variance[-1],
            "avg_discomfort": self.avg_discomfort[-1],
            "unfairness": self.unfairness[-1],
        }

    def rows(self):
        for t, (v, d, u) in enumerate(zip(self.global_variance, self.avg_discomfort, self.unfairness)):
            yield {"iteration": t, "global_variance": v, "avg_discomfort": d, "unfairness": u}
