"""Plan generation, multi-appliance combination and constraint filtering.

A consumer's combined plan space is the Cartesian product of the per-schedule
spaces and grows multiplicatively, so :class:`PlanSpace` stores only the
component index table and discomforts. Energy vectors are summed on access.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, overload

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .domain import (
    HORIZON,
    Constraint,
    FlexgridError,
    ForbiddenWindow,
    NoOverlap,
    Placement,
    Plan,
    Schedule,
    validate_schedule,
)

DEFAULT_PLAN_CAP = 10**6


class PlanSpaceTooLarge(FlexgridError):
    pass


class EmptyInput(FlexgridError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GeneratedPlanSpace:
    """Every time-shifted plan of one schedule, lowest discomfort first.

    All plans are the same block at different offsets, so ``window`` is a
    read-only sliding view over one padded vector: ``window[j]`` is the plan
    shifted by ``j - f`` minutes. ``rows[i]`` maps rank ``i`` to its window row.
    """

    schedule: Schedule
    draw: float
    window: np.ndarray
    rows: np.ndarray
    shifts: np.ndarray
    discomforts: np.ndarray

    def __post_init__(self):
        for arr in (self.rows, self.shifts, self.discomforts):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.shifts)

    def __iter__(self):
        return iter(self.plans)

    def __getitem__(self, i):
        return self.plans[i]

    def vector(self, i: int) -> np.ndarray:
        """Energy vector of the rank-``i`` plan (a read-only view)."""
        return self.window[self.rows[i]]

    @property
    def values(self) -> np.ndarray:
        """All vectors in rank order, as a new ``(2f+1, 1440)`` array."""
        return self.window[self.rows]

    def totals(self) -> np.ndarray:
        return self.window.sum(axis=1)[self.rows]

    @cached_property
    def plans(self) -> tuple[Plan, ...]:
        s = self.schedule
        return tuple(Plan(self.vector(i), float(d), (Placement(s.appliance, s.start, s.duration, int(sh)),))
                     for i, (sh, d) in enumerate(zip(self.shifts, self.discomforts)))

    def scaled(self, factors: np.ndarray) -> GeneratedPlanSpace:
        """Copy with every vector multiplied slot-wise by ``factors``."""
        window = self.window * factors
        window.setflags(write=False)
        return GeneratedPlanSpace(self.schedule, self.draw, window, self.rows.copy(),
                                  self.shifts.copy(), self.discomforts.copy())


def shift_order(flexibility: int) -> list[int]:
    """Shifts in ``[-f, f]`` ordered by distance from zero, earlier start first on ties."""
    return sorted(range(-flexibility, flexibility + 1), key=lambda s: (abs(s), s))


def generate_plans(s: Schedule, per_minute_draw: float) -> GeneratedPlanSpace:
    """Enumerate the ``2f + 1`` plans of a schedule at one-minute granularity."""
    validate_schedule(s)
    if not per_minute_draw > 0:
        raise ValueError(f"per-minute draw must be positive, got {per_minute_draw}")
    f = s.flexibility
    shifts = np.empty(2 * f + 1, dtype=np.int64)
    shifts[0] = 0
    shifts[1::2] = -np.arange(1, f + 1)
    shifts[2::2] = np.arange(1, f + 1)
    # Row j of the view reads padded[2f - j : 2f - j + HORIZON], i.e. the block
    # starting at start + (j - f).
    padded = np.zeros(HORIZON + 2 * f)
    padded[s.start + f:s.start + f + s.duration] = float(per_minute_draw)
    window = sliding_window_view(padded, HORIZON)[::-1]
    discomforts = np.abs(shifts) / f if f else np.zeros(1)
    return GeneratedPlanSpace(s, float(per_minute_draw), window, shifts + f, shifts, discomforts)


def _exact_discomfort_key(shift_table: np.ndarray, flexibilities: Sequence[int]) -> np.ndarray:
    # Integer numerators over a common denominator make equal discomfort sums
    # compare equal regardless of floating-point summation order.
    positive = [f for f in flexibilities if f > 0]
    lcm = math.lcm(*positive) if positive else 1
    if lcm * sum(positive) < 2**62:
        key = np.zeros(len(shift_table), dtype=np.int64)
        for j, f in enumerate(flexibilities):
            if f > 0:
                key += np.abs(shift_table[:, j]) * (lcm // f)
        return key
    key = np.zeros(len(shift_table))
    for j, f in enumerate(flexibilities):
        if f > 0:
            key += np.abs(shift_table[:, j]) / f
    return np.round(key, 12)


class PlanSpace(Sequence[Plan]):
    """A lazily materialised, discomfort-sorted list of combined plans.

    Row ``i`` picks ``components[j].plans[choice[i, j]]`` for every component ``j``.
    """

    def __init__(self, components: Sequence[GeneratedPlanSpace], choice: np.ndarray,
                 discomfort: np.ndarray):
        self.components = tuple(components)
        self.choice = choice
        self.discomfort = discomfort
        self.choice.setflags(write=False)
        self.discomfort.setflags(write=False)

    def __len__(self) -> int:
        return len(self.choice)

    @overload
    def __getitem__(self, i: int) -> Plan: ...
    @overload
    def __getitem__(self, i: slice) -> list[Plan]: ...

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        row = self.choice[i]
        parts = [c.plans[k] for c, k in zip(self.components, row)]
        values = np.sum([c.vector(k) for c, k in zip(self.components, row)], axis=0)
        placements = tuple(pl for p in parts for pl in p.placements)
        return Plan(values, float(self.discomfort[i]), placements)

    def __repr__(self):
        kinds = ",".join(c.schedule.appliance.value for c in self.components)
        return f"PlanSpace({len(self)} plans over [{kinds}])"

    def take(self, indices: Iterable[int]) -> list[Plan]:
        return [self[int(i)] for i in indices]

    def subset(self, mask: np.ndarray) -> PlanSpace:
        return PlanSpace(self.components, self.choice[mask], self.discomfort[mask])

    def shift_table(self) -> np.ndarray:
        cols = [c.shifts[self.choice[:, j]] for j, c in enumerate(self.components)]
        return np.stack(cols, axis=1) if cols else np.zeros((len(self), 0), dtype=np.int64)

    def intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-row, per-component active ``[begin, end)`` minute bounds."""
        shifts = self.shift_table()
        starts = np.array([c.schedule.start for c in self.components])
        durations = np.array([c.schedule.duration for c in self.components])
        begin = starts[None, :] + shifts
        return begin, begin + durations[None, :]

    def totals(self) -> np.ndarray:
        per_component = [c.totals() for c in self.components]
        return np.sum([t[self.choice[:, j]] for j, t in enumerate(per_component)], axis=0)


def combine_plans(spaces: Sequence[GeneratedPlanSpace], cap: int = DEFAULT_PLAN_CAP) -> PlanSpace:
    """Cartesian product of per-schedule spaces for one consumer-day.

    Combined vectors are element-wise sums, combined discomfort is the mean
    over all components, and rows are sorted by discomfort, then by the
    component shift tuple.
    """
    if not spaces:
        raise EmptyInput("combine_plans needs at least one plan space")
    sizes = [len(s) for s in spaces]
    count = math.prod(sizes)
    if count > cap:
        raise PlanSpaceTooLarge(f"{count} combined plans exceeds cap {cap} (sizes {sizes})")

    choice = np.indices(sizes, dtype=np.int64).reshape(len(sizes), -1).T
    shifts = np.stack([s.shifts[choice[:, j]] for j, s in enumerate(spaces)], axis=1)
    discomfort = np.mean(
        np.stack([s.discomforts[choice[:, j]] for j, s in enumerate(spaces)], axis=1), axis=1)
    key = _exact_discomfort_key(shifts, [s.schedule.flexibility for s in spaces])
    order = np.lexsort(tuple(shifts[:, j] for j in reversed(range(len(spaces)))) + (key,))
    return PlanSpace(spaces, np.ascontiguousarray(choice[order]),
                     np.ascontiguousarray(discomfort[order]))


def violations(space: PlanSpace, constraint: Constraint) -> np.ndarray:
    """Boolean mask of rows that break ``constraint``."""
    begin, end = space.intervals()
    kinds = [c.schedule.appliance for c in space.components]
    bad = np.zeros(len(space), dtype=bool)
    if isinstance(constraint, ForbiddenWindow):
        for j, kind in enumerate(kinds):
            if kind == constraint.appliance:
                bad |= (begin[:, j] < constraint.end) & (constraint.start < end[:, j])
    elif isinstance(constraint, NoOverlap):
        for i, ki in enumerate(kinds):
            for j, kj in enumerate(kinds):
                if i >= j:
                    continue
                if {ki, kj} == {constraint.a, constraint.b}:
                    bad |= (begin[:, i] < end[:, j]) & (begin[:, j] < end[:, i])
    else:
        raise TypeError(f"unsupported constraint {constraint!r}")
    return bad


def filter_constraints(space: PlanSpace, constraints: Iterable[Constraint]) -> PlanSpace:
    """Drop combined plans that break any constraint; order is preserved."""
    constraints = list(constraints)
    if not constraints:
        return space
    bad = np.zeros(len(space), dtype=bool)
    for c in constraints:
        bad |= violations(space, c)
    return space.subset(~bad)


def build_plan_space(schedules: Sequence[Schedule], draws: dict, constraints: Iterable[Constraint] = (),
                     cap: int = DEFAULT_PLAN_CAP) -> PlanSpace:
    """Generate, combine and filter in one step; ``draws`` maps appliance to per-minute draw."""
    spaces = [generate_plans(s, draws[s.appliance]) for s in schedules]
    return filter_constraints(combine_plans(spaces, cap=cap), constraints)
