"""Core vocabulary shared by every stage of the scheduling pipeline."""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: Number of one-minute slots in the scheduling horizon.
HORIZON = 1440
#: Slot width in minutes. Fixed; plans are always minute-resolved.
GRANULARITY = 1


class FlexgridError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSchedule(FlexgridError, ValueError):
    pass


class StartUnderflow(InvalidSchedule):
    pass


class HorizonOverflow(InvalidSchedule):
    pass


class NonPositiveDuration(InvalidSchedule):
    pass


class DimensionMismatch(FlexgridError, ValueError):
    pass


class Appliance(str, enum.Enum):
    COMPUTER = "computer"
    DISH_WASHER = "dish_washer"
    HOB = "hob"
    KETTLE = "kettle"
    OVEN = "oven"
    TUMBLE_DRYER = "tumble_dryer"
    WASHING_MACHINE = "washing_machine"

    @classmethod
    def parse(cls, value: str | Appliance) -> Appliance:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace(" ", "_").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown appliance {value!r}") from None


class HouseType(str, enum.Enum):
    APARTMENT = "apartment"
    DETACHED = "detached"
    SEMI_DETACHED = "semi_detached"
    MID_TERRACE = "mid_terrace"
    OTHER = "other"

    @classmethod
    def parse(cls, value: str | HouseType) -> HouseType:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace(" ", "_").replace("-", "_")
        aliases = {"flat": "apartment", "apartment/flat": "apartment", "ap": "apartment",
                   "sd": "semi_detached", "semi": "semi_detached", "terrace": "mid_terrace"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown house type {value!r}") from None


@dataclass(frozen=True, slots=True)
class Schedule:
    """One requested appliance use: preferred start, run length and allowed shift (minutes)."""

    appliance: Appliance
    start: int
    duration: int
    flexibility: int

    def __post_init__(self):
        object.__setattr__(self, "appliance", Appliance.parse(self.appliance))

    @property
    def earliest(self) -> int:
        return self.start - self.flexibility

    @property
    def latest_end(self) -> int:
        return self.start + self.flexibility + self.duration


def validate_schedule(s: Schedule) -> Schedule:
    """Raise an :class:`InvalidSchedule` subclass unless every plan of ``s`` fits the day."""
    if s.duration <= 0:
        raise NonPositiveDuration(f"duration must be positive, got {s.duration}")
    if s.flexibility < 0:
        raise InvalidSchedule(f"flexibility must be non-negative, got {s.flexibility}")
    if not 0 <= s.start < HORIZON:
        raise InvalidSchedule(f"start {s.start} outside [0, {HORIZON - 1}]")
    if s.start - s.flexibility < 0:
        raise StartUnderflow(
            f"start {s.start} minus flexibility {s.flexibility} precedes midnight")
    if s.start + s.flexibility + s.duration > HORIZON:
        raise HorizonOverflow(
            f"start {s.start} + flexibility {s.flexibility} + duration {s.duration} "
            f"exceeds {HORIZON}")
    return s


@dataclass(frozen=True, slots=True)
class Placement:
    """Where one component appliance run lands inside a plan."""

    appliance: Appliance
    start: int
    duration: int
    shift: int

    @property
    def begin(self) -> int:
        return self.start + self.shift

    @property
    def end(self) -> int:
        return self.start + self.shift + self.duration


@dataclass(frozen=True, eq=False)
class Plan:
    """A 1440-slot energy vector (watt-minutes per slot) and its normalised discomfort.

    ``placements`` records each component run so constraints can be checked
    without inspecting the vector.
    """

    values: np.ndarray
    discomfort: float
    placements: tuple[Placement, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (HORIZON,):
            raise DimensionMismatch(f"plan must have {HORIZON} slots, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shifts(self) -> tuple[int, ...]:
        return tuple(p.shift for p in self.placements)

    @property
    def shift(self) -> int:
        if len(self.placements) != 1:
            raise AttributeError("shift is defined only for single-appliance plans")
        return self.placements[0].shift

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, Plan):
            return NotImplemented
        return (self.discomfort == other.discomfort
                and self.placements == other.placements
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class AgentPlanSet:
    """The candidate plans one agent submits to coordination, plus its cooperation weight."""

    agent_id: str
    plans: tuple[Plan, ...]
    lam: float
    original_index: int | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "plans", tuple(self.plans))
        if not self.plans:
            raise ValueError(f"agent {self.agent_id!r} has no plans")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.original_index is None:
            for i, p in enumerate(self.plans):
                if p.discomfort == 0.0:
                    object.__setattr__(self, "original_index", i)
                    break

    def matrix(self) -> np.ndarray:
        return np.stack([p.values for p in self.plans])

    def discomforts(self) -> np.ndarray:
        return np.array([p.discomfort for p in self.plans])


@dataclass(frozen=True, slots=True)
class NoOverlap:
    """Two appliance kinds must not run at the same time."""

    a: Appliance
    b: Appliance

    def __post_init__(self):
        object.__setattr__(self, "a", Appliance.parse(self.a))
        object.__setattr__(self, "b", Appliance.parse(self.b))


@dataclass(frozen=True, slots=True)
class ForbiddenWindow:
    """An appliance must not be active anywhere in ``[start, end)``."""

    appliance: Appliance
    start: int
    end: int

    def __post_init__(self):
        object.__setattr__(self, "appliance", Appliance.parse(self.appliance))
        if not (0 <= self.start < self.end <= HORIZON):
            raise ValueError(f"window [{self.start}, {self.end}) outside the day")


Constraint = NoOverlap | ForbiddenWindow


@dataclass(frozen=True, slots=True)
class HouseholdInfo:
    occupancy: int
    size_bedrooms: int
    house_type: HouseType
    year_built: str | int | None = None

    def __post_init__(self):
        object.__setattr__(self, "house_type", HouseType.parse(self.house_type))
        if self.occupancy < 1:
            raise ValueError("occupancy must be at least 1")
        if self.size_bedrooms < 1:
            raise ValueError("size_bedrooms must be at least 1")


def minute_label(minute: int) -> str:
    return f"{minute // 60:02d}:{minute % 60:02d}"


def parse_minute(text: str | int) -> int:
    """Accept ``"18:30"`` or a bare minute count."""
    if isinstance(text, (int, np.integer)):
        return int(text)
    text = str(text).strip()
    if ":" in text:
        h, m = text.split(":")
        return int(h) * 60 + int(m)
    return int(text)


def check_vectors(*vectors: Sequence[float]) -> None:
    for v in vectors:
        if np.shape(v) != (HORIZON,):
            raise DimensionMismatch(f"expected {HORIZON} slots, got shape {np.shape(v)}")


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for one named pipeline stage (``"topology"``, ``"sampling"``, ...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode()), *map(int, keys)])
