"""Dataset files: loading, validation, saving, and synthetic generation.

A dataset is a directory holding

* ``schedules.csv``: consumer_id, day, appliance, start_minute, duration_min, flexibility_min
* ``consumers.csv`` (optional): consumer_id, p7, lambda, occupancy, bedrooms, house_type, year_built
* ``constraints.csv`` (optional): consumer_id, day, kind, appliance, other_appliance,
  start_minute, end_minute; a blank day applies the constraint to every day

All files are UTF-8, comma separated, LF line endings, with a header row.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    HORIZON,
    Appliance,
    Constraint,
    FlexgridError,
    ForbiddenWindow,
    HouseholdInfo,
    HouseType,
    InvalidSchedule,
    NoOverlap,
    Schedule,
    substream,
    validate_schedule,
)
from .profiles import (
    ApplianceRatings,
    ReferenceHousehold,
    UnknownAppliance,
    appliance_draw,
    load_ratings,
    load_reference_households,
    match_household,
)

SCHEDULE_FIELDS = ["consumer_id", "day", "appliance", "start_minute", "duration_min", "flexibility_min"]
CONSUMER_FIELDS = ["consumer_id", "p7", "lambda", "occupancy", "bedrooms", "house_type", "year_built"]
CONSTRAINT_FIELDS = ["consumer_id", "day", "kind", "appliance", "other_appliance",
                     "start_minute", "end_minute"]


class DatasetError(FlexgridError):
    pass


class ParseError(DatasetError):
    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path, self.line = path, line


class ValidationError(DatasetError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


class MissingProfileData(DatasetError):
    pass


def lambda_from_survey(answer: int) -> float:
    """Map a 0-4 survey answer to a cooperation weight in [0, 1]."""
    if answer not in (0, 1, 2, 3, 4):
        raise ValueError(f"survey answer must be 0..4, got {answer}")
    return answer / 4


@dataclass(frozen=True)
class Consumer:
    id: str
    household: HouseholdInfo | None = None
    p7: int | None = None
    lam: float | None = None

    def resolved_lambda(self) -> float | None:
        if self.lam is not None:
            return self.lam
        if self.p7 is not None:
            return lambda_from_survey(self.p7)
        return None


@dataclass(frozen=True)
class ScheduleRow:
    consumer_id: str
    day: int
    schedule: Schedule


@dataclass(frozen=True)
class ConstraintRow:
    consumer_id: str
    day: int | None
    constraint: Constraint


@dataclass(frozen=True)
class Dataset:
    schedules: tuple[ScheduleRow, ...]
    consumers: Mapping[str, Consumer] = field(default_factory=dict)
    constraints: tuple[ConstraintRow, ...] = ()
    # Filled by resolve(); not part of the file content.
    lambdas: Mapping[str, float] = field(default_factory=dict, compare=False)
    draws: Mapping[str, Mapping[Appliance, float]] = field(default_factory=dict, compare=False)

    def days(self) -> list[int]:
        return sorted({r.day for r in self.schedules})

    def consumer_ids(self, day: int | None = None) -> list[str]:
        ids = {r.consumer_id for r in self.schedules if day is None or r.day == day}
        return sorted(ids, key=_natural_key)

    def schedules_for(self, consumer_id: str, day: int) -> list[Schedule]:
        return [r.schedule for r in self.schedules if r.consumer_id == consumer_id and r.day == day]

    def by_consumer_day(self, day: int) -> dict[str, list[Schedule]]:
        out: dict[str, list[Schedule]] = {}
        for r in self.schedules:
            if r.day == day:
                out.setdefault(r.consumer_id, []).append(r.schedule)
        return {c: out[c] for c in sorted(out, key=_natural_key)}

    def constraints_for(self, consumer_id: str, day: int) -> list[Constraint]:
        return [r.constraint for r in self.constraints
                if r.consumer_id == consumer_id and (r.day is None or r.day == day)]

    def map_schedules(self, fn) -> Dataset:
        """Copy with every schedule replaced by ``fn(row)``; resolution is kept."""
        return replace(self, schedules=tuple(replace(r, schedule=fn(r)) for r in self.schedules))

    def with_lambdas(self, lambdas: Mapping[str, float]) -> Dataset:
        return replace(self, lambdas=dict(lambdas))


def _natural_key(text: str):
    return (0, int(text), "") if text.isdigit() else (1, 0, text)


# --------------------------------------------------------------------------- loading


def _read_csv(path: Path, required: Sequence[str]) -> list[tuple[int, dict]]:
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 ({exc})", path) from exc
    if not text.strip():
        raise ParseError("file is empty", path, 1)
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"missing columns {missing}", path, 1)
    rows = []
    for row in reader:
        if None in row:
            raise ParseError("too many fields", path, reader.line_num)
        if all(not (v or "").strip() for v in row.values()):
            continue
        rows.append((reader.line_num, {k: (v or "").strip() for k, v in row.items()}))
    return rows


def _int(value: str, what: str, path: Path, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {value!r}", path, line) from None


def _opt_int(value: str, what: str, path: Path, line: int) -> int | None:
    return None if value == "" else _int(value, what, path, line)


def _files(path: Path) -> tuple[Path, Path, Path]:
    path = Path(path)
    if path.is_dir():
        base = path
        schedules = base / "schedules.csv"
    else:
        base = path.parent
        schedules = path
    if not schedules.exists():
        raise DatasetError(f"no schedules file at {schedules}")
    return schedules, base / "consumers.csv", base / "constraints.csv"


def read_dataset(path: str | Path) -> Dataset:
    """Parse and validate the dataset files without resolving lambdas or draws."""
    sched_path, cons_path, constr_path = _files(Path(path))

    schedules = []
    for line, row in _read_csv(sched_path, SCHEDULE_FIELDS):
        try:
            appliance = Appliance.parse(row["appliance"])
        except ValueError as exc:
            raise ParseError(str(exc), sched_path, line) from None
        s = Schedule(appliance,
                     _int(row["start_minute"], "start_minute", sched_path, line),
                     _int(row["duration_min"], "duration_min", sched_path, line),
                     _int(row["flexibility_min"], "flexibility_min", sched_path, line))
        try:
            validate_schedule(s)
        except InvalidSchedule as exc:
            raise ValidationError(f"{type(exc).__name__}: {exc}", line) from None
        if not row["consumer_id"]:
            raise ParseError("consumer_id is blank", sched_path, line)
        schedules.append(ScheduleRow(row["consumer_id"], _int(row["day"], "day", sched_path, line), s))
    if not schedules:
        raise ParseError("no schedule rows", sched_path, 2)

    consumers: dict[str, Consumer] = {}
    if cons_path.exists():
        for line, row in _read_csv(cons_path, ["consumer_id"]):
            cid = row["consumer_id"]
            if cid in consumers:
                raise ValidationError(f"duplicate consumer {cid!r} in {cons_path.name}", line)
            household = None
            if row.get("occupancy") or row.get("bedrooms") or row.get("house_type"):
                try:
                    household = HouseholdInfo(
                        _int(row.get("occupancy", ""), "occupancy", cons_path, line),
                        _int(row.get("bedrooms", ""), "bedrooms", cons_path, line),
                        HouseType.parse(row.get("house_type", "")),
                        row.get("year_built") or None)
                except ValueError as exc:
                    raise ValidationError(f"{cons_path.name}: {exc}", line) from None
            p7 = _opt_int(row.get("p7", ""), "p7", cons_path, line)
            if p7 is not None and not 0 <= p7 <= 4:
                raise ValidationError(f"p7 must be 0..4, got {p7}", line)
            lam = row.get("lambda", "")
            try:
                lam = float(lam) if lam else None
            except ValueError:
                raise ParseError(f"lambda must be a number, got {lam!r}", cons_path, line) from None
            if lam is not None and not 0 <= lam <= 1:
                raise ValidationError(f"lambda must lie in [0, 1], got {lam}", line)
            consumers[cid] = Consumer(cid, household, p7, lam)
        unknown = {r.consumer_id for r in schedules} - set(consumers)
        if unknown:
            raise ValidationError(f"consumers missing from {cons_path.name}: {sorted(unknown)}")

    constraints = []
    if constr_path.exists():
        for line, row in _read_csv(constr_path, ["consumer_id", "kind", "appliance"]):
            kind = row["kind"].lower().replace("-", "_")
            day = _opt_int(row.get("day", ""), "day", constr_path, line)
            try:
                if kind == "no_overlap":
                    c = NoOverlap(row["appliance"], row.get("other_appliance", ""))
                elif kind == "forbidden_window":
                    c = ForbiddenWindow(
                        row["appliance"],
                        _int(row.get("start_minute", ""), "start_minute", constr_path, line),
                        _int(row.get("end_minute", ""), "end_minute", constr_path, line))
                else:
                    raise ParseError(f"unknown constraint kind {row['kind']!r}", constr_path, line)
            except ValueError as exc:
                raise ValidationError(f"{constr_path.name}: {exc}", line) from None
            constraints.append(ConstraintRow(row["consumer_id"], day, c))

    return Dataset(tuple(schedules), consumers, tuple(constraints))


def resolve(ds: Dataset, lambda_override: float | None = None,
            refs: Sequence[ReferenceHousehold] | None = None,
            ratings: ApplianceRatings | None = None) -> Dataset:
    """Attach each consumer's cooperation weight and per-appliance draws."""
    refs = load_reference_households() if refs is None else refs
    ratings = load_ratings() if ratings is None else ratings
    lambdas, draws = {}, {}
    for cid in ds.consumer_ids():
        consumer = ds.consumers.get(cid)
        if lambda_override is not None:
            lambdas[cid] = float(lambda_override)
        elif consumer is not None and consumer.resolved_lambda() is not None:
            lambdas[cid] = consumer.resolved_lambda()
        kinds = sorted({r.schedule.appliance for r in ds.schedules if r.consumer_id == cid},
                       key=lambda a: a.value)
        if consumer is None or consumer.household is None:
            raise MissingProfileData(f"consumer {cid!r} has no household information")
        match = match_household(consumer.household, refs)
        try:
            draws[cid] = {a: appliance_draw(match, a, ratings) for a in kinds}
        except UnknownAppliance as exc:
            raise MissingProfileData(f"consumer {cid!r}: {exc}") from None
    return replace(ds, lambdas=lambdas, draws=draws)


def load_dataset(path: str | Path, lambda_override: float | None = None,
                 refs: Sequence[ReferenceHousehold] | None = None,
                 ratings: ApplianceRatings | None = None) -> Dataset:
    return resolve(read_dataset(path), lambda_override, refs, ratings)


# --------------------------------------------------------------------------- saving


def _write_csv(path: Path, fields: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        w.writerows(rows)


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "schedules.csv", SCHEDULE_FIELDS, (
        (r.consumer_id, r.day, r.schedule.appliance.value, r.schedule.start,
         r.schedule.duration, r.schedule.flexibility) for r in ds.schedules))
    if ds.consumers:
        def cons_row(c: Consumer):
            h = c.household
            return (c.id, "" if c.p7 is None else c.p7, "" if c.lam is None else repr(c.lam),
                    h.occupancy if h else "", h.size_bedrooms if h else "",
                    h.house_type.value if h else "", (h.year_built or "") if h else "")
        _write_csv(out / "consumers.csv", CONSUMER_FIELDS,
                   (cons_row(ds.consumers[k]) for k in sorted(ds.consumers, key=_natural_key)))
    if ds.constraints:
        def constr_row(r: ConstraintRow):
            c = r.constraint
            day = "" if r.day is None else r.day
            if isinstance(c, NoOverlap):
                return (r.consumer_id, day, "no_overlap", c.a.value, c.b.value, "", "")
            return (r.consumer_id, day, "forbidden_window", c.appliance.value, "", c.start, c.end)
        _write_csv(out / "constraints.csv", CONSTRAINT_FIELDS, map(constr_row, ds.constraints))
    return out


def summarize(ds: Dataset) -> dict:
    """Schedule and plan counts per appliance (plans = 2f+1 per schedule)."""
    per = {a: {"schedules": 0, "plans": 0} for a in Appliance}
    for r in ds.schedules:
        per[r.schedule.appliance]["schedules"] += 1
        per[r.schedule.appliance]["plans"] += 2 * r.schedule.flexibility + 1
    total_plans = sum(v["plans"] for v in per.values())
    for v in per.values():
        v["plan_share"] = v["plans"] / total_plans if total_plans else 0.0
    return {
        "consumers": len(ds.consumer_ids()),
        "days": ds.days(),
        "schedules": len(ds.schedules),
        "appliances": {a.value: v for a, v in per.items()},
    }


# --------------------------------------------------------------------------- synthesis

#: Reference schedule counts per appliance, over 203 consumer-days.
REFERENCE_SCHEDULE_COUNTS = {
    Appliance.COMPUTER: 62, Appliance.DISH_WASHER: 40, Appliance.HOB: 44, Appliance.KETTLE: 80,
    Appliance.OVEN: 97, Appliance.TUMBLE_DRYER: 15, Appliance.WASHING_MACHINE: 82,
}
REFERENCE_CONSUMER_DAYS = 203

#: Mean minutes per use.
MEAN_DURATION = {
    Appliance.COMPUTER: 300, Appliance.WASHING_MACHINE: 101, Appliance.TUMBLE_DRYER: 78,
    Appliance.OVEN: 52, Appliance.DISH_WASHER: 46, Appliance.HOB: 37, Appliance.KETTLE: 16,
}

#: Median flexibility/duration ratio in the morning, mid-day and evening periods.
RELATIVE_FLEXIBILITY = {
    Appliance.COMPUTER: (0.125, 0.2, 0.175),
    Appliance.DISH_WASHER: (0.46, 1.64, 1.0),
    Appliance.HOB: (4.0, 1.66, 1.0),
    Appliance.KETTLE: (1.61, 0.95, 1.81),
    Appliance.OVEN: (2.14, 0.85, 1.0),
    Appliance.TUMBLE_DRYER: (0.66, 0.7, 1.0),
    Appliance.WASHING_MACHINE: (0.25, 0.62, 0.68),
}

#: Share of schedules starting in the morning, mid-day and evening periods.
PERIOD_SHARE = {
    Appliance.COMPUTER: (16, 26, 20),
    Appliance.DISH_WASHER: (2, 3, 35),
    Appliance.HOB: (2, 18, 24),
    Appliance.KETTLE: (37, 18, 25),
    Appliance.OVEN: (27, 19, 51),
    Appliance.TUMBLE_DRYER: (2, 10, 3),
    Appliance.WASHING_MACHINE: (12, 21, 49),
}

# (lower bound, upper bound, centre, spread) in minutes for each period.
PERIODS = ((0, 540, 450, 60), (540, 1020, 780, 110), (1020, 1440, 1140, 70))

SURVEY_P7 = (0.098, 0.216, 0.275, 0.353, 0.058)
OCCUPANCY = {1: 26.09, 2: 28.26, 3: 30.43, 4: 10.87, 6: 4.35}
BEDROOMS = {1: 28.26, 2: 32.61, 3: 30.43, 4: 4.35, 5: 2.17, 6: 2.17}
HOUSE_TYPES = {HouseType.APARTMENT: 0.63, HouseType.DETACHED: 0.10, HouseType.SEMI_DETACHED: 0.12,
               HouseType.MID_TERRACE: 0.08, HouseType.OTHER: 0.07}
YEAR_BUILT = {"Pre 1900s": 8.70, "1920-1929": 6.52, "1930-1939": 4.35, "1950-1959": 2.17,
              "1960-1969": 17.39, "1970-1979": 6.52, "1980-1989": 15.22, "1990-1999": 10.87,
              "2000-2009": 15.22, "2010+": 13.04}


def default_mix() -> dict[Appliance, float]:
    """Probability that a consumer uses each appliance on a given day.

    Synthetic days are redrawn until non-empty, which inflates every rate by
    1 / P(non-empty); the raw rates are scaled down so that the conditional
    rates match the reference counts.
    """
    target = {a: n / REFERENCE_CONSUMER_DAYS for a, n in REFERENCE_SCHEDULE_COUNTS.items()}
    mix = dict(target)
    for _ in range(100):
        nonempty = 1.0 - math.prod(1.0 - p for p in mix.values())
        mix = {a: t * nonempty for a, t in target.items()}
    return mix


@dataclass(frozen=True)
class SynthSpec:
    consumers: int = 51
    days: int = 4
    mix: Mapping[Appliance, float] = field(default_factory=default_mix)
    seed: int = 0
    duration_spread: float = 0.35
    flexibility_spread: float = 0.5
    max_flexibility: int = 180
    max_plan_space: int = 10**5

    def __post_init__(self):
        if self.consumers < 1:
            raise ValueError("need at least one consumer")
        if self.days < 1:
            raise ValueError("need at least one day")


def _pick(rng: np.random.Generator, table: Mapping):
    keys = list(table)
    w = np.array([table[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=w / w.sum()))]


def _synth_schedule(rng: np.random.Generator, a: Appliance, spec: SynthSpec) -> Schedule:
    period = _pick(rng, dict(enumerate(PERIOD_SHARE[a])))
    lo, hi, centre, spread = PERIODS[period]
    start = int(np.clip(round(rng.normal(centre, spread)), lo, hi - 1))
    duration = int(np.clip(round(MEAN_DURATION[a] * rng.lognormal(0.0, spec.duration_spread)), 1, 720))
    start = min(start, HORIZON - duration)
    flex = RELATIVE_FLEXIBILITY[a][period] * duration * rng.lognormal(0.0, spec.flexibility_spread)
    flex = int(min(round(flex), spec.max_flexibility, start, HORIZON - start - duration))
    return Schedule(a, start, duration, max(flex, 0))


def synth_dataset(spec: SynthSpec) -> Dataset:
    """Draw a realistic dataset: households, survey answers and daily schedules."""
    rng = substream(spec.seed, "synth")
    mix = {Appliance.parse(k): float(v) for k, v in spec.mix.items()}
    width = len(str(spec.consumers))
    consumers = {}
    for i in range(spec.consumers):
        cid = f"c{i + 1:0{width}d}"
        household = HouseholdInfo(_pick(rng, OCCUPANCY), _pick(rng, BEDROOMS),
                                  _pick(rng, HOUSE_TYPES), _pick(rng, YEAR_BUILT))
        p7 = int(rng.choice(5, p=np.array(SURVEY_P7) / sum(SURVEY_P7)))
        consumers[cid] = Consumer(cid, household, p7)

    rows = []
    for day in range(1, spec.days + 1):
        for cid in consumers:
            todays = []
            # Every consumer schedules something each day, as in the reference data.
            while not todays and any(p > 0 for p in mix.values()):
                todays = [_synth_schedule(rng, a, spec)
                          for a in sorted(mix, key=lambda a: a.value) if rng.random() < mix[a]]
            # Keep the combined plan space tractable by halving the widest flexibility.
            while todays and math.prod(2 * s.flexibility + 1 for s in todays) > spec.max_plan_space:
                j = max(range(len(todays)), key=lambda j: todays[j].flexibility)
                todays[j] = replace(todays[j], flexibility=todays[j].flexibility // 2)
            rows.extend(ScheduleRow(cid, day, s) for s in todays)
    return Dataset(tuple(rows), consumers)
