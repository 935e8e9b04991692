"""Match consumer households to reference households and derive appliance draws.

The score is a convex combination of four per-feature similarities, each in
[0, 1], so a perfect match scores exactly 1.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .domain import Appliance, FlexgridError, HouseholdInfo, HouseType

WEIGHTS = {"occupancy": 0.533, "size": 0.267, "type": 0.133, "year": 0.067}
YEAR_SPAN = 150.0


class UnknownAppliance(FlexgridError, KeyError):
    pass


def parse_year(label) -> float | None:
    """Representative year of a build-year label.

    Ranges map to their midpoint, ``Pre X`` to X-10, ``Post X``/``X+`` to X+5,
    decades (``1960s``, ``Mid 60s``) to the decade's middle. Blank or ``-``
    means unknown.
    """
    if label is None:
        return None
    if isinstance(label, (int, float)):
        return float(label)
    text = str(label).strip().lower()
    if text in ("", "-", "unknown", "none"):
        return None
    if m := re.fullmatch(r"(\d{4})\s*-\s*(\d{4})", text):
        return (int(m[1]) + int(m[2])) / 2
    if m := re.fullmatch(r"pre\s*(\d{4})s?", text):
        return int(m[1]) - 10.0
    if m := re.fullmatch(r"(?:post\s*(\d{4})|(\d{4})\s*\+)", text):
        return int(m[1] or m[2]) + 5.0
    if m := re.fullmatch(r"(?:mid\s*)?(\d{2}|\d{4})s", text):
        decade = int(m[1])
        decade = decade + 1900 if decade < 100 else decade
        return decade + 5.0
    if m := re.fullmatch(r"\d{4}", text):
        return float(text)
    raise ValueError(f"cannot parse build year {label!r}")


@dataclass(frozen=True)
class ReferenceHousehold:
    id: int
    occupancy: int
    year_built: str | None
    house_type: HouseType
    size_bedrooms: int
    appliance_energy: Mapping[Appliance, float] = field(default_factory=dict)

    def __post_init__(self):
        for a, kwh in self.appliance_energy.items():
            if not kwh > 0:
                raise ValueError(f"house {self.id}: {a.value} energy must be positive")


@dataclass(frozen=True)
class MatchResult:
    ranked: tuple[tuple[ReferenceHousehold, float], ...]

    def __post_init__(self):
        if not self.ranked:
            raise ValueError("a match needs at least one household")

    @property
    def best(self) -> ReferenceHousehold:
        return self.ranked[0][0]

    def ids(self) -> list[int]:
        return [h.id for h, _ in self.ranked]

    def scores(self) -> list[float]:
        return [s for _, s in self.ranked]


def _closeness(a: float, b: float, span: float) -> float:
    if span <= 0:
        return 1.0 if a == b else 0.0
    return min(1.0, max(0.0, 1.0 - abs(a - b) / span))


def score(h: HouseholdInfo, ref: ReferenceHousehold, refs: Sequence[ReferenceHousehold]) -> float:
    occ = [r.occupancy for r in refs]
    beds = [r.size_bedrooms for r in refs]
    s_occ = _closeness(h.occupancy, ref.occupancy, max(occ) - min(occ))
    s_size = _closeness(h.size_bedrooms, ref.size_bedrooms, max(beds) - min(beds))
    s_type = 1.0 if h.house_type == ref.house_type else 0.0
    y_h, y_r = parse_year(h.year_built), parse_year(ref.year_built)
    s_year = 0.0 if y_h is None or y_r is None else _closeness(y_h, y_r, YEAR_SPAN)
    return (WEIGHTS["occupancy"] * s_occ + WEIGHTS["size"] * s_size
            + WEIGHTS["type"] * s_type + WEIGHTS["year"] * s_year)


def match_household(h: HouseholdInfo, refs: Sequence[ReferenceHousehold]) -> MatchResult:
    """Rank reference households by descending score; ties go to the lower id."""
    if not refs:
        raise ValueError("no reference households to match against")
    scored = [(r, score(h, r, refs)) for r in refs]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return MatchResult(tuple(scored))


@dataclass(frozen=True)
class ApplianceRatings:
    fallback_watts: Mapping[Appliance, float]
    annual_hours: Mapping[Appliance, float]

    def watts_from_kwh(self, appliance: Appliance, kwh: float) -> float:
        hours = self.annual_hours.get(appliance, 1000.0)
        return kwh * 1000.0 / hours


def appliance_draw(match: MatchResult, appliance: Appliance | str,
                   ratings: ApplianceRatings) -> float:
    """Per-minute draw (watt-minutes per slot) from the first ranked house listing the appliance."""
    appliance = Appliance.parse(appliance)
    for house, _ in match.ranked:
        kwh = house.appliance_energy.get(appliance)
        if kwh:
            return ratings.watts_from_kwh(appliance, kwh)
    if appliance in ratings.fallback_watts:
        return float(ratings.fallback_watts[appliance])
    raise UnknownAppliance(f"no reference data or fallback rating for {appliance.value}")


def _read_rows(path: Path | None, default: str) -> list[dict]:
    if path is None:
        text = resources.files("flexgrid.data").joinpath(default).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


def load_reference_households(path: Path | str | None = None) -> list[ReferenceHousehold]:
    rows = _read_rows(path, "reference_households.csv")
    houses = []
    for row in rows:
        energy = {}
        for a in Appliance:
            cell = (row.get(a.value) or "").strip()
            if cell and cell != "-":
                energy[a] = float(cell)
        houses.append(ReferenceHousehold(
            id=int(row["house"]),
            occupancy=int(row["occupancy"]),
            year_built=(row.get("year_built") or "").strip() or None,
            house_type=HouseType.parse(row["house_type"]),
            size_bedrooms=int(row["bedrooms"]),
            appliance_energy=energy,
        ))
    return houses


def load_ratings(path: Path | str | None = None) -> ApplianceRatings:
    rows = _read_rows(path, "appliance_ratings.csv")
    fallback, hours = {}, {}
    for row in rows:
        a = Appliance.parse(row["appliance"])
        if (row.get("fallback_watts") or "").strip():
            fallback[a] = float(row["fallback_watts"])
        if (row.get("annual_hours") or "").strip():
            hours[a] = float(row["annual_hours"])
    return ApplianceRatings(fallback, hours)
