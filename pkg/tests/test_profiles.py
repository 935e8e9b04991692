import pytest

from flexgrid.domain import Appliance, HouseholdInfo
from flexgrid.profiles import (
    WEIGHTS, ApplianceRatings, UnknownAppliance, appliance_draw, load_ratings,
    load_reference_households, match_household, parse_year, score,
)


@pytest.fixture(scope="module")
def refs():
    return load_reference_households()


@pytest.fixture(scope="module")
def ratings():
    return load_ratings()


@pytest.mark.parametrize("label, year", [
    ("1975-1980", 1977.5), ("Pre 1900s", 1890.0), ("Post 2002", 2007.0), ("2010+", 2015.0),
    ("Mid 60s", 1965.0), ("1960s", 1965.0), ("1966", 1966.0), (1988, 1988.0),
    ("-", None), ("", None), (None, None),
])
def test_parse_year(label, year):
    assert parse_year(label) == year


def test_parse_year_rejects_garbage():
    with pytest.raises(ValueError):
        parse_year("sometime")


def test_weights_are_convex():
    assert sum(WEIGHTS.values()) == pytest.approx(1.0)
    assert list(WEIGHTS.values()) == sorted(WEIGHTS.values(), reverse=True)


def test_reference_table(refs):
    assert [h.id for h in refs] == list(range(1, 21))
    h2 = refs[1]
    assert h2.year_built is None and h2.appliance_energy[Appliance.KETTLE] == 2257
    assert Appliance.OVEN not in h2.appliance_energy


def test_exact_household_matches_perfectly(refs):
    m = match_household(HouseholdInfo(2, 3, "detached", "1966"), refs)
    assert m.best.id == 8 and m.scores()[0] == pytest.approx(1.0)
    # House 17: same occupancy, size and type; build year 1969.5 vs 1966.
    assert m.ids()[1] == 17
    assert m.scores()[1] == pytest.approx(0.533 + 0.267 + 0.133 + 0.067 * (1 - 3.5 / 150))


def test_unknown_year_contributes_nothing(refs):
    h = HouseholdInfo(4, 4, "semi_detached", None)
    m = match_household(h, refs)
    assert m.best.id == 2 and m.scores()[0] == pytest.approx(0.933)
    # House 18: bedrooms 3 vs 4 over the table's 2..5 range.
    assert m.ids()[1] == 18
    assert m.scores()[1] == pytest.approx(0.533 + 0.267 * (2 / 3) + 0.133)
    assert score(h, refs[1], refs) == pytest.approx(0.933)


def test_draws_follow_ranking_and_fallbacks(refs, ratings):
    m = match_household(HouseholdInfo(4, 4, "semi_detached", None), refs)
    assert appliance_draw(m, "kettle", ratings) == 2257.0
    assert appliance_draw(m, Appliance.OVEN, ratings) == 3000.0
    assert appliance_draw(m, Appliance.HOB, ratings) == 1000.0
    # Houses 2 and 18 list no computer; house 5 is next in line.
    assert m.ids()[2] == 5 and appliance_draw(m, "computer", ratings) == 66.0


def test_ties_go_to_lower_id(refs):
    m = match_household(HouseholdInfo(2, 3, "detached", None), refs)
    top = [i for i, s in zip(m.ids(), m.scores()) if s == m.scores()[0]]
    assert top == sorted(top) and m.best.id == top[0]


def test_watts_conversion_and_missing_fallback(refs):
    r = ApplianceRatings({}, {Appliance.KETTLE: 500.0})
    assert r.watts_from_kwh(Appliance.KETTLE, 250.0) == 500.0
    m = match_household(HouseholdInfo(2, 3, "detached", "1966"), refs)
    with pytest.raises(UnknownAppliance):
        appliance_draw(m, "oven", r)


def test_custom_reference_file(tmp_path):
    p = tmp_path / "refs.csv"
    p.write_text("# comment\nhouse,occupancy,year_built,house_type,bedrooms,kettle\n"
                 "1,3,1990,detached,2,1500\n")
    (h,) = load_reference_households(p)
    assert h.occupancy == 3 and h.appliance_energy == {Appliance.KETTLE: 1500.0}
