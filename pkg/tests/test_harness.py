import json
from dataclasses import replace

import numpy as np
import pytest

from flexgrid.dataset import ConstraintRow, DatasetError, save_dataset
from flexgrid.domain import Appliance, ForbiddenWindow
from flexgrid.harness import (
    ExperimentConfig, adoption_lambdas, apply_exclusions, exclude_appliance,
    kettle_scenarios, kettle_window_factors, prepare_dataset, prepare_day, reduced_adoption,
    run_experiment, run_sweep, scenario_from_spec, upper_bound, write_experiment,
)
from flexgrid.sampling import Mechanism


def test_adoption_cut_takes_highest_lambdas_first():
    lambdas = {"a": 0.5, "b": 0.75, "c": 1.0, "d": 0.75, "e": 0.0}
    # Four participants; 30% of 4 = 1.2 -> 1 consumer; 50% -> 2.
    assert adoption_lambdas(lambdas, 30) == {**lambdas, "b": 1.0}
    assert adoption_lambdas(lambdas, 50) == {**lambdas, "b": 1.0, "d": 1.0}
    assert adoption_lambdas(lambdas, 0) == lambdas
    assert adoption_lambdas(lambdas, 100) == dict.fromkeys(lambdas, 1.0)


def test_kettle_window_factors():
    f = kettle_window_factors(0.2)
    assert f[389] == 1.0 and f[390] == 0.8 and f[509] == 0.8 and f[510] == 1.0
    assert f[1170] == 0.8 and f[1289] == 0.8 and f[1290] == 1.0


def test_scenario_transforms(small_dataset):
    cfg = ExperimentConfig(small_dataset)
    assert exclude_appliance(cfg, "oven").excluded == {Appliance.OVEN}
    assert exclude_appliance(cfg, "oven").scenario == "exclude-oven"
    assert upper_bound(cfg).excluded == frozenset(Appliance)
    assert reduced_adoption(cfg, 0) is cfg
    eff, flex = kettle_scenarios(cfg, 0.3)
    assert eff.kettle_savings == 0.3 and eff.excluded == frozenset(Appliance)
    assert flex.excluded == frozenset(Appliance) - {Appliance.KETTLE}
    ds = apply_exclusions(small_dataset, {Appliance.OVEN})
    assert all(r.schedule.flexibility == 0 for r in ds.schedules if r.schedule.appliance is Appliance.OVEN)
    assert scenario_from_spec(cfg, {"kind": "exclude", "appliances": ["oven", "hob"]}).scenario == \
        "exclude-hob+oven"
    assert scenario_from_spec(cfg, {"kind": "reduced-adoption", "percent": 30}).adoption_cut == 30.0
    with pytest.raises(ValueError):
        scenario_from_spec(cfg, "mystery")


def test_config_validation(small_dataset):
    with pytest.raises(ValueError):
        ExperimentConfig(small_dataset, lam=2.0)
    with pytest.raises(ValueError):
        ExperimentConfig(small_dataset, iterations=0)
    assert ExperimentConfig(small_dataset, sampling="bottom-poisson").sampling is Mechanism.BOTTOM_POISSON


def test_upper_bound_keeps_preferred_times(small_dataset):
    res = run_experiment(upper_bound(ExperimentConfig(small_dataset, lam=0.0, executions=2,
                                                      iterations=5)))
    assert res.final("avg_discomfort") == (0.0, 0.0)
    v = res.mean("global_variance")
    assert np.all(v == v[0])


def test_run_is_deterministic_and_writes_reports(small_dataset, tmp_path):
    cfg = ExperimentConfig(small_dataset, sampling="uniform", lam=0.5, executions=2, iterations=8, seed=3)
    a = write_experiment(run_experiment(cfg), tmp_path / "a")
    b = write_experiment(run_experiment(cfg), tmp_path / "b")
    files = sorted(p.relative_to(a).as_posix() for p in a.rglob("*") if p.is_file())
    assert files == ["aggregate_demand.csv", "manifest.json", "metrics.csv",
                     "runs/exec00_day1.csv", "runs/exec00_day2.csv", "runs/exec01_day1.csv",
                     "runs/exec01_day2.csv", "selections.csv"]
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 3 and manifest["config"]["sampling"] == "uniform"
    lines = (a / "metrics.csv").read_text().splitlines()
    assert len(lines) == 1 + 9


def test_consumer_lambdas_required(small_dataset):
    ds = small_dataset.with_lambdas({})
    with pytest.raises(DatasetError):
        prepare_dataset(ExperimentConfig(ds))


def test_constraints_removing_everything_is_an_error(small_dataset):
    cid = small_dataset.consumer_ids(1)[0]
    kinds = {s.appliance for s in small_dataset.schedules_for(cid, 1)}
    blocked = tuple(ConstraintRow(cid, 1, ForbiddenWindow(a, 0, 1440)) for a in kinds)
    ds = replace(small_dataset, constraints=blocked)
    cfg = ExperimentConfig(ds, lam=0.0)
    with pytest.raises(DatasetError):
        prepare_day(prepare_dataset(cfg), 1, cfg)


def test_kettle_savings_reduce_window_energy(small_dataset):
    eff, _ = kettle_scenarios(ExperimentConfig(small_dataset, lam=1.0, executions=1, iterations=1), 0.5)
    base = run_experiment(upper_bound(ExperimentConfig(small_dataset, lam=1.0, executions=1, iterations=1)))
    saved = run_experiment(eff)
    f = kettle_window_factors(0.5)
    assert saved.total_energy() <= base.total_energy()
    kettle_in_window = base.demand() - saved.demand()
    assert np.all(kettle_in_window[f == 1.0] == 0)


def test_sweep_writes_summary(small_dataset, tmp_path):
    save_dataset(small_dataset, tmp_path / "ds")
    sweep = {"dataset": str(tmp_path / "ds"), "sampling": ["top-ranked", "uniform"],
             "lambda": [0, 1], "scenarios": ["baseline", {"kind": "exclude", "appliance": "oven"}],
             "executions": 1, "iterations": 4}
    cells = run_sweep(sweep, tmp_path / "out")
    assert len(cells) == 8
    rows = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert len(rows) == 9 and rows[0].startswith("scenario,sampling,lambda")
    assert (tmp_path / "out" / "exclude-oven" / "uniform" / "lambda-1" / "metrics.csv").exists()
