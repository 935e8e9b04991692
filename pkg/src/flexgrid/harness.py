"""Experiment runner: scenario transforms, repeated executions, aggregation and reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .dataset import Dataset, DatasetError, load_dataset, read_dataset, resolve
from .domain import HORIZON, AgentPlanSet, Appliance, minute_label, substream
from .epos import RunResult, build_topology, run
from .metrics import KETTLE_PEAK_WINDOWS, PEAK_WINDOW, peak_shift
from .plans import DEFAULT_PLAN_CAP, GeneratedPlanSpace, PlanSpace, combine_plans, \
    filter_constraints, generate_plans
from .sampling import Mechanism, SamplingMechanism, sample_indices

log = logging.getLogger(__name__)

DEFAULT_KETTLE_SAVINGS = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    """One cell of an experiment: dataset, sampling, cooperation weights and scenario.

    ``lam=None`` uses each consumer's own weight. Scenario fields:
    ``excluded`` appliances get zero flexibility, ``kettle_savings`` scales
    kettle energy in the kettle peak windows, ``adoption_cut`` is the percent
    of participating consumers switched to lambda 1.
    """

    dataset: str | Path | Dataset
    sampling: Mechanism = Mechanism.TOP_RANKED
    lam: float | None = None
    iterations: int = 50
    executions: int = 10
    plans_per_agent: int = 10
    seed: int = 0
    poisson_rate: float = 2.0
    normalization: str = "minmax"
    approval: bool = True
    audit: bool = False
    excluded: frozenset = frozenset()
    kettle_savings: float | None = None
    adoption_cut: float = 0.0
    plan_cap: int = DEFAULT_PLAN_CAP
    scenario: str = "baseline"

    def __post_init__(self):
        object.__setattr__(self, "sampling", Mechanism.parse(self.sampling))
        object.__setattr__(self, "excluded", frozenset(Appliance.parse(a) for a in self.excluded))
        if self.iterations < 1 or self.executions < 1 or self.plans_per_agent < 1:
            raise ValueError("iterations, executions and plans_per_agent must all be at least 1")
        if not 0 <= self.adoption_cut <= 100:
            raise ValueError("adoption percent must lie in [0, 100]")
        if self.lam is not None and not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if self.kettle_savings is not None and not 0 <= self.kettle_savings <= 1:
            raise ValueError("kettle savings fraction must lie in [0, 1]")

    @property
    def mechanism(self) -> SamplingMechanism:
        return SamplingMechanism(self.sampling, self.plans_per_agent, self.poisson_rate)

    @property
    def lambda_label(self) -> str:
        return "consumer" if self.lam is None else f"{self.lam:g}"

    def echo(self) -> dict:
        d = asdict(self)
        d["dataset"] = self.dataset if not isinstance(self.dataset, Dataset) else "<in-memory>"
        d["dataset"] = str(d["dataset"])
        d["sampling"] = self.sampling.value
        d["excluded"] = sorted(a.value for a in self.excluded)
        return d


# --------------------------------------------------------------------------- scenarios


def exclude_appliance(cfg: ExperimentConfig, a: Appliance | str) -> ExperimentConfig:
    a = Appliance.parse(a)
    excluded = cfg.excluded | {a}
    label = "upper-bound" if excluded == frozenset(Appliance) else f"exclude-{'+'.join(sorted(x.value for x in excluded))}"
    return replace(cfg, excluded=excluded, scenario=label)


def upper_bound(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, excluded=frozenset(Appliance), scenario="upper-bound")


def reduced_adoption(cfg: ExperimentConfig, n_percent: float) -> ExperimentConfig:
    if n_percent == 0:
        return cfg
    return replace(cfg, adoption_cut=float(n_percent), scenario=f"adoption-{n_percent:g}")


def kettle_scenarios(cfg: ExperimentConfig, savings_fraction: float | None = None
                     ) -> tuple[ExperimentConfig, ExperimentConfig]:
    """(efficient kettle, flexible kettle) variants of ``cfg``."""
    savings = savings_fraction if savings_fraction is not None else (
        cfg.kettle_savings if cfg.kettle_savings is not None else DEFAULT_KETTLE_SAVINGS)
    efficient = replace(cfg, excluded=frozenset(Appliance), kettle_savings=savings,
                        scenario="kettle-efficient")
    flexible = replace(cfg, excluded=frozenset(Appliance) - {Appliance.KETTLE},
                       kettle_savings=None, scenario="kettle-flexible")
    return efficient, flexible


def apply_exclusions(ds: Dataset, excluded) -> Dataset:
    if not excluded:
        return ds

    def zero(row):
        s = row.schedule
        return replace(s, flexibility=0) if s.appliance in excluded else s
    return ds.map_schedules(zero)


def adoption_lambdas(lambdas: Mapping[str, float], n_percent: float) -> dict[str, float]:
    """Switch the top ``n_percent`` of participating consumers (highest lambda first) to 1."""
    out = dict(lambdas)
    if n_percent <= 0:
        return out
    participating = [c for c in lambdas if lambdas[c] != 1.0]
    participating.sort(key=lambda c: -lambdas[c])  # stable: ties keep consumer order
    cut = math.floor(n_percent * len(participating) / 100 + 0.5)
    for c in participating[:cut]:
        out[c] = 1.0
    return out


def kettle_window_factors(savings: float) -> np.ndarray:
    factors = np.ones(HORIZON)
    for lo, hi in KETTLE_PEAK_WINDOWS:
        factors[lo:hi] = 1.0 - savings
    return factors


def scale_space(space: GeneratedPlanSpace, factors: np.ndarray) -> GeneratedPlanSpace:
    return space.scaled(factors)


# --------------------------------------------------------------------------- running


@dataclass
class PreparedDay:
    day: int
    consumers: list[str]
    spaces: list[PlanSpace]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: dict[tuple[int, int], RunResult]
    agents: dict[tuple[int, int], list[str]]
    seeds: dict[str, object] = field(default_factory=dict)

    def _stack(self, metric: str) -> np.ndarray:
        return np.array([getattr(r.metrics, metric) for r in self.runs.values()])

    def mean(self, metric: str) -> np.ndarray:
        return self._stack(metric).mean(axis=0)

    def std(self, metric: str) -> np.ndarray:
        return self._stack(metric).std(axis=0)

    def final(self, metric: str) -> tuple[float, float]:
        last = self._stack(metric)[:, -1]
        return float(last.mean()), float(last.std())

    def demand(self) -> np.ndarray:
        """Mean final aggregate demand over executions and days."""
        return np.mean([r.metrics.aggregate_demand for r in self.runs.values()], axis=0)

    def total_energy(self) -> float:
        return float(np.mean([r.metrics.aggregate_demand.sum() for r in self.runs.values()]))


def prepare_dataset(cfg: ExperimentConfig) -> Dataset:
    if isinstance(cfg.dataset, Dataset):
        ds = cfg.dataset if cfg.dataset.draws else resolve(cfg.dataset)
    else:
        ds = load_dataset(cfg.dataset)
    ds = apply_exclusions(ds, cfg.excluded)
    lambdas = {c: cfg.lam for c in ds.consumer_ids()} if cfg.lam is not None else dict(ds.lambdas)
    missing = [c for c in ds.consumer_ids() if c not in lambdas]
    if missing:
        raise DatasetError(f"no cooperation weight for consumers {missing[:5]}; pass a fixed lambda")
    return ds.with_lambdas(adoption_lambdas(lambdas, cfg.adoption_cut))


def prepare_day(ds: Dataset, day: int, cfg: ExperimentConfig) -> PreparedDay:
    factors = kettle_window_factors(cfg.kettle_savings) if cfg.kettle_savings else None
    consumers, spaces = [], []
    for cid, schedules in ds.by_consumer_day(day).items():
        parts = [generate_plans(s, ds.draws[cid][s.appliance]) for s in schedules]
        if factors is not None:
            parts = [scale_space(p, factors) if p.schedule.appliance is Appliance.KETTLE else p
                     for p in parts]
        space = filter_constraints(combine_plans(parts, cap=cfg.plan_cap), ds.constraints_for(cid, day))
        if len(space) == 0:
            raise DatasetError(f"constraints remove every plan of consumer {cid!r} on day {day}")
        consumers.append(cid)
        spaces.append(space)
    return PreparedDay(day, consumers, spaces)


def build_agents(prepared: PreparedDay, ds: Dataset, cfg: ExperimentConfig, execution: int
                 ) -> list[AgentPlanSet]:
    mech = cfg.mechanism
    agents = []
    for i, (cid, space) in enumerate(zip(prepared.consumers, prepared.spaces)):
        rng = substream(cfg.seed, "sampling", execution, prepared.day, i)
        idx = sample_indices(len(space), mech, rng)
        agents.append(AgentPlanSet(cid, space.take(idx), ds.lambdas[cid]))
    return agents


def run_experiment(cfg: ExperimentConfig, prepared: Sequence[PreparedDay] | None = None
                   ) -> ExperimentResult:
    """Run every (execution, day) pair with fresh tree placement and sampling streams."""
    ds = prepare_dataset(cfg)
    if prepared is None:
        prepared = [prepare_day(ds, d, cfg) for d in ds.days()]
    runs, agent_ids = {}, {}
    for r in range(cfg.executions):
        for day in prepared:
            agents = build_agents(day, ds, cfg, r)
            topo = build_topology(day.consumers, substream(cfg.seed, "topology", r, day.day))
            runs[(r, day.day)] = run(agents, topo, cfg.iterations, normalization=cfg.normalization,
                                     approval=cfg.approval, audit=cfg.audit)
            agent_ids[(r, day.day)] = day.consumers
            log.info("%s %s lambda=%s exec %d day %d: variance %.6g", cfg.scenario,
                     cfg.sampling.value, cfg.lambda_label, r, day.day,
                     runs[(r, day.day)].final_variance)
    seeds = {"seed": cfg.seed, "streams": ["sampling(execution, day, agent)", "topology(execution, day)"]}
    return ExperimentResult(cfg, runs, agent_ids, seeds)


# --------------------------------------------------------------------------- reports


def _writer(path: Path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _fmt(x) -> str:
    return repr(float(x))


def write_run_metrics(result: RunResult, path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["iteration", "global_variance", "avg_discomfort", "unfairness"])
        for row in result.metrics.rows():
            w.writerow([row["iteration"], _fmt(row["global_variance"]),
                        _fmt(row["avg_discomfort"]), _fmt(row["unfairness"])])


def write_demand(demand: np.ndarray, path: Path, extra: Mapping[str, np.ndarray] | None = None) -> None:
    extra = dict(extra or {})
    fh, w = _writer(path)
    with fh:
        w.writerow(["minute", "time", "demand", *extra])
        for m in range(HORIZON):
            w.writerow([m, minute_label(m), _fmt(demand[m]), *(_fmt(v[m]) for v in extra.values())])


def write_experiment(res: ExperimentResult, out: str | Path) -> Path:
    """Per-run metric CSVs, aggregated metrics, mean demand, selections and a manifest."""
    out = Path(out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    for (r, day), result in sorted(res.runs.items()):
        write_run_metrics(result, out / "runs" / f"exec{r:02d}_day{day}.csv")

    metrics = ("global_variance", "avg_discomfort", "unfairness")
    fh, w = _writer(out / "metrics.csv")
    with fh:
        w.writerow(["iteration"] + [f"{m}_{s}" for m in metrics for s in ("mean", "std")])
        means = {m: res.mean(m) for m in metrics}
        stds = {m: res.std(m) for m in metrics}
        for t in range(res.config.iterations + 1):
            w.writerow([t] + [_fmt(v[t]) for m in metrics for v in (means[m], stds[m])])

    write_demand(res.demand(), out / "aggregate_demand.csv")

    fh, w = _writer(out / "selections.csv")
    with fh:
        w.writerow(["execution", "day", "consumer_id", "selected_index", "discomfort"])
        for (r, day), result in sorted(res.runs.items()):
            for cid, idx, disc in zip(res.agents[(r, day)], result.selections,
                                      result.final_discomforts):
                w.writerow([r, day, cid, idx, _fmt(disc)])

    manifest = {"flexgrid_version": __version__, "config": res.config.echo(), "seeds": res.seeds,
                "runs": [f"exec{r:02d}_day{d}" for r, d in sorted(res.runs)]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return out


# --------------------------------------------------------------------------- sweeps


def scenario_from_spec(base: ExperimentConfig, spec) -> ExperimentConfig:
    """Turn a scenario entry from a sweep file into a configured cell."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = str(spec.get("kind", "baseline")).lower().replace("-", "_")
    if kind in ("baseline", "lower_bound"):
        return replace(base, scenario="baseline")
    if kind == "upper_bound":
        return upper_bound(base)
    if kind == "exclude":
        cfg = base
        names = spec.get("appliances") or [spec["appliance"]]
        for a in names:
            cfg = exclude_appliance(cfg, a)
        return cfg
    if kind == "kettle_efficiency":
        return kettle_scenarios(base, spec.get("savings_fraction"))[0]
    if kind == "kettle_flexible_only":
        return kettle_scenarios(base)[1]
    if kind == "reduced_adoption":
        return reduced_adoption(base, float(spec["percent"]))
    raise ValueError(f"unknown scenario kind {spec.get('kind')!r}")


@dataclass
class SweepCell:
    config: ExperimentConfig
    result: ExperimentResult
    directory: Path


def run_sweep(sweep: Mapping, out: str | Path, dataset: Dataset | None = None) -> list[SweepCell]:
    """Run every scenario x sampling x lambda cell of a sweep description and write reports.

    ``summary.csv`` gets one row per cell; peak-time shift is reported against
    the lambda=1 cell of the same scenario and mechanism when the sweep has one.
    """
    out = Path(out)
    data = dataset if dataset is not None else read_dataset(sweep["dataset"])
    data = resolve(data) if not data.draws else data
    sampling = sweep.get("sampling", ["top_ranked"])
    sampling = [sampling] if isinstance(sampling, str) else sampling
    lambdas = sweep.get("lambda", ["consumer"])
    lambdas = [lambdas] if not isinstance(lambdas, list) else lambdas
    scenarios = sweep.get("scenarios", ["baseline"])
    base = ExperimentConfig(
        dataset=data,
        iterations=int(sweep.get("iterations", 50)),
        executions=int(sweep.get("executions", 10)),
        plans_per_agent=int(sweep.get("plans_per_agent", 10)),
        seed=int(sweep.get("seed", 0)),
        poisson_rate=float(sweep.get("poisson_rate", 2.0)),
        normalization=str(sweep.get("normalization", "minmax")),
        approval=bool(sweep.get("approval", True)),
    )

    cells: list[SweepCell] = []
    for scen in scenarios:
        scen_cfg = scenario_from_spec(base, scen)
        if "kettle_savings" in sweep and scen_cfg.kettle_savings is not None and not (
                isinstance(scen, dict) and "savings_fraction" in scen):
            scen_cfg = replace(scen_cfg, kettle_savings=float(sweep["kettle_savings"]))
        ds = prepare_dataset(replace(scen_cfg, lam=0.0))
        prepared = [prepare_day(ds, d, scen_cfg) for d in ds.days()]
        for mech in sampling:
            for lam in lambdas:
                cfg = replace(scen_cfg, sampling=Mechanism.parse(mech),
                              lam=None if lam == "consumer" else float(lam))
                res = run_experiment(cfg, prepared)
                where = out / cfg.scenario / cfg.sampling.cli_name / f"lambda-{cfg.lambda_label}"
                write_experiment(res, where)
                cells.append(SweepCell(cfg, res, where))
    write_summary(cells, out / "summary.csv")
    return cells


def write_summary(cells: Sequence[SweepCell], path: Path) -> None:
    baselines = {(c.config.scenario, c.config.sampling): c.result.demand()
                 for c in cells if c.config.lam == 1.0}
    fh, w = _writer(path)
    with fh:
        w.writerow(["scenario", "sampling", "lambda", "runs", "variance_mean", "variance_std",
                    "avg_discomfort_mean", "avg_discomfort_std", "unfairness_mean", "unfairness_std",
                    "total_energy", "peak_shift", "directory"])
        for c in cells:
            cfg, res = c.config, c.result
            base = baselines.get((cfg.scenario, cfg.sampling))
            try:
                shift = "" if base is None else _fmt(peak_shift(base, res.demand(), PEAK_WINDOW))
            except ZeroDivisionError:
                shift = ""
            w.writerow([cfg.scenario, cfg.sampling.cli_name, cfg.lambda_label, len(res.runs),
                        *(_fmt(v) for m in ("global_variance", "avg_discomfort", "unfairness")
                          for v in res.final(m)),
                        _fmt(res.total_energy()), shift, c.directory.relative_to(path.parent).as_posix()])
