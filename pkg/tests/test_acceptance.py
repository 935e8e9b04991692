"""Release acceptance checks, one test per criterion.

Each test prints a ``[PASS]``/``[FAIL]`` line (also collected into the pytest
terminal summary). Run on its own with ``pytest tests/test_acceptance.py -s``.
"""

import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from flexgrid.dataset import SynthSpec, resolve, synth_dataset
from flexgrid.domain import HORIZON, AgentPlanSet, Plan, Schedule, minute_label
from flexgrid.epos import TreeTopology, build_topology, run
from flexgrid.harness import ExperimentConfig, prepare_dataset, prepare_day, run_experiment
from flexgrid.plans import combine_plans, generate_plans
from flexgrid.sampling import ALL_MECHANISMS, Mechanism, SamplingMechanism, sample_indices


def report(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def synthetic_days():
    """Ten 51-consumer single-day synthetic datasets with their plan spaces."""
    out = []
    for seed in range(10):
        ds = resolve(synth_dataset(SynthSpec(consumers=51, days=1, seed=seed)))
        cfg = ExperimentConfig(ds, lam=0.0)
        out.append((seed, ds, [prepare_day(prepare_dataset(cfg), 1, cfg)]))
    return out


def random_schedule(rng):
    duration = int(rng.integers(1, 301))
    start = int(rng.integers(0, HORIZON - duration + 1))
    flex = int(rng.integers(0, min(start, HORIZON - duration - start, 120) + 1))
    return Schedule("washing_machine", start, duration, flex)


def test_criterion_01_plan_count_law():
    rng = np.random.default_rng(2024)
    cases = [(random_schedule(rng), float(rng.integers(10, 3001))) for _ in range(10**4)]
    t0 = time.perf_counter()
    bad = 0
    for s, draw in cases:
        space = generate_plans(s, draw)
        if len(space) != 2 * s.flexibility + 1 or not np.all(space.totals() == draw * s.duration):
            bad += 1
    elapsed = time.perf_counter() - t0
    report(1, "plan-count law", bad == 0 and elapsed < 1.0,
           f"{len(cases)} schedules, {bad} violations, {elapsed:.3f} s (limit 1 s)")


def test_criterion_02_kettle_table():
    space = generate_plans(Schedule("kettle", 18 * 60, 10, 2), 1992.0)
    by_start = sorted(space, key=lambda p: p.placements[0].begin)
    starts = [minute_label(p.placements[0].begin) for p in by_start]
    distances = [abs(p.shift) for p in by_start]
    ok = starts == ["17:58", "17:59", "18:00", "18:01", "18:02"] and distances == [2, 1, 0, 1, 2]
    report(2, "kettle plan table", ok, f"starts {starts}, distances {distances}")


def test_criterion_03_combination_law():
    rng = np.random.default_rng(3)
    pairs = list(itertools.product(range(7), repeat=2))
    pairs += [tuple(int(x) for x in rng.integers(0, 7, size=2)) for _ in range(20)]
    bad = []
    for p, q in pairs:
        a = generate_plans(Schedule("oven", 600, 45, p), 3000.0)
        b = generate_plans(Schedule("hob", 1000, 20, q), 1000.0)
        if len(combine_plans([a, b])) != 4 * p * q + 2 * p + 2 * q + 1:
            bad.append((p, q))
    report(3, "combination law", not bad, f"{len(pairs)} (p, q) pairs, mismatches {bad}")


def oracle_instance(rng):
    """Four agents, three time-shifted variants of one appliance run each, contended evening."""
    agents = []
    for a in range(4):
        duration, draw = int(rng.integers(5, 40)), float(rng.integers(1, 5) * 1000)
        start, delta = int(rng.integers(600, 700)), int(rng.integers(5, 60))
        plans = []
        for shift, disc in ((0, 0.0), (-delta, 1.0), (delta, 1.0)):
            v = np.zeros(HORIZON)
            v[start + shift:start + shift + duration] = draw
            plans.append(Plan(v, disc))
        agents.append(AgentPlanSet(f"a{a}", plans, 0.0))
    return agents


def test_criterion_04_oracle_optimality():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    optimal = above_baseline = below_optimum = 0
    for i in range(200):
        agents = oracle_instance(rng)
        mats = [a.matrix() for a in agents]
        best = min(np.var(sum(m[c] for m, c in zip(mats, combo)))
                   for combo in itertools.product(range(3), repeat=4))
        baseline = np.var(sum(m[0] for m in mats))
        v = run(agents, build_topology(range(4), i), iterations=10, audit=True).final_variance
        tol = 1e-9 * max(1.0, best)
        below_optimum += v < best - tol
        above_baseline += v > baseline + tol
        optimal += abs(v - best) <= tol
    elapsed = time.perf_counter() - t0
    rate = optimal / 200
    ok = below_optimum == 0 and above_baseline == 0 and rate >= 0.6 and elapsed < 10
    report(4, "oracle optimality", ok,
           f"optimal on {rate:.1%} (need 60%), below optimum {below_optimum}, "
           f"above baseline {above_baseline}, {elapsed:.2f} s (limit 10 s)")


def test_criterion_05_lambda_monotonicity(synthetic_days):
    lams = (0.0, 0.5, 1.0)
    finals = {m: {lam: [] for lam in lams} for m in ALL_MECHANISMS}
    for seed, ds, prepared in synthetic_days:
        for m in ALL_MECHANISMS:
            for lam in lams:
                cfg = ExperimentConfig(ds, sampling=m, lam=lam, executions=1, iterations=50, seed=seed)
                finals[m][lam].append(run_experiment(cfg, prepared).final("global_variance")[0])
    parts, ok = [], True
    for m in ALL_MECHANISMS:
        v = [float(np.mean(finals[m][lam])) for lam in lams]
        good = v[0] <= v[1] <= v[2]
        ok &= good
        parts.append(f"{m.cli_name} {v[0]:.4g}<={v[1]:.4g}<={v[2]:.4g}{'' if good else ' (violated)'}")
    report(5, "lambda monotonicity", ok, "; ".join(parts))


def test_criterion_06_sampling_discomfort_order(synthetic_days):
    kinds = (Mechanism.TOP_RANKED, Mechanism.UNIFORM, Mechanism.BOTTOM_RANKED)
    sampled = {m: [] for m in kinds}
    chosen = {m: [] for m in kinds}
    for seed, ds, prepared in synthetic_days[:3]:
        day = prepared[0]
        for m in kinds:
            mech = SamplingMechanism(m, 10)
            for space in day.spaces:
                idx = sample_indices(len(space), mech, seed)
                sampled[m].append(float(np.mean(space.discomfort[idx])))
            cfg = ExperimentConfig(ds, sampling=m, lam=1.0, executions=1, iterations=5, seed=seed)
            chosen[m].append(run_experiment(cfg, prepared).final("avg_discomfort")[0])
    s = [float(np.mean(sampled[m])) for m in kinds]
    c = [float(np.mean(chosen[m])) for m in kinds]
    # Candidate sets are strictly ordered. At lambda=1 both top-ranked and
    # uniform contain the preferred plan, so their chosen discomfort ties at 0.
    ok = s[0] < s[1] < s[2] and c[0] <= c[1] < c[2]
    report(6, "sampling discomfort order", ok,
           f"candidate means top {s[0]:.4f} < uniform {s[1]:.4f} < bottom {s[2]:.4f}; "
           f"chosen at lambda=1 top {c[0]:.4f} <= uniform {c[1]:.4f} < bottom {c[2]:.4f}")


def test_criterion_07_local_non_regression(synthetic_days):
    runs = 0
    seed, ds, prepared = synthetic_days[0]
    for m in ALL_MECHANISMS:
        for lam in (0.0, 0.5, 1.0, None):
            for approval in (True, False):
                cfg = ExperimentConfig(ds, sampling=m, lam=lam, executions=2, iterations=20,
                                       seed=seed, approval=approval, audit=True)
                runs += len(run_experiment(cfg, prepared).runs)
    report(7, "local non-regression", True,
           f"{runs} audited runs (all mechanisms, lambda 0/0.5/1/consumer, with and without "
           f"approval), no invariant violation")


def test_criterion_08_degeneracies(synthetic_days):
    seed, ds, prepared = synthetic_days[0]
    zero = []
    for m in (Mechanism.TOP_RANKED, Mechanism.UNIFORM):
        res = run_experiment(ExperimentConfig(ds, sampling=m, lam=1.0, executions=2, iterations=10),
                             prepared)
        zero.append(res.final("avg_discomfort")[0] == 0.0 and res.final("unfairness")[0] == 0.0)

    rng = np.random.default_rng(8)
    single_ok = True
    for _ in range(50):
        space = generate_plans(random_schedule(rng), 1000.0)
        agent = AgentPlanSet("solo", space.plans[:10], 0.0)
        picked = run([agent], TreeTopology((0,)), iterations=3, audit=True).selections[0]
        variances = [np.var(p.values) for p in agent.plans]
        single_ok &= variances[picked] == min(variances)
    ok = all(zero) and single_ok
    report(8, "baseline degeneracies", ok,
           f"lambda=1 zero discomfort and unfairness (top-ranked, uniform): {zero}; "
           f"single agent at lambda=0 takes its minimum-variance plan: {single_ok}")


def test_criterion_09_published_dataset():
    line = ("[NOT EVALUATED] criterion  9 published-dataset reproduction: the original "
            "schedule dataset is not available offline; criteria 1-8 and 10 stand alone")
    ACCEPTANCE_LINES.append(line)
    print(line)
    pytest.skip("original schedule dataset not available")


def test_criterion_10_determinism(tmp_path):
    ds_dir = tmp_path / "ds"
    cmd = [sys.executable, "-m", "flexgrid.cli"]
    subprocess.run(cmd + ["synth", "--consumers", "15", "--days", "2", "--seed", "7",
                          "--out", str(ds_dir)], check=True, capture_output=True)
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        subprocess.run(cmd + ["optimize", str(ds_dir), "--sampling", "bottom-poisson",
                              "--executions", "3", "--iterations", "15", "--seed", "11",
                              "--out", str(out)], check=True, capture_output=True)
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    same = [(outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files]
    report(10, "determinism", bool(files) and all(same),
           f"{sum(same)}/{len(files)} CSV files byte-identical across two invocations")
