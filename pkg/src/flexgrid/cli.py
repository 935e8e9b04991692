"""Command-line entry point: ``flexgrid <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .dataset import DatasetError, SynthSpec, load_dataset, save_dataset, summarize, synth_dataset
from .domain import FlexgridError, minute_label, substream
from .harness import ExperimentConfig, prepare_day, run_experiment, run_sweep, write_experiment
from .plans import DEFAULT_PLAN_CAP
from .sampling import Mechanism, SamplingMechanism, sample_indices

log = logging.getLogger("flexgrid")

DEFAULTS = {"seed": 0, "iterations": 50, "plans_per_agent": 10, "sampling": "top-ranked",
            "lam": "consumer", "executions": 10, "normalization": "minmax", "approval": True}


def _lambda_arg(text: str):
    if text.strip().lower() == "consumer":
        return "consumer"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'consumer' or a number in [0, 1], got {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"lambda must lie in [0, 1], got {value}")
    return value


def _sampling_arg(text: str) -> str:
    try:
        return Mechanism.parse(text).cli_name
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _common() -> argparse.ArgumentParser:
    # Defaults are None so a config file can fill in whatever was not given.
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run options")
    g.add_argument("--seed", type=int, help="top-level random seed (default 0)")
    g.add_argument("--iterations", type=int, help="coordination iterations per run (default 50)")
    g.add_argument("--plans-per-agent", type=int, help="plans sampled per agent (default 10)")
    g.add_argument("--sampling", type=_sampling_arg, metavar="MECHANISM",
                   help="top-ranked | top-poisson | uniform | bottom-poisson | bottom-ranked")
    g.add_argument("--lambda", dest="lam", type=_lambda_arg, metavar="{consumer|0..1}",
                   help="cooperation weight for every consumer, or 'consumer' for survey values")
    g.add_argument("--executions", type=int, help="repetitions with fresh sampling and tree (default 10)")
    g.add_argument("--normalization", choices=("minmax", "none"),
                   help="scaling of the variance term before weighting (default minmax)")
    g.add_argument("--approval", action=argparse.BooleanOptionalAction, default=None,
                   help="let parents keep or revert their children's changes (default on)")
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="flexgrid", description=__doc__)
    parser.add_argument("--version", action="version", version=f"flexgrid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a dataset and print its summary")
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--consumers", type=int, default=51)
    p.add_argument("--days", type=int, default=4)

    for name, text in (("plans", "dump every generated plan of each consumer-day"),
                       ("sample", "dump the plans each agent would submit")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("dataset", type=Path)
        p.add_argument("--consumer", help="restrict to one consumer id")
        p.add_argument("--day", type=int, help="restrict to one day")
        p.add_argument("--plan-cap", type=int, default=DEFAULT_PLAN_CAP)
    sub.choices["sample"].add_argument("--execution", type=int, default=0,
                                       help="execution index whose sampling stream is used")

    p = sub.add_parser("optimize", parents=[common], help="coordinate one dataset and write reports")
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("experiment", parents=[common], help="run a sweep described by a JSON file")
    p.add_argument("--config", type=Path, required=True)
    return parser


def _opt(args, name):
    value = getattr(args, name, None)
    return DEFAULTS[name] if value is None else value


def _lam_value(lam):
    return None if lam == "consumer" else float(lam)


def _config(args, dataset) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=dataset,
        sampling=Mechanism.parse(_opt(args, "sampling")),
        lam=_lam_value(_opt(args, "lam")),
        iterations=_opt(args, "iterations"),
        executions=_opt(args, "executions"),
        plans_per_agent=_opt(args, "plans_per_agent"),
        seed=_opt(args, "seed"),
        normalization=_opt(args, "normalization"),
        approval=_opt(args, "approval"),
    )


def _open_out(args, filename: str):
    """Writable text handle: ``--out/filename`` when --out is given, else stdout."""
    if args.out is None:
        return sys.stdout, False
    args.out.mkdir(parents=True, exist_ok=True)
    return open(args.out / filename, "w", encoding="utf-8", newline=""), True


def _selected_days(ds, args) -> list[int]:
    days = ds.days()
    if args.day is not None:
        if args.day not in days:
            raise DatasetError(f"day {args.day} not in dataset (days {days})")
        days = [args.day]
    return days


def _plan_rows(space, indices, cid, day):
    for rank in indices:
        plan = space[int(rank)]
        begins = ";".join(f"{p.appliance.value}@{minute_label(p.begin)}" for p in plan.placements)
        shifts = ";".join(str(s) for s in plan.shifts)
        yield [cid, day, int(rank), repr(plan.discomfort), shifts, begins, repr(plan.total)]


def cmd_validate(args) -> int:
    ds = load_dataset(args.dataset)
    summary = summarize(ds)
    summary["lambda_resolved"] = len(ds.lambdas)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(consumers=args.consumers, days=args.days, seed=_opt(args, "seed"))
    ds = synth_dataset(spec)
    out = args.out or Path("synthetic")
    save_dataset(ds, out)
    print(f"wrote {len(ds.schedules)} schedules for {spec.consumers} consumers x {spec.days} days to {out}")
    return 0


def _dump(args, pick) -> int:
    ds = load_dataset(args.dataset)
    cfg = _config(args, ds)
    cfg = replace(cfg, plan_cap=args.plan_cap)
    fh, close = _open_out(args, f"{args.command}.csv")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["consumer_id", "day", "rank", "discomfort", "shifts", "starts", "energy"])
        for day in _selected_days(ds, args):
            prepared = prepare_day(ds, day, cfg)
            for i, (cid, space) in enumerate(zip(prepared.consumers, prepared.spaces)):
                if args.consumer is not None and cid != args.consumer:
                    continue
                w.writerows(_plan_rows(space, pick(cfg, space, day, i), cid, day))
    finally:
        if close:
            fh.close()
    return 0


def cmd_plans(args) -> int:
    return _dump(args, lambda cfg, space, day, i: range(len(space)))


def cmd_sample(args) -> int:
    def pick(cfg, space, day, i):
        mech = SamplingMechanism(cfg.sampling, cfg.plans_per_agent, cfg.poisson_rate)
        return sample_indices(len(space), mech, substream(cfg.seed, "sampling", args.execution, day, i))
    return _dump(args, pick)


def cmd_optimize(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = _config(args, ds)
    res = run_experiment(cfg)
    out = args.out or Path("results")
    write_experiment(res, out)
    var, var_sd = res.final("global_variance")
    disc, disc_sd = res.final("avg_discomfort")
    unf, unf_sd = res.final("unfairness")
    print(f"variance {var:.6g} (sd {var_sd:.3g})  discomfort {disc:.4f} (sd {disc_sd:.3g})  "
          f"unfairness {unf:.4f} (sd {unf_sd:.3g})")
    print(f"reports in {out}")
    return 0


def cmd_experiment(args) -> int:
    sweep = json.loads(args.config.read_text(encoding="utf-8"))
    if "dataset" not in sweep:
        raise DatasetError(f"{args.config}: sweep needs a 'dataset' entry")
    dataset = Path(sweep["dataset"])
    if not dataset.is_absolute():
        dataset = args.config.parent / dataset
    sweep["dataset"] = str(dataset)
    # Explicit flags win over the file.
    for flag, key in (("seed", "seed"), ("iterations", "iterations"), ("executions", "executions"),
                      ("plans_per_agent", "plans_per_agent"), ("normalization", "normalization"),
                      ("approval", "approval")):
        if getattr(args, flag) is not None:
            sweep[key] = getattr(args, flag)
    if args.sampling is not None:
        sweep["sampling"] = [args.sampling]
    if args.lam is not None:
        sweep["lambda"] = [args.lam]
    out = args.out or Path(sweep.get("out", "results"))
    cells = run_sweep(sweep, out)
    print(f"{len(cells)} cells written to {out} (summary.csv)")
    return 0


COMMANDS = {"validate": cmd_validate, "synth": cmd_synth, "plans": cmd_plans,
            "sample": cmd_sample, "optimize": cmd_optimize, "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # Output piped into e.g. `head`; stop quietly.
        sys.stderr.close()
        return 0
    except (FlexgridError, ValueError, OSError) as exc:
        print(f"flexgrid {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
