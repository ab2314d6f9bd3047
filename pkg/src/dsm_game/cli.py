"""Command line scenario runner.

    dsm-game --config run.json --out results/ --seed 7 --mode sweep-error

Every mode writes plain CSV/JSON into ``--out`` plus a ``manifest.json``
echoing the resolved configuration. Exit codes: 0 success, 1 oracle check
failed, 2 config error, 3 data error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .execution import ScenarioConfig, ZeroLoadError, chain_days, report
from .game import oracle_check
from .neighbourhood import (
    Category,
    NegativeLoadError,
    ShapeMismatchError,
    TraceConfig,
    TraceFormatError,
    category_list,
    load_csv_traces,
    make_households,
    synth_traces,
)

logger = logging.getLogger("dsm_game")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DATA, EXIT_IO = 0, 1, 2, 3, 4

SWEEP_COLUMNS = ("point", "mix", "participants", "magnitude", "mean_par_reduction",
                 "std_par_reduction", "mean_savings", "std_savings", "converged")
AGGREGATE_COLUMNS = ("day", "interval", "demand", "reference_load", "ne_load", "realized_load")


class DataError(ValueError):
    """Input data inconsistent with the configuration."""


# ------------------------------------------------------------------ data


def load_days(cfg: RunConfig, categories=None):
    """Categories and per-day traces selected by the config's data block."""
    d = cfg.data
    if d.source == "csv":
        for path in (d.demand, d.pv):
            if not Path(path).is_file():
                raise FileNotFoundError(2, "No such file", str(path))
        tc = TraceConfig(T=cfg.T, dt=cfg.dt, categories=d.categories or [], pv_scales=d.pv_scales)
        days = load_csv_traces(d.demand, d.pv, tc)
        if len(days) < cfg.days:
            raise DataError(f"{d.demand}: {len(days)} days of data, config asks for {cfg.days}")
        days = days[:cfg.days]
        if categories is None:
            categories = [Category(c) for c in d.categories] if d.categories else \
                [Category.BASE] * days[0].n_households
        return categories, days
    categories = category_list(d.mix) if categories is None else categories
    days = [synth_traces(cfg.seed, T=cfg.T, categories=categories, day=k,
                         start_hour=d.start_hour, pv_peak=d.pv_peak, dt=cfg.dt)
            for k in range(cfg.days)]
    return categories, days


def removal_schedule(categories, seed, step=3):
    """Participant sets for the participation sweep, largest first.

    Each step removes ``step`` households, taking one from each category in
    turn (categories that ran empty are skipped); within a category the
    order is a seeded permutation. Stops before fewer than one would remain.
    """
    rng = np.random.default_rng([int(seed), 1])
    pools = {}
    for cat in Category:
        members = [m for m, c in enumerate(categories) if c == cat]
        pools[cat] = [int(m) for m in rng.permutation(members)] if members else []
    remaining = set(range(len(categories)))
    points = [sorted(remaining)]
    while len(remaining) > step:
        removed = 0
        while removed < step:
            for cat in Category:
                if removed < step and pools[cat]:
                    remaining.discard(pools[cat].pop(0))
                    removed += 1
        points.append(sorted(remaining))
    return points


def error_magnitudes(step):
    n = int(np.floor(1.0 / step + 1e-9))
    values = [round(k * step, 12) for k in range(n + 1)]
    if values[-1] < 1.0:
        values.append(1.0)
    return values


# ------------------------------------------------------------- artifacts


def _fmt(x):
    return repr(float(x))


def write_schedules_csv(path, results):
    """One row per day and participant: ``day, player, a_0 .. a_{T-1}``."""
    T = results[0].executed.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "player"] + [f"a_{t}" for t in range(T)])
        for k, r in enumerate(results):
            for row, m in zip(r.profile.schedules, r.participants):
                w.writerow([k, int(m)] + [_fmt(v) for v in row])


def read_schedules_csv(path):
    """Inverse of :func:`write_schedules_csv`: ``{day: (players, schedules)}``."""
    out = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        out.setdefault(int(row[0]), ([], []))
        out[int(row[0])][0].append(int(row[1]))
        out[int(row[0])][1].append([float(v) for v in row[2:]])
    return {k: (np.array(p, dtype=int), np.array(a, dtype=float)) for k, (p, a) in out.items()}


def write_aggregate_csv(path, results, days):
    """Aggregate curves per interval: gross demand, no-battery, predicted and realized load."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for k, (r, traces) in enumerate(zip(results, days)):
            demand = traces.actual_demand.sum(axis=0)
            reference = r.reference_loads.sum(axis=0)
            for t in range(demand.size):
                w.writerow([k, t, _fmt(demand[t]), _fmt(reference[t]),
                            _fmt(r.predicted_aggregate[t]), _fmt(r.aggregate_load[t])])


def read_aggregate_csv(path):
    """Inverse of :func:`write_aggregate_csv`: dict of column arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != AGGREGATE_COLUMNS:
        raise TraceFormatError(f"unexpected header {rows[0]}", path, 1)
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * len(AGGREGATE_COLUMNS)
    out = {}
    for name, values in zip(AGGREGATE_COLUMNS, cols):
        out[name] = np.array(values, dtype=int if name in ("day", "interval") else float)
    return out


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([row[c] if c in ("point", "mix", "participants", "converged") else _fmt(row[c])
                        for c in SWEEP_COLUMNS])


def read_sweep_csv(path):
    """Rows of the combined sweep table as dicts with typed values."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({
            "point": row["point"], "mix": row["mix"], "participants": int(row["participants"]),
            "converged": row["converged"] == "True",
            **{c: float(row[c]) for c in SWEEP_COLUMNS[3:-1]},
        })
    return out


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ runs


def simulate(cfg: RunConfig, categories, days, participants, magnitude):
    households = make_households(categories, participants=participants, battery=cfg.battery)
    if not any(h.participant for h in households):
        raise ConfigError("participants", "no participating household")
    errors = replace(cfg.errors, magnitude=magnitude)
    scenario = ScenarioConfig(
        households=households, errors=errors, tariff=cfg.tariff, dt=cfg.dt,
        initial_soc=cfg.initial_soc, chain=cfg.chain, tol=cfg.solver.tol,
        max_iter=cfg.solver.max_iter, init=cfg.solver.init, seed=cfg.seed,
        mode=cfg.solver.mode, others=cfg.solver.others,
    )
    return chain_days(scenario, days)


def write_point(out, results, days):
    """Schedules, aggregate curves and summary of one scenario; returns its report."""
    out.mkdir(parents=True, exist_ok=True)
    write_schedules_csv(out / "schedules.csv", results)
    write_aggregate_csv(out / "aggregate_load.csv", results, days)
    rep = report(results)
    summary = rep.to_dict()
    summary["participants"] = [int(m) for m in results[0].participants]
    summary["n_households"] = int(days[0].n_households)
    _write_json(out / "summary.json", summary)
    return rep


def _sweep_row(point, mix, n, magnitude, rep):
    return {"point": point, "mix": mix, "participants": n, "magnitude": magnitude,
            "mean_par_reduction": rep.mean_par_reduction, "std_par_reduction": rep.std_par_reduction,
            "mean_savings": rep.mean_savings, "std_savings": rep.std_savings_between_households,
            "converged": rep.converged_all}


def _say(quiet, msg):
    if not quiet:
        print(msg)


def run_single(cfg, out, quiet):
    categories, days = load_days(cfg)
    results = simulate(cfg, categories, days, cfg.participants, cfg.errors.magnitude)
    rep = write_point(out, results, days)
    _say(quiet, f"{rep.days} day(s): mean PAR change {rep.mean_par_reduction:+.4f} "
                f"(std {rep.std_par_reduction:.4f}), mean savings {rep.mean_savings:.4f}, "
                f"converged={rep.converged_all}")
    return ["schedules.csv", "aggregate_load.csv", "summary.json"]


def run_sweep(cfg, out, quiet):
    rows, files = [], []
    if cfg.mode == "sweep-error":
        categories, days = load_days(cfg)
        n = len(cfg.participants) if cfg.participants is not None else len(categories)
        for mag in error_magnitudes(cfg.sweep.error_step):
            point = f"error_{mag:.3f}"
            rep = write_point(out / point, simulate(cfg, categories, days, cfg.participants, mag), days)
            rows.append(_sweep_row(point, "config", n, mag, rep))
    else:
        if cfg.mode == "sweep-participation":
            mixes = [("config", None)]
        else:
            M = cfg.n_households
            mixes = [(m, None if m == "MIXED" else [Category(m)] * M) for m in cfg.sweep.mixes]
        for label, cats in mixes:
            categories, days = load_days(cfg, cats)
            for members in removal_schedule(categories, cfg.seed, cfg.sweep.participation_step):
                point = f"participation_{len(members)}" if label == "config" else \
                    f"mix_{label}_{len(members)}"
                results = simulate(cfg, categories, days, members, cfg.errors.magnitude)
                rep = write_point(out / point, results, days)
                rows.append(_sweep_row(point, label, len(members), cfg.errors.magnitude, rep))
    for row in rows:
        files.append(row["point"])
        _say(quiet, f"{row['point']}: mean PAR change {row['mean_par_reduction']:+.4f}, "
                    f"mean savings {row['mean_savings']:.4f}")
    write_sweep_csv(out / "sweep.csv", rows)
    return files + ["sweep.csv"]


def run_oracle(cfg, out, quiet):
    o = cfg.oracle
    res = oracle_check(o.instances, cfg.seed, o.resolution, tuple(o.horizons))
    res["tolerance"] = 2 * o.resolution
    res["passed"] = res["max_discrepancy"] <= res["tolerance"]
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "oracle.json", res)
    _say(quiet, f"max |DP - closed form| = {res['max_discrepancy']:.6f} kWh over "
                f"{res['instances']} instances (tolerance {res['tolerance']:.3f})")
    return ["oracle.json"], res["passed"]


def run(cfg: RunConfig, out, quiet=False) -> int:
    """Execute ``cfg`` and write artifacts under ``out``; returns the exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    if cfg.mode == "single":
        files = run_single(cfg, out, quiet)
    elif cfg.mode == "oracle-check":
        files, passed = run_oracle(cfg, out, quiet)
        status = EXIT_OK if passed else EXIT_CHECK_FAILED
    else:
        files = run_sweep(cfg, out, quiet)
    _write_json(out / "manifest.json", {
        "config": cfg.to_dict(), "seed": cfg.seed, "version": __version__, "outputs": files,
    })
    return status


def _u64(text):
    try:
        value = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return value


def build_parser():
    p = argparse.ArgumentParser(prog="dsm-game", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="JSON run configuration (defaults if omitted)")
    p.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=_u64, help="override the config seed")
    p.add_argument("--mode", choices=("single", "sweep-participation", "sweep-error",
                                      "sweep-consumer-mix", "oracle-check"),
                   help="override the config mode")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, mode=args.mode, seed=args.seed)
        status = run(cfg, args.out, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceFormatError, ShapeMismatchError, NegativeLoadError, ZeroLoadError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    _say(args.quiet, f"wrote {args.out} in {time.perf_counter() - t0:.1f} s")
    return status


if __name__ == "__main__":
    sys.exit(main())
