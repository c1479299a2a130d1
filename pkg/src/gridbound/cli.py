"""Command-line front end: bound computation, market experiments, verifiers.

Exit codes: 0 success, 1 domain error (infeasible dispatch, property
violation), 2 usage error (bad flags, missing files).  All randomness flows
from --seed (default 0).  Log level comes from GRIDBOUND_LOG
(error|info|debug, default error).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("gridbound")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _resolve(name: str) -> Path:
    from .data import data_path

    p = Path(name)
    if p.is_file():
        return p
    try:
        return data_path(name)
    except FileNotFoundError:
        raise argparse.ArgumentTypeError(f"no such file: {name}")


def _parse_model_arg(spec: str):
    from .uncertainty import UncertaintyError, parse_model

    try:
        return parse_model(spec)
    except UncertaintyError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridbound",
                                 description="chance-constrained storage bid bounds "
                                             "and agent-based market experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="compute locational bid bounds from a CED solve")
    b.add_argument("--network", type=_resolve, required=True)
    b.add_argument("--forecast", type=_resolve, required=True)
    b.add_argument("--epsilon", type=float, default=0.05)
    b.add_argument("--model", type=_parse_model_arg, default="gaussian")
    b.add_argument("--window", choices=("remaining", "full"), default="remaining")
    b.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="run the day-ahead/real-time market experiment")
    s.add_argument("--config", type=_resolve, required=True)
    s.add_argument("--seed", type=int, default=None,
                   help="overrides the config seed (default 0 if neither set)")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for the trial pool")

    v = sub.add_parser("verify", help="run a bound property verifier")
    v.add_argument("--property", choices=("coverage", "soc", "sigma", "epsilon"),
                   required=True)
    v.add_argument("--config", type=_resolve, required=True)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out", required=True)
    return ap


def cmd_bounds(args) -> int:
    from . import dispatch as dp
    from .bounds import bid_bounds_table, write_bounds_csv
    from .grid import load_network
    from .uncertainty import load_forecast_csv

    network = load_network(args.network)
    forecast = load_forecast_csv(args.forecast, n_nodes=network.n_buses)
    prob = dp.build_ced(network, forecast, args.epsilon, args.model)
    sol = dp.resolve_complementarity(prob, dp.solve(prob))
    if sol.status != dp.OPTIMAL:
        print(f"error: chance-constrained dispatch is {sol.status} "
              f"(epsilon={args.epsilon})", file=sys.stderr)
        return EXIT_DOMAIN
    table = bid_bounds_table(sol, network, args.epsilon, args.window)
    write_bounds_csv(table, args.out)
    print(f"wrote {args.out}")
    for s in range(len(network.storages)):
        print(f"storage {s}: A_bar in [{table.a_bar[s].min():.2f}, "
              f"{table.a_bar[s].max():.2f}]  B_bar in [{table.b_bar[s].min():.2f}, "
              f"{table.b_bar[s].max():.2f}]")
    return EXIT_OK


def _write_metrics_csv(records, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["da_scenario", "rt_sample", "bounds_mode", "failed",
                    "system_cost", "storage_profit"])
        for r in records:
            w.writerow([r.da_id, r.rt_id, r.bounds_mode, int(r.failed),
                        repr(float(r.system_cost)), repr(float(np.sum(r.profit)))])


def cmd_simulate(args) -> int:
    from .sim import SimError, load_config, run_experiment

    try:
        config = load_config(args.config)
        if args.seed is not None:
            from dataclasses import replace
            config = replace(config, seed=args.seed)
        log.info("resolved config: %s (seed %d)", config, config.seed)
        report, records = run_experiment(config, base=Path(args.config).parent,
                                         jobs=args.jobs)
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics_csv(records, out / "metrics.csv")
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    print(f"wrote {out / 'metrics.csv'} and {out / 'report.json'}")
    sc, sp, d = report.system_cost, report.storage_profit, report.deltas
    print(f"trials: {report.n_trials} (failed {report.n_failed})")
    print(f"{'':<16}{'with bounds':>14}{'without':>14}{'delta':>12}{'delta %':>10}")
    print(f"{'system cost':<16}{sc['with_bounds']['mean']:>14.2f}"
          f"{sc['without_bounds']['mean']:>14.2f}"
          f"{d['system_cost']['absolute']:>12.2f}"
          f"{d['system_cost']['percent']:>10.4f}")
    pct = d["storage_profit"]["percent"]
    print(f"{'storage profit':<16}{sp['with_bounds']['mean']:>14.2f}"
          f"{sp['without_bounds']['mean']:>14.2f}"
          f"{d['storage_profit']['absolute']:>12.2f}"
          f"{(pct if pct is not None else float('nan')):>10.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .sim import SimError, load_config, verify_coverage, verify_monotonicity

    try:
        config = load_config(args.config)
        if args.seed is not None:
            from dataclasses import replace
            config = replace(config, seed=args.seed)
        log.info("resolved config: %s (seed %d)", config, config.seed)
        base = Path(args.config).parent
        if args.property == "coverage":
            res = verify_coverage(config, base=base)
            with open(args.out, "w", encoding="utf-8", newline="") as f:
                w = csv.writer(f)
                w.writerow(["storage", "samples", "counted", "covered_fraction",
                            "threshold", "passed"])
                for s, frac in enumerate(res.per_storage):
                    w.writerow([s, config.coverage_samples, int(res.counted[s]),
                                repr(float(frac)), repr(res.threshold),
                                int(frac >= res.threshold)])
            print(f"coverage: {np.round(res.per_storage, 4).tolist()} "
                  f"(threshold {res.threshold:.4f}) -> "
                  f"{'pass' if res.passed else 'FAIL'}")
            if not res.passed:
                bad = int(np.argmin(res.per_storage))
                print(f"counterexample: storage {bad} covered "
                      f"{res.per_storage[bad]:.4f} < {res.threshold:.4f}",
                      file=sys.stderr)
                return EXIT_DOMAIN
            return EXIT_OK
        res = verify_monotonicity(config, args.property, base=base)
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(["axis", "value", "storage", "t", "A_bar", "B_bar"])
            for i, x in enumerate(res.points):
                S, T = res.a_bar.shape[1:]
                for s in range(S):
                    for t in range(T):
                        w.writerow([res.axis, repr(float(x)), s, t,
                                    repr(float(res.a_bar[i, s, t])),
                                    repr(float(res.b_bar[i, s, t]))])
        print(f"{args.property} sweep over {res.points.tolist()}: "
              f"{'pass' if res.passed else 'FAIL'}")
        if not res.passed:
            print(f"counterexample: {res.first_violation}", file=sys.stderr)
            return EXIT_DOMAIN
        return EXIT_OK
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main(argv=None) -> int:
    level = os.environ.get("GRIDBOUND_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "bounds":
        return cmd_bounds(args)
    if args.command == "simulate":
        return cmd_simulate(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
