"""Command-line front end.

Machine-readable output goes to stdout or the ``--out`` file; diagnostics go
to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import casestudy
from .catalog import DuplicateContent, UnknownContent
from .ecd import InvariantViolation, UnknownStation
from .engine import Scenario, ScenarioError, build_states, run_scenario, sweep
from .topology import TopologyError, all_pairs_shortest_paths, distance_table, load_topology, rank_pools, station_names
from .workload import TraceError, dumps_trace, generate_zipf_trace, save_trace

log = logging.getLogger("ecdsim")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_rank(args) -> int:
    g = load_topology(args.topology)
    d = distance_table(g) if args.as_is else all_pairs_shortest_paths(g)
    lines = ["rank,station,total_cost"]
    for e in rank_pools(d).entries:
        lines.append(f"{e.rank},{e.station},{e.total_cost:g}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_place(args) -> int:
    sc = Scenario.load(args.scenario)
    g = sc.graph()
    dist = all_pairs_shortest_paths(g)
    ecd, _ = build_states(sc.model_copy(update={"models": ["ECD"]}), dist, sc.scenario_params(len(g)))
    plan = ecd.place_initial()
    doc = {"ranking": ecd.ranking.order, "K": sc.params.K, "placement": plan,
           "effective_capacity": {s: ecd.servers[s].effective_capacity for s in ecd.order}}
    _write(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def cmd_run(args) -> int:
    sc = Scenario.load(args.scenario)
    report = run_scenario(sc, check=False if args.no_check else None)
    _write(report.to_json(), args.out)
    if args.events:
        with open(args.events, "w", encoding="utf-8") as fh:
            for model, records in report.event_log.items():
                for rec in records:
                    fh.write(json.dumps({"model": model, **rec}, sort_keys=True) + "\n")
    if report.comparison:
        log.info("ecd=%g cdn=%g saving=%.4f", report.comparison["ecd_total"], report.comparison["cdn_total"],
                 report.comparison["saving_fraction"])
    return 0


def cmd_sweep(args) -> int:
    base = Scenario.load(args.scenario)
    started = time.time()
    result = sweep(base, args.stations, args.requests, args.seeds, jobs=args.jobs,
                   check=False if args.no_check else None)
    _write(result.to_csv(), args.out)
    log.info("sweep of %d points finished in %.1fs", len(result.reports) + len(result.failures),
             time.time() - started)
    for pt, err in sorted(result.failures.items(), key=lambda kv: (kv[0].stations, kv[0].requests, kv[0].seed)):
        print(f"error: point stations={pt.stations} requests={pt.requests} seed={pt.seed}: {err}", file=sys.stderr)
    return 1 if result.failures else 0


def cmd_gen_workload(args) -> int:
    if args.topology:
        stations = list(load_topology(args.topology).stations)
    elif args.station_ids:
        stations = [s.strip() for s in args.station_ids.split(",") if s.strip()]
    else:
        stations = station_names(args.n_stations)
    trace = generate_zipf_trace(args.contents, args.requests, args.zipf, stations, args.seed,
                                prefix=args.prefix, p_upload=args.p_upload)
    if args.out in (None, "-"):
        sys.stdout.write(dumps_trace(trace))
    else:
        save_trace(trace, args.out)
    return 0


def cmd_casestudy(args) -> int:
    checks = casestudy.run_checks()
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecdsim", description="Edge content delivery vs CDN simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("rank", help="rank cache pools of a topology")
    s.add_argument("--topology", required=True)
    s.add_argument("--as-is", action="store_true", help="rank the weight table without shortest-path closure")
    s.add_argument("--out")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("place", help="print the initial placement of a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_place)

    s = sub.add_parser("run", help="run a scenario and write its report")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out")
    s.add_argument("--events", help="also write the per-event log as JSON lines")
    s.add_argument("--no-check", action="store_true", help="skip per-event invariant checks")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a grid of stations x requests x seeds")
    s.add_argument("--scenario", required=True)
    s.add_argument("--stations", type=_int_list, required=True)
    s.add_argument("--requests", type=_int_list, required=True)
    s.add_argument("--seeds", type=_int_list, default=[0])
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-check", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("gen-workload", help="generate a Zipf request trace")
    s.add_argument("--zipf", type=float, default=1.0, metavar="EXPONENT")
    s.add_argument("--contents", type=int, required=True)
    s.add_argument("--requests", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--prefix", default="c")
    s.add_argument("--p-upload", type=float, default=0.0)
    where = s.add_mutually_exclusive_group()
    where.add_argument("--topology")
    where.add_argument("--station-ids", help="comma-separated station ids")
    where.add_argument("--n-stations", type=int, default=5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_workload)

    s = sub.add_parser("casestudy", help="reproduce the five-station example and its cost figures")
    s.set_defaults(func=cmd_casestudy)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
    except TopologyError as exc:
        print(f"error: invalid topology: {exc}", file=sys.stderr)
    except TraceError as exc:
        print(f"error: invalid trace: {exc}", file=sys.stderr)
    except InvariantViolation as exc:
        print(f"error: simulation aborted: {exc}", file=sys.stderr)
    except (UnknownContent, UnknownStation, DuplicateContent) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
