"""Command-line entry points: gen, run, bench, replay.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime
failure.  The WARPGRID_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time as _time

from . import balance
from .metrics import emit_report, worker_events_table
from .runner import PARTITION_MODES, RunConfig, Session, run_simulation
from .scenario import ScenarioError, generate, load as load_scenario, save as save_scenario, symmetric_counts
from .trace import TraceParseError, read_trace, write_trace

log = logging.getLogger("warpgrid.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="warpgrid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a scenario file")
    gen.add_argument("--aircraft", type=int, default=0, help="aircraft per side")
    gen.add_argument("--tanks", type=int, default=0, help="ground forces per side")
    gen.add_argument("--vessels", type=int, default=0, help="vessels per side")
    gen.add_argument("--structures", type=int, default=0, help="ground structures per side")
    gen.add_argument("--radius", type=int, required=True, help="map radius in grids")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--max-ticks", type=int, default=100)
    gen.add_argument("--out", default="scenario.scn")

    run = sub.add_parser("run", help="run a simulation to quiescence")
    _add_run_flags(run)
    run.add_argument("--trace-out", default="trace.out")
    run.add_argument("--control-listen", default=None, metavar="HOST:PORT",
                     help="serve the operator control/telemetry gateway")
    run.add_argument("--report-format", choices=("text", "csv"), default="text")
    run.add_argument("--report-figure", default=None, metavar="PNG",
                     help="also render the per-worker committed-events chart")
    run.add_argument("--max-wall", type=float, default=600.0)
    run.add_argument("--dump-assignment", default=None,
                     help="write the LP partition table to this path")

    bench = sub.add_parser("bench", help="run a benchmark matrix")
    _add_run_flags(bench)
    bench.add_argument("--workers-list", default="1,2,4,8")
    bench.add_argument("--repeat", type=int, default=1, help="best-of repetitions per cell")
    bench.add_argument("--out-dir", default="bench_out")
    bench.add_argument("--report-format", choices=("text", "csv"), default="text")
    bench.add_argument("--searches", default=None,
                       help="comma list of search strategies to sweep")

    replay = sub.add_parser("replay", help="render a trace as per-tick board frames")
    replay.add_argument("--trace", required=True)
    replay.add_argument("--scenario", default=None, help="scenario for board layout")
    replay.add_argument("--board-limit", type=int, default=16,
                        help="largest radius rendered as an ASCII board")

    rank = sub.add_parser("_rank", help=argparse.SUPPRESS)
    rank.add_argument("--rank", type=int, required=True)
    rank.add_argument("--topology", required=True)
    rank.add_argument("--scenario", required=True)
    rank.add_argument("--assignment", required=True)
    rank.add_argument("--workers", type=int, default=1)
    rank.add_argument("--search", default="neighbor")
    rank.add_argument("--gc-rounds", type=int, default=4)
    rank.add_argument("--gvt-cadence", type=int, default=1000)
    rank.add_argument("--seed", type=int, default=None)
    rank.add_argument("--max-ticks", type=int, default=None)
    rank.add_argument("--partition", default="static")
    return parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--nodes", default=None, metavar="TOPOLOGY",
                   help="topology file for a multi-process run")
    p.add_argument("--search", choices=("neighbor", "brute"), default="neighbor")
    p.add_argument("--gc-rounds", type=int, default=4)
    p.add_argument("--gvt-cadence", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-ticks", type=int, default=None)
    p.add_argument("--partition", choices=PARTITION_MODES, default="static")
    p.add_argument("--assignment", default=None, help="LP partition table to load")


def cmd_gen(args) -> int:
    counts = symmetric_counts({
        "aircraft": args.aircraft,
        "ground_force": args.tanks,
        "vessel": args.vessels,
        "ground_structure": args.structures,
    })
    try:
        scenario = generate(counts, args.radius, args.seed, max_time=args.max_ticks)
    except ScenarioError as exc:
        for e in exc.errors:
            sys.stderr.write(f"error: {e}\n")
        return EXIT_VALIDATION
    save_scenario(scenario, args.out)
    print(f"wrote {args.out}: {len(scenario.roster)} entities, radius {args.radius}")
    return EXIT_OK


def _load_inputs(args):
    scenario = load_scenario(args.scenario)
    assignment = balance.load_assignment(args.assignment) if args.assignment else None
    config = RunConfig(
        scenario=scenario,
        workers=args.workers,
        search=args.search,
        gc_rounds=args.gc_rounds,
        gvt_cadence=args.gvt_cadence,
        seed=args.seed,
        max_ticks=args.max_ticks,
        partition_mode=args.partition,
        assignment=assignment,
    )
    return scenario, config


def cmd_run(args) -> int:
    try:
        scenario, config = _load_inputs(args)
    except (ScenarioError, balance.PartitionError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    if config.workers < 1:
        sys.stderr.write("error: --workers must be >= 1\n")
        return EXIT_VALIDATION
    try:
        if args.nodes:
            if args.control_listen:
                sys.stderr.write("error: --control-listen requires a single-process run\n")
                return EXIT_VALIDATION
            from .cluster import run_cluster

            result = run_cluster(config, args.nodes, args.scenario, args.assignment)
        elif args.control_listen:
            result = _run_with_gateway(config, args)
        else:
            result = run_simulation(config, max_wall=args.max_wall)
    except TimeoutError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report and exit 3
        log.exception("run failed")
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME
    write_trace(result.records, args.trace_out)
    if args.dump_assignment:
        balance.save_assignment(result.assignment, args.dump_assignment)
    if args.report_figure:
        from .report import worker_load_figure

        worker_load_figure(result.stats, args.report_figure)
    table = worker_events_table(result.stats)
    sys.stdout.write(emit_report(table, args.report_format))
    print(f"trace: {args.trace_out} ({len(result.records)} records), "
          f"wall {result.wall_seconds:.2f}s, gvt rounds {len(result.gvt_history)}")
    return EXIT_OK


def _run_with_gateway(config: RunConfig, args):
    from .uigw import serve_gateway

    host, _, port_text = args.control_listen.rpartition(":")
    config.control = True
    session = Session(config)
    try:
        gateway = serve_gateway(session, host or "127.0.0.1", int(port_text))
    except OSError as exc:
        log.warning("control endpoint bind failed (%s); running headless", exc)
        config.control = False
        session = Session(config)
        session.start()
        return session.finish(max_wall=args.max_wall)
    session.start()
    print(f"control gateway on {args.control_listen}; awaiting operator shutdown")
    try:
        deadline = _time.monotonic() + args.max_wall
        while _time.monotonic() < deadline:
            session.pump()
            if gateway.shutdown_requested and not any(n.hold_flag for n in session.nodes):
                break
            _time.sleep(0.002)
        return session.finish(max_wall=args.max_wall)
    finally:
        gateway.close()


def cmd_bench(args) -> int:
    from .report import BenchCell, BenchReport, write_bench_outputs

    try:
        scenario, base_config = _load_inputs(args)
    except (ScenarioError, balance.PartitionError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    try:
        workers_list = [int(w) for w in args.workers_list.split(",") if w]
    except ValueError:
        sys.stderr.write("error: --workers-list must be comma-separated integers\n")
        return EXIT_USAGE
    searches = (args.searches.split(",") if args.searches else [base_config.search])
    report = BenchReport()
    for search in searches:
        for workers in workers_list:
            label = f"{search}-w{workers}"
            cell = BenchCell(label, workers, 1, search, 0.0, 0)
            try:
                best = None
                committed = 0
                for _ in range(max(1, args.repeat)):
                    cfg = RunConfig(
                        scenario=scenario, workers=workers, search=search,
                        gc_rounds=base_config.gc_rounds,
                        gvt_cadence=base_config.gvt_cadence,
                        seed=base_config.seed, max_ticks=base_config.max_ticks,
                        partition_mode=base_config.partition_mode,
                        assignment=base_config.assignment,
                    )
                    t0 = _time.monotonic()
                    result = run_simulation(cfg, max_wall=600.0)
                    wall = _time.monotonic() - t0
                    best = wall if best is None else min(best, wall)
                    committed = sum(result.commit_matrix.values())
                cell.wall_seconds = best or 0.0
                cell.committed = committed
            except Exception as exc:  # noqa: BLE001 - cell failure, matrix continues
                log.exception("bench cell %s failed", label)
                cell.error = str(exc)
            report.cells.append(cell)
    sys.stdout.write(emit_report(report.table(), args.report_format))
    paths = write_bench_outputs(report, args.out_dir)
    print("wrote: " + ", ".join(str(p) for p in paths))
    return EXIT_OK if all(not c.error for c in report.cells) else EXIT_RUNTIME


def cmd_replay(args) -> int:
    try:
        records = read_trace(args.trace)
    except TraceParseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    scenario = None
    if args.scenario:
        try:
            scenario = load_scenario(args.scenario)
        except ScenarioError as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_VALIDATION
    frames, tally = render_replay(records, scenario, args.board_limit)
    for frame in frames:
        print(frame)
    print(tally)
    return EXIT_OK


def render_replay(records, scenario, board_limit: int = 16):
    """Per-tick frames (tick 0 is the initial board) plus a casualty tally."""
    max_tick = max((r.ts for r in records), default=0)
    state: dict[str, tuple[str, object, bool]] = {}
    if scenario is not None:
        for p in scenario.roster:
            state[p.name] = (p.side, p.position, True)
    by_tick: dict[int, list] = {}
    for r in records:
        by_tick.setdefault(r.ts, []).append(r)
    frames = []
    destroyed: list[tuple[int, str]] = []
    for tick in range(0, max_tick + 1):
        lines = [f"== t={tick} =="]
        for r in by_tick.get(tick, []):
            side, pos, alive = state.get(r.actor, (r.side, r.pos, True))
            state[r.actor] = (r.side, r.pos, alive)
            if r.destroyed:
                old = state.get(r.destroyed)
                if old:
                    state[r.destroyed] = (old[0], old[1], False)
                destroyed.append((tick, r.destroyed))
                lines.append(f"  destroyed: {r.destroyed} by {r.actor}")
        alive_counts = {"blue": 0, "red": 0}
        for side, _, alive in state.values():
            if alive and side in alive_counts:
                alive_counts[side] += 1
        lines.append(f"  alive: blue={alive_counts['blue']} red={alive_counts['red']}"
                     f"  events={len(by_tick.get(tick, []))}")
        if scenario is not None and scenario.map_radius <= board_limit:
            lines.extend(_ascii_board(state, scenario.map_radius))
        frames.append("\n".join(lines))
    casualties = {}
    for _, name in destroyed:
        side = state.get(name, ("?", None, False))[0]
        casualties[side] = casualties.get(side, 0) + 1
    tally = ("casualties: "
             + ", ".join(f"{side}={n}" for side, n in sorted(casualties.items()))
             if destroyed else "casualties: none")
    return frames, f"{tally} (total {len(destroyed)})"


def _ascii_board(state, radius: int) -> list[str]:
    cells: dict[tuple[int, int], str] = {}
    for side, pos, alive in state.values():
        if not alive or pos is None:
            continue
        key = (pos.z, pos.x)
        mark = "b" if side == "blue" else "r"
        prev = cells.get(key)
        cells[key] = mark if prev in (None, mark) else "*"
    rows = []
    for z in range(-radius, radius + 1):
        indent = " " * abs(z)
        row = []
        for x in range(-radius, radius + 1):
            if abs(-x - z) > radius:
                row.append(" ")
            else:
                row.append(cells.get((z, x), "."))
        rows.append(indent + " ".join(row).rstrip())
    return rows


def main(argv=None) -> int:
    level = os.environ.get("WARPGRID_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen":
        return cmd_gen(args)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "bench":
        return cmd_bench(args)
    if args.command == "replay":
        return cmd_replay(args)
    if args.command == "_rank":
        from .cluster import rank_entry

        return rank_entry(args)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
