"""Simulation sessions: wiring, coordination, and result assembly.

A Session owns one or more SimulationNodes.  Multi-node sessions in one
process communicate over the deterministic in-process transport (the
oracle/test configuration); real multi-process clusters live in the
cluster module and reuse the same node machinery over sockets.

The session thread is the coordinator: it polls transports, drives GVT
rounds and deferred garbage collection, advances the worker-to-queue
rotation, triggers repartitioning, and assembles the merged trace.  The
commit point for trace records and telemetry is the K-deferred reclaim
threshold, not raw GVT: anything the session has emitted can no longer be
contradicted, because injections below the threshold are rejected and
rollback never reaches below it.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import balance
from .engine import (
    OPERATOR_SENDER,
    EngineConfig,
    SimulationNode,
    root_name,
)
from .gvt import GcPolicy, GvtRound, next_round, reclaim_threshold
from .scenario import Scenario
from .solver import WarEvent
from .trace import TraceRecord
from .transport import InProcessTransport, WireMessage
from .vtime import INFINITY, EventEnvelope, EventKey, stable_hash

log = logging.getLogger("warpgrid.runner")

PARTITION_MODES = ("static", "balanced", "balanced+migration")


@dataclass(slots=True)
class RunConfig:
    scenario: Scenario
    workers: int = 1
    nodes: int = 1
    search: str = "neighbor"
    gc_rounds: int = 4
    gvt_cadence: int = 1000
    seed: Optional[int] = None
    max_ticks: Optional[int] = None
    partition_mode: str = "static"
    assignment: Optional[dict[str, int]] = None
    control: bool = False  # listener attached: hold open, keep read tracking
    optimism_window: int | None = None  # None: unbounded single-node, 8 multi-node
    transport_seed: int = 0
    transport_max_delay: int = 0
    extra_events: list = field(default_factory=list)  # (time, receiver, WarEvent)

    def effective_seed(self) -> int:
        return self.scenario.seed if self.seed is None else self.seed

    def effective_max_ticks(self) -> int:
        return self.scenario.max_time if self.max_ticks is None else self.max_ticks


@dataclass(slots=True)
class RunResult:
    records: list[TraceRecord]
    final_states: dict[str, object]
    stats: list[dict]
    commit_matrix: dict[tuple[int, int], int]
    gvt_history: list[GvtRound]
    wall_seconds: float
    assignment: dict[str, int]
    repartitions: int = 0

    def trace_lines(self) -> list[str]:
        return [r.encode() for r in self.records]


class Session:
    """A running simulation plus its coordinator-side state."""

    def __init__(self, config: RunConfig):
        if config.partition_mode not in PARTITION_MODES:
            raise ValueError(f"unknown partition mode {config.partition_mode!r}")
        self.config = config
        self.policy = GcPolicy(config.gc_rounds)
        self.history: list[GvtRound] = []
        self.commit_time: float = 0.0  # last applied reclaim threshold
        self.operator_seq = 0
        self.repartitions = 0
        self._started = False
        self._finished = False
        self._paused = False
        self._last_round_at = 0.0
        self.round_requested = False
        self.on_round: Optional[Callable[[GvtRound], None]] = None

        scenario = config.scenario
        seed = config.effective_seed()
        balanced = config.partition_mode != "static"
        self.routing: dict[str, int] = self._initial_assignment(balanced)
        window = config.optimism_window
        if window is None and config.nodes > 1:
            window = 8
        engine_cfg = EngineConfig(
            workers=config.workers,
            seed=seed,
            search=config.search,
            max_ticks=config.effective_max_ticks(),
            gc_rounds=config.gc_rounds,
            gvt_cadence=config.gvt_cadence,
            rotation=balanced,
            track_traffic=balanced,
            optimism_window=window,
        )
        self.transport = (InProcessTransport(config.nodes, seed=config.transport_seed,
                                             max_delay=config.transport_max_delay)
                          if config.nodes > 1 else None)
        self.nodes: list[SimulationNode] = []
        for rank in range(config.nodes):
            node = SimulationNode(
                scenario, engine_cfg, node_id=rank,
                owner_of=self._owner_of,
                send_remote=self._make_sender(rank) if self.transport else None,
            )
            if self.transport is not None:
                node.manager.store.on_op = self._make_store_forwarder(rank)
            self.nodes.append(node)
        # A strictly sequential run cannot see stragglers, so read tracking
        # (and its overhead) is unnecessary; any concurrency or control
        # channel turns it back on.
        sequential = (config.nodes == 1 and config.workers == 1 and not config.control)
        self.nodes[0].manager.store.record_reads = not sequential

    # -- wiring -------------------------------------------------------------

    def _initial_assignment(self, balanced: bool) -> dict[str, int]:
        cfg = self.config
        roster = cfg.scenario.roster
        if cfg.assignment is not None:
            table = dict(cfg.assignment)
            for p in roster:
                table.setdefault(p.name, 0)
            return table
        if cfg.nodes == 1:
            return {p.name: 0 for p in roster}
        if balanced:
            graph = balance.presim_graph(cfg.scenario)
            result = balance.partition(graph, cfg.nodes, bf=1.10)
            return dict(result.part_of)
        return {p.name: stable_hash("part", p.name) % cfg.nodes for p in roster}

    def _owner_of(self, name: str) -> int:
        return self.routing.get(name, 0)

    def _make_sender(self, rank: int):
        transport = self.transport

        def send_remote(dest: int, kind: str, env: EventEnvelope) -> None:
            transport.send(WireMessage(kind, rank, dest, env, time=float(env.key.time)))

        return send_remote

    def _make_store_forwarder(self, rank: int):
        transport = self.transport
        ranks = self.config.nodes

        def on_op(op: tuple) -> None:
            t = float(op[1].time)
            for dest in range(ranks):
                if dest != rank:
                    transport.send(WireMessage("store_op", rank, dest, op, time=t))

        return on_op

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> "Session":
        if self._started:
            return self
        if self.config.workers > 1:
            import sys as _sys

            _sys.setswitchinterval(0.02)  # damp the GIL convoy
        self._started = True
        self._t0 = _time.monotonic()
        for node in self.nodes:
            node.hold_flag = self.config.control
            node.seed_initial_events()
        for time_, receiver, ev in self.config.extra_events:
            self.schedule_operator_event(ev)
        for node in self.nodes:
            node.start_workers()
        return self

    def schedule_operator_event(self, ev: WarEvent) -> EventKey:
        key = EventKey(ev.time, ev.receiver, OPERATOR_SENDER, self.operator_seq)
        self.operator_seq += 1
        self.nodes[0].schedule_event(EventEnvelope(key, ev))
        return key

    # -- transport pump -----------------------------------------------------------

    def poll_all(self) -> int:
        if self.transport is None:
            return 0
        n = 0
        for node in self.nodes:
            with node.delivery_lock:
                msgs = self.transport.poll(node.node_id)
                for msg in msgs:
                    self._dispatch(node, msg)
            n += len(msgs)
        return n

    def _dispatch(self, node: SimulationNode, msg: WireMessage) -> None:
        kind = msg.kind
        if kind in ("event", "anti_event"):
            env = msg.body
            if node.owns(env.key.receiver):
                node.outbox.append(env)
            else:
                # Stale sender routing (mid-migration): forward onward.
                node.stats.forwarded += 1
                node.schedule_event(env)
        elif kind == "store_op":
            for inv in node.manager.store.apply(msg.body, forward=False):
                node.pending_rollbacks.append(inv)
        elif kind == "listener_notice":
            node.hold_flag = bool(msg.body[1])
        elif kind == "migration_payload":
            node.import_lp(msg.body)
        else:
            log.debug("ignoring %s message in in-process session", kind)

    # -- GVT rounds and collection ---------------------------------------------------

    def gvt_round(self) -> GvtRound:
        """One coordinator round: in-flight bound first, then node sweeps.

        Any message sent after the in-flight peek descends from an event
        some node still counts (pending or parked in a worker slot), so the
        folded minimum is a true lower bound.
        """
        in_flight_min = self.transport.pending_min_time() if self.transport else INFINITY
        minima = {node.node_id: node.local_minimum_time() for node in self.nodes}
        rnd = next_round(self.history, minima, in_flight_min)
        self.history.append(rnd)
        # The deferred bound is clamped by the current value: after an
        # injection lowers GVT, collection must not run ahead of it.
        threshold = min(reclaim_threshold(self.history, self.policy), rnd.value)
        if threshold > self.commit_time:
            self.commit_time = threshold
        for node in self.nodes:
            node.gvt_time = rnd.value
            node.collect_garbage(threshold)
            node.processed_since_round = 0
            if node.config.rotation:
                node.queues.rotate(node.queues.rotation_offset + 1)
        if self.config.partition_mode == "balanced+migration":
            self._maybe_repartition()
        if self.on_round is not None:
            self.on_round(rnd)
        return rnd

    def _maybe_repartition(self) -> str:
        vertices: dict[str, int] = {}
        edges: dict[tuple[str, str], int] = {}
        for node in self.nodes:
            v, e = node.reset_window()
            for name, w in v.items():
                vertices[name] = vertices.get(name, 0) + w
            for pair, w in e.items():
                edges[pair] = edges.get(pair, 0) + w
        if not edges or self.config.nodes < 2:
            return "unchanged"
        ratio = balance.cross_partition_ratio(edges, self.routing)
        if ratio <= balance.REPARTITION_THRESHOLD:
            return "unchanged"
        graph = balance.build_interaction_graph(vertices, edges)
        for p in self.config.scenario.roster:
            graph.add_vertex(p.name, 0)
        result = balance.partition(graph, self.config.nodes, bf=1.10)
        moves = [(name, self.routing[name], part)
                 for name, part in sorted(result.part_of.items())
                 if self.routing.get(name) is not None and self.routing[name] != part]
        if not moves:
            return "unchanged"
        self.pause_all()
        try:
            for name, old, new in moves:
                self.migrate_lp(name, old, new)
            self._drain_quiet()
        finally:
            self.resume_all()
        self.repartitions += 1
        log.info("repartitioned: ratio %.3f, moved %d LPs", ratio, len(moves))
        return "repartitioned"

    def migrate_lp(self, name: str, old: int, new: int) -> None:
        """Move one LP's runtime (engine must be paused); world state is
        already replicated, so only queue bookkeeping transfers."""
        if old == new:
            return
        source, dest = self.nodes[old], self.nodes[new]
        self.routing[name] = new
        to_move = [name] + [lp for lp in list(source.lps)
                            if lp != name and root_name(lp) == name]
        for lp_name in to_move:
            payload = source.export_lp(lp_name)
            if payload is None:
                continue
            if self.transport is not None and old != new:
                self.transport.send(WireMessage("migration_payload", old, new, payload,
                                                time=_payload_min_time(payload)))
            else:
                dest.import_lp(payload)

    # -- pause machinery -----------------------------------------------------------------

    def pause_all(self) -> None:
        if self._paused:
            return
        for node in self.nodes:
            node.pause()
        self._drain_quiet()
        self._paused = True

    def resume_all(self) -> None:
        if not self._paused:
            return
        for node in self.nodes:
            node.resume()
        self._paused = False

    def _drain_quiet(self) -> None:
        """Deliver and apply everything in flight (workers are parked)."""
        while True:
            moved = self.poll_all()
            for node in self.nodes:
                moved += node.drain_service_queues()
            if moved == 0 and (self.transport is None or self.transport.in_flight_count() == 0):
                if all(not node.outbox and not node.pending_rollbacks for node in self.nodes):
                    return

    # -- main loop ----------------------------------------------------------------------------

    def _idle(self) -> bool:
        if any(any(node.worker_busy) for node in self.nodes):
            return False
        if any(node.outbox or node.pending_rollbacks for node in self.nodes):
            return False
        if self.transport is not None and self.transport.in_flight_count() > 0:
            return False
        return True

    def pump(self) -> Optional[GvtRound]:
        """One coordinator iteration; returns the round if one was run."""
        for node in self.nodes:
            if node.worker_error is not None:
                raise RuntimeError(f"worker crashed on rank {node.node_id}") from node.worker_error
        self.poll_all()
        due = (sum(node.processed_since_round for node in self.nodes)
               >= self.config.gvt_cadence)
        # Idle rounds are rate limited: back-to-back rounds at quiescence
        # would spin the GC clock at wall speed.
        idle_due = self._idle() and _time.monotonic() - self._last_round_at > 0.005
        if due or idle_due or self.round_requested:
            self.round_requested = False
            self._last_round_at = _time.monotonic()
            return self.gvt_round()
        return None

    def run_until_quiescent(self, max_wall: float = 300.0) -> GvtRound:
        """Pump until a round reports +infinity (no pending work anywhere)."""
        deadline = _time.monotonic() + max_wall
        while _time.monotonic() < deadline:
            rnd = self.pump()
            if rnd is not None and rnd.value == INFINITY:
                return rnd
            _time.sleep(0.0005 if rnd is None else 0)
        raise TimeoutError("simulation did not quiesce within the wall budget")

    def release_hold(self) -> None:
        for node in self.nodes:
            node.hold_flag = False

    def finish(self, max_wall: float = 300.0) -> RunResult:
        if not self._started:
            self.start()
        if self._paused:
            self.resume_all()
        self.run_until_quiescent(max_wall)
        self.release_hold()
        for node in self.nodes:
            node.stop_workers()
        self._drain_quiet()
        for node in self.nodes:
            node.final_flush()
        wall = _time.monotonic() - self._t0
        merged: list[tuple[tuple, TraceRecord]] = []
        for node in self.nodes:
            with node.committed_lock:
                merged.extend(node.committed)
        merged.sort(key=lambda kr: kr[0])
        commit_matrix: dict[tuple[int, int], int] = {}
        stats = []
        for node in self.nodes:
            node.stats.wall_seconds = wall
            stats.append(node.collect_statistics())
            for slot, n in node.commit_matrix.items():
                commit_matrix[slot] = commit_matrix.get(slot, 0) + n
        final = self.nodes[0].final_states()
        if len(self.nodes) > 1:
            for node in self.nodes[1:]:
                other = node.final_states()
                if other != final:
                    raise AssertionError(
                        f"replica divergence between rank 0 and rank {node.node_id}")
        self._finished = True
        return RunResult(
            records=[r for _, r in merged],
            final_states=final,
            stats=stats,
            commit_matrix=commit_matrix,
            gvt_history=list(self.history),
            wall_seconds=wall,
            assignment=dict(self.routing),
            repartitions=self.repartitions,
        )

    # -- operator-facing state ------------------------------------------------------------------

    @property
    def gvt_value(self) -> float:
        return self.history[-1].value if self.history else 0.0

    @property
    def injection_horizon(self) -> float:
        """Oldest virtual time an injected event may target."""
        return self.commit_time

    def alive_counts(self) -> dict[str, int]:
        at = EventKey(int(self.commit_time), "", "", 0)
        return self.nodes[0].manager.alive_counts(at)


def _payload_min_time(payload: dict) -> float:
    pending = payload.get("pending") or []
    return float(min(env.key.time for env in pending)) if pending else INFINITY


def run_simulation(config: RunConfig, max_wall: float = 300.0) -> RunResult:
    """Run a configured simulation start to quiescence and collect results."""
    session = Session(config)
    session.start()
    return session.finish(max_wall)


def sequential_reference(config: RunConfig, max_wall: float = 300.0) -> RunResult:
    """Strictly sequential oracle: one node, one worker, same inputs."""
    cfg = RunConfig(
        scenario=config.scenario,
        workers=1,
        nodes=1,
        search=config.search,
        gc_rounds=config.gc_rounds,
        gvt_cadence=config.gvt_cadence,
        seed=config.seed,
        max_ticks=config.max_ticks,
        partition_mode="static",
        extra_events=list(config.extra_events),
    )
    return run_simulation(cfg, max_wall)
