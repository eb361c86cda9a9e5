"""Multi-process cluster runs: one OS process per rank over sockets.

The CLI process hosts rank 0 (the coordinator) and spawns the remaining
ranks.  Data-plane traffic (events, anti-messages, store replication,
migration payloads, listener notices) is counted for the GVT protocol;
control-plane chatter (round requests/reports, termination tokens) is
not, so coordination itself never disturbs the in-flight bound.

GVT rounds use a two-phase coordinator protocol with send/receive
counting: a round succeeds when two consecutive report sweeps show
per-rank counters unchanged and globally balanced, which certifies an
empty network during the interval; under sustained traffic the
coordinator falls back to a pause-assisted round, which always succeeds.
"""

from __future__ import annotations

import logging
import subprocess
import sys
import threading
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import balance
from .engine import EngineConfig, SimulationNode, root_name
from .gvt import GcPolicy, GvtRound, next_round, reclaim_threshold
from .hexgrid import CubeCoord
from .runner import RunConfig, RunResult
from .scenario import Scenario, load as load_scenario
from .solver import EntityState, WarEvent
from .trace import TraceRecord
from .transport import SocketTransport, TransportError, WireMessage, parse_topology
from .vtime import INFINITY, EventEnvelope, EventKey, Polarity, stable_hash

log = logging.getLogger("warpgrid.cluster")

DATA_KINDS = {"event", "anti_event", "store_op", "migration_payload", "listener_notice"}


# -- wire conversions ---------------------------------------------------------

def key_to_wire(k: EventKey) -> tuple:
    return (k.time, k.receiver, k.sender, k.seq)


def key_from_wire(t: tuple) -> EventKey:
    return EventKey(t[0], t[1], t[2], t[3])


def event_to_wire(ev: Optional[WarEvent]) -> Optional[tuple]:
    if ev is None:
        return None
    pos = tuple(ev.target_pos) if ev.target_pos is not None else None
    return (ev.kind, ev.origin, ev.receiver, ev.time, ev.target_name, pos)


def event_from_wire(t: Optional[tuple]) -> Optional[WarEvent]:
    if t is None:
        return None
    pos = CubeCoord(*t[5]) if t[5] is not None else None
    return WarEvent(t[0], t[1], t[2], t[3], t[4], pos)


def envelope_to_wire(env: EventEnvelope) -> tuple:
    return (key_to_wire(env.key), 1 if env.polarity is Polarity.ANTI else 0,
            event_to_wire(env.payload))


def envelope_from_wire(t: tuple) -> EventEnvelope:
    return EventEnvelope(key_from_wire(t[0]), event_from_wire(t[2]),
                         Polarity.ANTI if t[1] else Polarity.POSITIVE)


def state_to_wire(s: Optional[EntityState]) -> Optional[tuple]:
    if s is None:
        return None
    return (s.side, s.entity_type, s.alive, tuple(s.position), s.weapon_ready,
            s.missile_target, s.shooter)


def state_from_wire(t: Optional[tuple]) -> Optional[EntityState]:
    if t is None:
        return None
    return EntityState(t[0], t[1], t[2], CubeCoord(*t[3]), t[4], t[5], t[6])


def op_to_wire(op: tuple) -> tuple:
    tag = op[0]
    if tag == "un":
        return ("un", key_to_wire(op[1]))
    if tag == "we":
        return ("we", key_to_wire(op[1]), op[2], state_to_wire(op[3]))
    return (tag, key_to_wire(op[1]), op[2], op[3])


def op_from_wire(t: tuple) -> tuple:
    tag = t[0]
    if tag == "un":
        return ("un", key_from_wire(t[1]))
    if tag == "we":
        return ("we", key_from_wire(t[1]), t[2], state_from_wire(t[3]))
    return (tag, key_from_wire(t[1]), t[2], t[3])


def record_to_wire(key_tuple: tuple, r: TraceRecord) -> tuple:
    return (key_tuple, (r.ts, r.kind, r.actor, r.side, tuple(r.pos), r.target, r.destroyed))


def record_from_wire(t: tuple) -> tuple[tuple, TraceRecord]:
    key_tuple, body = t
    return tuple(key_tuple), TraceRecord(body[0], body[1], body[2], body[3],
                                         CubeCoord(*body[4]), body[5], body[6])


def lp_payload_to_wire(payload: dict) -> tuple:
    pend = tuple(envelope_to_wire(e) for e in payload["pending"])
    processed = tuple(
        (key_to_wire(e.key), envelope_to_wire(e.envelope),
         tuple(envelope_to_wire(o) for o in e.outputs),
         tuple((r.ts, r.kind, r.actor, r.side, tuple(r.pos), r.target, r.destroyed)
               for r in e.records),
         e.worker, state_to_wire(e.snapshot), e.origin_node)
        for e in payload["processed"])
    last = key_to_wire(payload["last_key"]) if payload["last_key"] else None
    reads = tuple(
        (tuple(target), lp, key_to_wire(at_key),
         key_to_wire(seen) if seen is not None else None)
        for target, lp, at_key, seen in payload.get("reads", []))
    return (payload["lp_id"], pend, processed, last, reads)


def lp_payload_from_wire(t: tuple) -> dict:
    from .engine import ProcessedEntry

    lp_id, pend, processed, last, reads = t
    entries = []
    for pk, env, outs, recs, worker, snap, origin in processed:
        entries.append(ProcessedEntry(
            key_from_wire(pk), envelope_from_wire(env),
            tuple(envelope_from_wire(o) for o in outs),
            tuple(TraceRecord(r[0], r[1], r[2], r[3], CubeCoord(*r[4]), r[5], r[6])
                  for r in recs),
            worker, state_from_wire(snap), origin))
    return {
        "lp_id": lp_id,
        "pending": [envelope_from_wire(e) for e in pend],
        "processed": entries,
        "last_key": key_from_wire(last) if last else None,
        "reads": [(tuple(target), lp, key_from_wire(at_key),
                   key_from_wire(seen) if seen is not None else None)
                  for target, lp, at_key, seen in reads],
    }


class CountingSocketTransport(SocketTransport):
    """SocketTransport with per-peer send batching; counts data-plane only.

    Frames accumulate in per-peer buffers and go out in one syscall when a
    buffer grows past the flush threshold or when the rank's service loop
    calls flush_all().  Buffered frames count as sent (they are in flight),
    so the GVT counting protocol simply retries until they land.
    """

    FLUSH_BYTES = 32768

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._buffers: dict[int, bytearray] = {peer: bytearray() for peer in self._peers}
        self._sent_to: dict[int, int] = {r: 0 for r in self.topology}
        self._recv_from: dict[int, int] = {r: 0 for r in self.topology}
        self._window_min: float = INFINITY

    def send(self, msg: WireMessage) -> None:
        count = msg.kind in DATA_KINDS
        if msg.destination == self.rank:
            with self._inbox_lock:
                self._inbox.append(msg)
            if count:
                with self._count_lock:
                    self._sent += 1
                    self._sent_to[msg.destination] += 1
                    self._recv_from[msg.source] += 1  # self-delivery is instant
                    if msg.time < self._window_min:
                        self._window_min = msg.time
            return
        conn = self._peers.get(msg.destination)
        if conn is None:
            raise TransportError(f"unknown destination rank {msg.destination}")
        from .transport import encode_frame

        frame = encode_frame(msg)
        with self._send_locks[msg.destination]:
            buf = self._buffers[msg.destination]
            buf += frame
            if len(buf) >= self.FLUSH_BYTES:
                conn.sendall(buf)
                buf.clear()
        if count:
            with self._count_lock:
                self._sent += 1
                self._sent_to[msg.destination] += 1
                if msg.time < self._window_min:
                    self._window_min = msg.time

    def flush_all(self) -> None:
        for peer, conn in self._peers.items():
            with self._send_locks[peer]:
                buf = self._buffers[peer]
                if buf:
                    conn.sendall(buf)
                    buf.clear()

    def poll(self, rank=None):
        with self._inbox_lock:
            out = self._inbox
            self._inbox = []
        with self._count_lock:
            for m in out:
                if m.kind in DATA_KINDS and m.source != self.rank:
                    self._received += 1
                    self._recv_from[m.source] += 1
        return out

    def sweep_counts(self) -> tuple[dict[int, int], dict[int, int], float]:
        """Per-destination sent, per-source received, and the minimum
        virtual time sent since the previous sweep (window then resets)."""
        with self._count_lock:
            window = self._window_min
            self._window_min = INFINITY
            return dict(self._sent_to), dict(self._recv_from), window


@dataclass(slots=True)
class RankContext:
    rank: int
    node: SimulationNode
    transport: CountingSocketTransport
    routing: dict[str, int]
    scenario: Scenario
    config: RunConfig
    control_inbox: list = field(default_factory=list)
    control_lock: object = field(default_factory=threading.Lock)
    prev_sent: dict = field(default_factory=dict)
    done: bool = False


def build_rank(rank: int, topology: dict, scenario: Scenario, config: RunConfig,
               assignment: dict[str, int]) -> RankContext:
    routing = dict(assignment)
    transport = CountingSocketTransport(rank, topology)
    window = config.optimism_window if config.optimism_window is not None else 8
    engine_cfg = EngineConfig(
        workers=config.workers,
        seed=config.effective_seed(),
        search=config.search,
        max_ticks=config.effective_max_ticks(),
        gc_rounds=config.gc_rounds,
        gvt_cadence=config.gvt_cadence,
        rotation=config.partition_mode != "static",
        track_traffic=config.partition_mode != "static",
        optimism_window=window,
    )

    def send_remote(dest: int, kind: str, env: EventEnvelope) -> None:
        transport.send(WireMessage(kind, rank, dest, envelope_to_wire(env),
                                   time=float(env.key.time)))

    node = SimulationNode(scenario, engine_cfg, node_id=rank,
                          owner_of=lambda name: routing.get(name, 0),
                          send_remote=send_remote)

    def on_op(op: tuple) -> None:
        wire = op_to_wire(op)
        t = float(op[1].time)
        for dest in topology:
            if dest != rank:
                transport.send(WireMessage("store_op", rank, dest, wire, time=t))

    node.manager.store.on_op = on_op
    ctx = RankContext(rank, node, transport, routing, scenario, config)
    node.poll_hook = lambda: dispatch_messages(ctx)
    return ctx


def dispatch_messages(ctx: RankContext) -> int:
    """Poll and apply inbound traffic; control messages queue for the loop.

    Callable from any thread (workers pump it through the node poll hook);
    application is serialized by the node delivery lock.
    """
    node = ctx.node
    ctx.transport.flush_all()
    with node.delivery_lock:
        msgs = ctx.transport.poll()
        for msg in msgs:
            if msg.kind in ("event", "anti_event"):
                env = envelope_from_wire(msg.body)
                if node.owns(env.key.receiver):
                    node.outbox.append(env)
                else:
                    node.stats.forwarded += 1
                    node.schedule_event(env)
            elif msg.kind == "store_op":
                for inv in node.manager.store.apply(op_from_wire(msg.body), forward=False):
                    node.pending_rollbacks.append(inv)
            elif msg.kind == "migration_payload":
                node.import_lp(lp_payload_from_wire(msg.body))
            elif msg.kind == "listener_notice":
                node.hold_flag = bool(msg.body[1])
            else:
                with ctx.control_lock:
                    ctx.control_inbox.append(msg)
    return len(msgs)


def take_control(ctx: RankContext) -> list:
    with ctx.control_lock:
        out = ctx.control_inbox
        ctx.control_inbox = []
    return out


def requeue_control(ctx: RankContext, msgs: list) -> None:
    if msgs:
        with ctx.control_lock:
            ctx.control_inbox = msgs + ctx.control_inbox


def _collect_reports(ctx: RankContext, rid: int, attempt: int, ranks: int,
                     timeout: float = 10.0) -> Optional[dict]:
    """Coordinator: gather one sweep of rank reports (self included)."""
    reports = {0: _local_report(ctx)}
    deadline = _time.monotonic() + timeout
    for dest in range(1, ranks):
        ctx.transport.send(WireMessage("gvt_control", 0, dest, ("req", rid, attempt)))
    while len(reports) < ranks:
        dispatch_messages(ctx)
        pending = []
        for msg in take_control(ctx):
            body = msg.body
            if body[0] == "rep" and body[1] == rid and body[2] == attempt:
                reports[msg.source] = body[3]
            else:
                pending.append(msg)
        requeue_control(ctx, pending)
        if _time.monotonic() > deadline:
            return None
        _time.sleep(0.0005)
    return reports


def _local_report(ctx: RankContext) -> tuple:
    m = ctx.node.local_minimum_time()
    sent_to, recv_from, window = ctx.transport.sweep_counts()
    clean = not ctx.node.outbox and not ctx.node.pending_rollbacks
    return (None if m == INFINITY else m,
            sent_to, recv_from,
            None if window == INFINITY else window,
            ctx.node.processed_since_round, ctx.node.hold_flag, clean)


def coordinator_round(ctx: RankContext, history: list[GvtRound], ranks: int,
                      policy: GcPolicy, rotate: bool,
                      max_attempts: int = 10) -> Optional[tuple[GvtRound, bool]]:
    """Run one GVT round; returns (round, any_hold), or None when aborted.

    A sweep is usable when, for every rank pair, the receiver's count this
    sweep covers the sender's count from the previous sweep: with per-pair
    FIFO delivery that certifies every message sent before the previous
    sweep has landed.  Anything newer is covered by the senders' reported
    window minima, so the folded value is a true lower bound even while
    traffic keeps flowing.
    """
    rid = len(history) + 1
    for attempt in range(max_attempts):
        outcome = _sweep(ctx, rid, attempt, ranks)
        if outcome is None:
            log.warning("GVT round %d aborted: rank timeout", rid)
            return None
        reports, covered = outcome
        if covered:
            minima = {r: (INFINITY if reports[r][0] is None else reports[r][0])
                      for r in range(ranks)}
            windows = [INFINITY if reports[r][3] is None else reports[r][3]
                       for r in range(ranks)]
            holds = any(reports[r][5] for r in range(ranks))
            rnd = _apply_round(ctx, history, minima, min(windows), policy, rotate, ranks)
            return rnd, holds
        _time.sleep(0.002)
    log.warning("GVT round %d aborted: counts never covered", rid)
    return None


def _sweep(ctx: RankContext, rid: int, attempt: int, ranks: int):
    """One report collection; returns (reports, covered-vs-previous-sweep)."""
    reports = _collect_reports(ctx, rid, attempt, ranks)
    if reports is None:
        return None
    sent_now = {(i, j): reports[i][1].get(j, 0)
                for i in range(ranks) for j in range(ranks) if i != j}
    covered = all(reports[j][2].get(i, 0) >= ctx.prev_sent.get((i, j), 0)
                  for i in range(ranks) for j in range(ranks) if i != j)
    ctx.prev_sent = sent_now
    return reports, covered


def _apply_round(ctx: RankContext, history: list[GvtRound], minima: dict,
                 in_flight_min: float, policy: GcPolicy, rotate: bool,
                 ranks: int) -> GvtRound:
    rnd = next_round(history, minima, in_flight_min)
    history.append(rnd)
    threshold = min(reclaim_threshold(history, policy), rnd.value)
    for dest in range(1, ranks):
        ctx.transport.send(WireMessage(
            "gvt_control", 0, dest,
            ("set", rnd.round_index, None if rnd.value == INFINITY else rnd.value,
             threshold, rotate)))
    _member_apply_set(ctx, rnd.value, threshold, rotate)
    return rnd


def _member_apply_set(ctx: RankContext, value: Optional[float], threshold: float,
                      rotate: bool) -> None:
    if value is not None:
        ctx.node.gvt_time = value
    else:
        ctx.node.gvt_time = INFINITY
    ctx.node.collect_garbage(threshold)
    ctx.node.processed_since_round = 0
    if rotate:
        ctx.node.queues.rotate(ctx.node.queues.rotation_offset + 1)


def pause_cluster(ctx: RankContext, ranks: int) -> None:
    ctx.node.pause()
    for dest in range(1, ranks):
        ctx.transport.send(WireMessage("gvt_control", 0, dest, ("pause",)))
    _await_acks(ctx, ranks, "paused")
    _drain_cluster(ctx, ranks)


def resume_cluster(ctx: RankContext, ranks: int) -> None:
    for dest in range(1, ranks):
        ctx.transport.send(WireMessage("gvt_control", 0, dest, ("resume",)))
    _await_acks(ctx, ranks, "resumed")
    ctx.node.resume()


def _await_acks(ctx: RankContext, ranks: int, what: str, timeout: float = 15.0) -> None:
    got = {0}
    deadline = _time.monotonic() + timeout
    while len(got) < ranks and _time.monotonic() < deadline:
        dispatch_messages(ctx)
        pending = []
        for msg in take_control(ctx):
            if msg.body[0] == "ack" and msg.body[1] == what:
                got.add(msg.source)
            else:
                pending.append(msg)
        requeue_control(ctx, pending)
        _time.sleep(0.0005)
    if len(got) < ranks:
        raise TransportError(f"cluster {what} ack timeout")


_drain_sweep_counter = [0]


def _drain_cluster(ctx: RankContext, ranks: int) -> None:
    """With all ranks paused, pump until every pair's receive count covers
    its send count across two stable sweeps and every rank has applied its
    backlog (workers are parked, so nothing new is generated)."""
    prev_sent = None
    while True:
        dispatch_messages(ctx)
        ctx.node.drain_service_queues()
        _drain_sweep_counter[0] += 1
        outcome = _sweep(ctx, -1, _drain_sweep_counter[0], ranks)
        if outcome is None:
            raise TransportError("drain timeout")
        reports, _ = outcome
        sent_now = ctx.prev_sent
        complete = all(reports[j][2].get(i, 0) >= sent_now.get((i, j), 0)
                       for i in range(ranks) for j in range(ranks) if i != j)
        clean = all(reports[r][6] for r in range(ranks))
        if complete and clean and prev_sent == sent_now:
            return
        prev_sent = sent_now
        _time.sleep(0.001)


def run_coordinator(ctx: RankContext, ranks: int) -> RunResult:
    sys.setswitchinterval(0.02)  # damp the GIL convoy between worker threads
    cfg = ctx.config
    policy = GcPolicy(cfg.gc_rounds)
    history: list[GvtRound] = []
    rotate = cfg.partition_mode != "static"
    node = ctx.node
    node.hold_flag = cfg.control
    node.seed_initial_events()
    node.start_workers()
    t0 = _time.monotonic()
    last_round = 0.0
    repartitions = 0
    while True:
        if node.worker_error is not None:
            raise RuntimeError("worker crashed on rank 0") from node.worker_error
        dispatch_messages(ctx)
        now = _time.monotonic()
        if node.processed_since_round >= cfg.gvt_cadence or now - last_round > 0.015:
            outcome = coordinator_round(ctx, history, ranks, policy, rotate)
            last_round = _time.monotonic()
            if outcome is not None:
                rnd, any_hold = outcome
                if cfg.partition_mode == "balanced+migration":
                    if _maybe_repartition_cluster(ctx, ranks):
                        repartitions += 1
                if rnd.value == INFINITY and not any_hold:
                    break
        else:
            _time.sleep(0.001)
    # Termination: collect traces and statistics from every rank.
    for dest in range(1, ranks):
        ctx.transport.send(WireMessage("termination_token", 0, dest, ("term",)))
    node.stop_workers()
    node.final_flush()
    merged = list(node.committed)
    stats = [None] * ranks
    matrices = [None] * ranks
    node.stats.wall_seconds = _time.monotonic() - t0
    stats[0] = node.collect_statistics()
    matrices[0] = dict(node.commit_matrix)
    waiting = set(range(1, ranks))
    deadline = _time.monotonic() + 60
    while waiting and _time.monotonic() < deadline:
        dispatch_messages(ctx)
        pending = []
        for msg in take_control(ctx):
            body = msg.body
            if body[0] == "trace":
                for item in body[1]:
                    merged.append(record_from_wire(item))
            elif body[0] == "stats":
                stats[msg.source] = dict(body[1])
                matrices[msg.source] = {tuple(k): v for k, v in body[2].items()}
                waiting.discard(msg.source)
            else:
                pending.append(msg)
        requeue_control(ctx, pending)
        _time.sleep(0.001)
    if waiting:
        raise TransportError(f"missing final reports from ranks {sorted(waiting)}")
    merged.sort(key=lambda kr: kr[0])
    commit_matrix: dict[tuple[int, int], int] = {}
    for m in matrices:
        for slot, n in (m or {}).items():
            commit_matrix[slot] = commit_matrix.get(slot, 0) + n
    wall = _time.monotonic() - t0
    for snap in stats:
        if snap is not None:
            snap["wall_seconds"] = wall
    return RunResult(
        records=[r for _, r in merged],
        final_states=node.final_states(),
        stats=[s for s in stats if s is not None],
        commit_matrix=commit_matrix,
        gvt_history=history,
        wall_seconds=wall,
        assignment=dict(ctx.routing),
        repartitions=repartitions,
    )


def _maybe_repartition_cluster(ctx: RankContext, ranks: int) -> bool:
    vertices, edges = ctx.node.reset_window()
    for dest in range(1, ranks):
        ctx.transport.send(WireMessage("gvt_control", 0, dest, ("win_req",)))
    got = {0}
    deadline = _time.monotonic() + 10
    while len(got) < ranks and _time.monotonic() < deadline:
        dispatch_messages(ctx)
        pending = []
        for msg in ctx.control_inbox:
            if msg.body[0] == "win":
                for name, w in msg.body[1].items():
                    vertices[name] = vertices.get(name, 0) + w
                for pair, w in msg.body[2].items():
                    pair = tuple(pair)
                    edges[pair] = edges.get(pair, 0) + w
                got.add(msg.source)
            else:
                pending.append(msg)
        ctx.control_inbox[:] = pending
        _time.sleep(0.0005)
    if not edges:
        return False
    ratio = balance.cross_partition_ratio(edges, ctx.routing)
    if ratio <= balance.REPARTITION_THRESHOLD:
        return False
    graph = balance.build_interaction_graph(vertices, edges)
    for p in ctx.scenario.roster:
        graph.add_vertex(p.name, 0)
    result = balance.partition(graph, ranks, bf=1.10)
    moves = [(name, ctx.routing[name], part) for name, part in sorted(result.part_of.items())
             if ctx.routing.get(name) is not None and ctx.routing[name] != part]
    if not moves:
        return False
    pause_cluster(ctx, ranks)
    new_routing = dict(ctx.routing)
    for name, _, part in moves:
        new_routing[name] = part
    for dest in range(1, ranks):
        ctx.transport.send(WireMessage("gvt_control", 0, dest, ("route", new_routing)))
    ctx.routing.clear()
    ctx.routing.update(new_routing)
    for name, old, new in moves:
        if old == 0:
            _export_and_send(ctx, name, new)
        else:
            ctx.transport.send(WireMessage("gvt_control", 0, old, ("mig", name, new)))
    _drain_cluster(ctx, ranks)
    resume_cluster(ctx, ranks)
    log.info("cluster repartitioned: ratio %.3f, %d moves", ratio, len(moves))
    return True


def _export_and_send(ctx: RankContext, name: str, dest: int) -> None:
    node = ctx.node
    to_move = [name] + [lp for lp in list(node.lps) if lp != name and root_name(lp) == name]
    for lp_name in to_move:
        payload = node.export_lp(lp_name)
        if payload is None:
            continue
        if dest == ctx.rank:
            node.import_lp(payload)
        else:
            ctx.transport.send(WireMessage("migration_payload", ctx.rank, dest,
                                           lp_payload_to_wire(payload),
                                           time=_payload_time(payload)))


def _payload_time(payload: dict) -> float:
    pending = payload.get("pending") or []
    return float(min(env.key.time for env in pending)) if pending else INFINITY


def run_member(ctx: RankContext) -> None:
    """Event loop for ranks > 0: serve control messages until termination."""
    sys.setswitchinterval(0.02)
    node = ctx.node
    node.hold_flag = ctx.config.control
    node.seed_initial_events()
    node.start_workers()
    while not ctx.done:
        if node.worker_error is not None:
            raise RuntimeError(f"worker crashed on rank {ctx.rank}") from node.worker_error
        dispatch_messages(ctx)
        if not node.running_gate.is_set():
            node.drain_service_queues()
        pending = []
        for msg in take_control(ctx):
            self_handled = _member_handle(ctx, msg)
            if not self_handled:
                pending.append(msg)
        requeue_control(ctx, pending)
        _time.sleep(0.0005)
    node.stop_workers()
    node.final_flush()
    with node.committed_lock:
        chunks = [record_to_wire(k, r) for k, r in node.committed]
    for i in range(0, max(len(chunks), 1), 4000):
        batch = chunks[i:i + 4000]
        if batch or i == 0:
            ctx.transport.send(WireMessage("termination_token", ctx.rank, 0, ("trace", batch)))
    matrix = {k: v for k, v in node.commit_matrix.items()}
    ctx.transport.send(WireMessage("termination_token", ctx.rank, 0,
                                   ("stats", node.collect_statistics(), matrix)))
    ctx.transport.flush_all()
    _time.sleep(0.2)
    ctx.transport.close()


def _member_handle(ctx: RankContext, msg: WireMessage) -> bool:
    body = msg.body
    tag = body[0]
    node = ctx.node
    if tag == "req":
        ctx.transport.send(WireMessage("gvt_control", ctx.rank, 0,
                                       ("rep", body[1], body[2], _local_report(ctx))))
        return True
    if tag == "set":
        _member_apply_set(ctx, body[2], body[3], body[4])
        return True
    if tag == "pause":
        node.pause()
        ctx.transport.send(WireMessage("gvt_control", ctx.rank, 0, ("ack", "paused")))
        return True
    if tag == "resume":
        node.resume()
        ctx.transport.send(WireMessage("gvt_control", ctx.rank, 0, ("ack", "resumed")))
        return True
    if tag == "win_req":
        v, e = node.reset_window()
        ctx.transport.send(WireMessage("gvt_control", ctx.rank, 0, ("win", v, e)))
        return True
    if tag == "route":
        ctx.routing.clear()
        ctx.routing.update(body[1])
        return True
    if tag == "mig":
        _export_and_send(ctx, body[1], body[2])
        return True
    if tag == "term":
        ctx.done = True
        return True
    return False


# -- process orchestration ----------------------------------------------------------


def default_assignment(scenario: Scenario, config: RunConfig, ranks: int) -> dict[str, int]:
    if config.assignment is not None:
        table = dict(config.assignment)
        for p in scenario.roster:
            table.setdefault(p.name, 0)
        return table
    if config.partition_mode != "static":
        graph = balance.presim_graph(scenario)
        return dict(balance.partition(graph, ranks, bf=1.10).part_of)
    return {p.name: stable_hash("part", p.name) % ranks for p in scenario.roster}


def run_cluster(config: RunConfig, topology_path: str | Path, scenario_path: str | Path,
                assignment_path: Optional[str | Path] = None) -> RunResult:
    """Spawn ranks 1..M-1 and run rank 0 in-process; returns merged results."""
    topology = parse_topology(topology_path)
    ranks = len(topology)
    scenario = load_scenario(scenario_path)
    assignment = (balance.load_assignment(assignment_path) if assignment_path
                  else default_assignment(scenario, config, ranks))
    assignment_file = Path(str(topology_path) + ".assign")
    balance.save_assignment(assignment, assignment_file)
    procs = []
    try:
        for rank in range(1, ranks):
            cmd = [sys.executable, "-m", "warpgrid.cli", "_rank",
                   "--rank", str(rank),
                   "--topology", str(topology_path),
                   "--scenario", str(scenario_path),
                   "--assignment", str(assignment_file),
                   "--workers", str(config.workers),
                   "--search", config.search,
                   "--gc-rounds", str(config.gc_rounds),
                   "--gvt-cadence", str(config.gvt_cadence),
                   "--seed", str(config.effective_seed()),
                   "--max-ticks", str(config.effective_max_ticks()),
                   "--partition", config.partition_mode]
            procs.append(subprocess.Popen(cmd))
        ctx = build_rank(0, topology, scenario, config, assignment)
        result = run_coordinator(ctx, ranks)
        for p in procs:
            p.wait(timeout=30)
        ctx.transport.close()
        return result
    finally:
        for p in procs:
            if p.poll() is None:
                p.kill()


def rank_entry(args) -> int:
    """Hidden CLI entry for spawned member ranks."""
    topology = parse_topology(args.topology)
    scenario = load_scenario(args.scenario)
    assignment = balance.load_assignment(args.assignment)
    config = RunConfig(
        scenario=scenario,
        workers=args.workers,
        nodes=len(topology),
        search=args.search,
        gc_rounds=args.gc_rounds,
        gvt_cadence=args.gvt_cadence,
        seed=args.seed,
        max_ticks=args.max_ticks,
        partition_mode=args.partition,
        assignment=assignment,
    )
    ctx = build_rank(args.rank, topology, scenario, config, assignment)
    run_member(ctx)
    return 0
