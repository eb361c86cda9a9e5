"""Time Warp kernel: pending-event set, workers, rollback, statistics.

Each logical process keeps its pending input events sorted by key and owns
at most one entry in the schedule queues at a time (its current minimum);
processing an event re-inserts the LP's next pending event.  Workers draw
from queue (worker_index + rotation_offset) mod N, which is how the load
balancer rotates queue ownership.

Concurrency is structured to be deadlock-free by construction:

* a worker holds at most one LP lock at a time; events and anti-messages
  generated while holding it are appended to a node-level outbox and
  delivered by workers between steps, never by nested locking;
* world-store invalidations never trigger rollback inline -- they enqueue
  (lp, key) repair requests drained by workers between steps;
* any key a worker has taken out of a visible container (schedule queue,
  outbox, repair queue) is parked in that worker's slot first, so a
  virtual-time lower bound computed under the delivery and queue locks
  can never miss an in-progress event.

Rollback undoes the journaled world effects of each undone event, emits
anti-messages for its sent outputs, and returns the events to the pending
set; re-execution is then indistinguishable from having processed them in
order.
"""

from __future__ import annotations

import heapq
import logging
import threading
import time as _time
from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .scenario import Scenario
from .solver import (
    HandlerContext,
    SolverConfig,
    handle_event,
    initialize_entities,
    initialize_lp,
)
from .trace import TraceRecord
from .vtime import INFINITY, EventEnvelope, EventKey, Polarity, stable_hash
from .worldstore import WorldStore

log = logging.getLogger("warpgrid.engine")

INIT_SENDER = "__init__"
OPERATOR_SENDER = "__operator__"


@dataclass(slots=True)
class EngineConfig:
    workers: int = 1
    queues: int = 0  # 0 -> same as workers
    seed: int = 0
    search: str = "neighbor"
    max_ticks: int = 100
    gc_rounds: int = 4
    gvt_cadence: int = 1000
    missile_speed: int = 4
    rotation: bool = False
    track_traffic: bool = False
    # Ticks beyond the last known GVT a worker may speculate; None is
    # unbounded.  Multi-node runs throttle optimism so replication lag
    # cannot snowball into rollback storms.
    optimism_window: int | None = None

    def queue_count(self) -> int:
        return self.queues or self.workers


@dataclass(slots=True)
class ProcessedEntry:
    key: EventKey
    envelope: EventEnvelope
    outputs: tuple[EventEnvelope, ...]
    records: tuple[TraceRecord, ...]
    worker: int
    snapshot: object
    origin_node: int = 0  # rank whose worker processed it (commit attribution)


class LPRuntime:
    """Per-LP bookkeeping: pending events, processed history, snapshots."""

    __slots__ = ("lp_id", "lock", "pending_keys", "pending", "processed",
                 "last_processed_key", "scheduled_key", "queue_index")

    def __init__(self, lp_id: str, queue_index: int):
        self.lp_id = lp_id
        self.lock = threading.Lock()
        self.pending_keys: list[EventKey] = []
        self.pending: dict[EventKey, EventEnvelope] = {}
        self.processed: list[ProcessedEntry] = []
        self.last_processed_key: Optional[EventKey] = None
        self.scheduled_key: Optional[EventKey] = None
        self.queue_index = queue_index

    def insert_pending(self, env: EventEnvelope) -> None:
        if env.key in self.pending:
            raise AssertionError(f"duplicate event key {env.key}")
        insort(self.pending_keys, env.key)
        self.pending[env.key] = env

    def remove_pending(self, key: EventKey) -> Optional[EventEnvelope]:
        env = self.pending.pop(key, None)
        if env is not None:
            i = bisect_left(self.pending_keys, key)
            del self.pending_keys[i]
        return env

    def min_pending(self) -> Optional[EventKey]:
        return self.pending_keys[0] if self.pending_keys else None

    def state_history(self) -> list[tuple[EventKey, object]]:
        return [(e.key, e.snapshot) for e in self.processed]


class ScheduleQueueSet:
    """N min-heaps of (key, lp) entries with worker-to-queue rotation."""

    def __init__(self, n: int):
        self.n = n
        self.heaps: list[list] = [[] for _ in range(n)]
        self.locks = [threading.Lock() for _ in range(n)]
        self.rotation_offset = 0

    def queue_for(self, worker_index: int) -> int:
        return (worker_index + self.rotation_offset) % self.n

    def rotate(self, k: int) -> int:
        self.rotation_offset = k % self.n
        return self.rotation_offset


class Statistics:
    """Per-worker counters plus node-level tallies."""

    def __init__(self, workers: int):
        self.processed = [0] * workers
        self.committed = [0] * workers
        self.undone = [0] * workers
        self.rollback_calls = [0] * workers
        self.antis_sent = [0] * workers
        self.routing_errors = 0
        self.migrated_out = 0
        self.migrated_in = 0
        self.forwarded = 0
        self.wall_seconds = 0.0

    def snapshot(self) -> dict:
        return {
            "processed": list(self.processed),
            "committed": list(self.committed),
            "undone": list(self.undone),
            "rollback_calls": list(self.rollback_calls),
            "antis_sent": list(self.antis_sent),
            "routing_errors": self.routing_errors,
            "migrated_out": self.migrated_out,
            "migrated_in": self.migrated_in,
            "forwarded": self.forwarded,
            "wall_seconds": self.wall_seconds,
        }


class TerminationStatus:
    RUNNING = "running"
    TERMINABLE = "terminable"


class SimulationNode:
    """One rank of the simulation: owns a subset of LPs and runs workers.

    `send_remote` (when set) receives (destination_rank, kind, envelope)
    for events addressed to LPs owned elsewhere; the cluster runner wires
    it together with store-op replication.  A single-node engine leaves it
    unset.
    """

    def __init__(self, scenario: Scenario, config: EngineConfig,
                 node_id: int = 0,
                 owner_of: Optional[Callable[[str], int]] = None,
                 send_remote: Optional[Callable[[int, str, EventEnvelope], None]] = None,
                 store: Optional[WorldStore] = None):
        self.scenario = scenario
        self.config = config
        self.node_id = node_id
        self.owner_of = owner_of or (lambda name: 0)
        self.send_remote = send_remote
        self.manager = initialize_entities(scenario, store)
        self.solver_config = SolverConfig(search=config.search,
                                          missile_speed=config.missile_speed,
                                          seed=config.seed)
        self.queues = ScheduleQueueSet(config.queue_count())
        self.stats = Statistics(config.workers)
        self.lps: dict[str, LPRuntime] = {}
        self.lps_lock = threading.Lock()
        self.delivery_lock = threading.Lock()
        self.outbox: deque[EventEnvelope] = deque()
        self.pending_rollbacks: deque[tuple[str, EventKey]] = deque()
        self.pending_cancellation: set[EventKey] = set()
        self.worker_slots: list[Optional[EventKey]] = [None] * config.workers
        self.worker_busy = [False] * config.workers
        self.hold_flag = False
        self.paused = threading.Event()
        self.running_gate = threading.Event()
        self.running_gate.set()
        self.stop_event = threading.Event()
        self.committed: list[tuple[tuple, TraceRecord]] = []
        self.committed_lock = threading.Lock()
        self.commit_matrix: dict[tuple[int, int], int] = {}
        self.processed_since_round = 0
        self.gvt_time: float = 0.0  # latest known GVT round value
        self.gc_horizon = 0  # oldest retained virtual time
        self.worker_error: Optional[BaseException] = None
        # Optional transport pump; cluster ranks set this so workers apply
        # inbound replication promptly instead of waiting on the main loop.
        # Throttled: polling has syscall cost, lag tolerance is ~1ms.
        self.poll_hook: Optional[Callable[[], int]] = None
        self._last_poll = 0.0
        # Traffic window for the balancer: per-LP processed counts and
        # inter-LP exchanged-event counts since the last window reset.
        self.window_vertices: dict[str, int] = {}
        self.window_edges: dict[tuple[str, str], int] = {}
        self.window_lock = threading.Lock()
        self._threads: list[threading.Thread] = []

    # -- LP management ------------------------------------------------------

    def owns(self, name: str) -> bool:
        return self.owner_of(root_name(name)) == self.node_id

    def _lp(self, name: str) -> LPRuntime:
        lp = self.lps.get(name)
        if lp is None:
            with self.lps_lock:
                lp = self.lps.get(name)
                if lp is None:
                    qidx = stable_hash("q", name) % self.queues.n
                    lp = LPRuntime(name, qidx)
                    self.lps[name] = lp
        return lp

    def seed_initial_events(self) -> int:
        """Schedule each owned roster LP's first events; returns the count."""
        n = 0
        for profile in self.scenario.roster:
            if not self.owns(profile.name):
                continue
            for i, ev in enumerate(initialize_lp(profile)):
                key = EventKey(ev.time, ev.receiver, INIT_SENDER, i)
                self.schedule_event(EventEnvelope(key, ev))
                n += 1
        return n

    def _valid_receiver(self, name: str) -> bool:
        return root_name(name) in self.manager.profiles

    # -- event intake ---------------------------------------------------------

    def schedule_event(self, env: EventEnvelope) -> bool:
        """Route an envelope; local ones go to the outbox for delivery."""
        receiver = env.key.receiver
        if not self._valid_receiver(receiver):
            self.stats.routing_errors += 1
            log.warning("dropping envelope for unknown receiver %r", receiver)
            return False
        owner = self.owner_of(root_name(receiver))
        if owner != self.node_id:
            if self.send_remote is None:
                self.stats.routing_errors += 1
                log.warning("no transport for remote receiver %r", receiver)
                return False
            kind = "anti_event" if env.polarity is Polarity.ANTI else "event"
            self.send_remote(owner, kind, env)
            return True
        self.outbox.append(env)
        return True

    def deliver_local(self, env: EventEnvelope, worker_index: int = 0) -> None:
        """Insert an envelope into its LP's pending set (outbox drain).

        Anti-messages resolve entirely here: they annihilate a matching
        pending positive, or roll the LP back and annihilate the returned
        positive, or are remembered for a positive still in flight.  The
        pending set therefore only ever holds positives, so a re-sent
        positive with the same key can never collide with a parked anti.
        """
        lp = self._lp(env.key.receiver)
        with lp.lock:
            if env.polarity is Polarity.ANTI:
                matched = lp.remove_pending(env.key)
                if matched is not None:
                    self._refresh_slot(lp)
                    return
                if (lp.last_processed_key is not None
                        and env.key <= lp.last_processed_key):
                    self.rollback(lp, env.key, worker_index)
                    if lp.remove_pending(env.key) is None:
                        self.pending_cancellation.add(env.key)
                    self._refresh_slot(lp)
                else:
                    self.pending_cancellation.add(env.key)
                return
            if env.key in self.pending_cancellation:
                self.pending_cancellation.discard(env.key)
                return
            lp.insert_pending(env)
            self._refresh_slot(lp)

    def _refresh_slot(self, lp: LPRuntime) -> None:
        """Keep the LP's schedule entry equal to its minimum pending key."""
        head = lp.min_pending()
        if head is None:
            lp.scheduled_key = None
            return
        if (lp.scheduled_key is None or head < lp.scheduled_key
                or lp.scheduled_key not in lp.pending):
            lp.scheduled_key = head
            qidx = lp.queue_index
            with self.queues.locks[qidx]:
                heapq.heappush(self.queues.heaps[qidx], (head, lp.lp_id))

    def _force_refresh(self, lp: LPRuntime) -> None:
        """Re-issue the schedule entry even when the head key is unchanged
        (used after a popped entry was consumed without processing)."""
        lp.scheduled_key = None
        self._refresh_slot(lp)

    # -- worker machinery ---------------------------------------------------------

    def next_scheduled_event(self, worker_index: int) -> Optional[EventEnvelope]:
        """Pop the minimum valid envelope from this worker's rotated queue.

        The in-progress slot is set inside the queue lock so a concurrent
        virtual-time sweep cannot miss the popped event.
        """
        qidx = self.queues.queue_for(worker_index)
        heap = self.queues.heaps[qidx]
        window = self.config.optimism_window
        with self.queues.locks[qidx]:
            while heap:
                key, lp_id = heap[0]
                lp = self.lps.get(lp_id)
                if lp is None or lp.scheduled_key != key:
                    heapq.heappop(heap)  # stale entry
                    continue
                if window is not None and key.time > self.gvt_time + window:
                    return None  # beyond the optimism window; wait for GVT
                heapq.heappop(heap)
                self.worker_slots[worker_index] = key
                return lp.pending.get(key)
        return None

    def drain_service_queues(self, worker_index: int = 0, limit: int = 512) -> int:
        """Deliver outbox envelopes and apply queued rollback repairs.

        Delivery holds the delivery lock for the whole outbox batch: a
        positive, its anti, and a re-sent positive for the same key must
        reach the LP in send order, which concurrent drainers would break.
        Rollback repairs are order-independent and run concurrently; items
        are parked in the worker slot between being popped and becoming
        visible again, keeping the virtual-time bound gapless.
        """
        done = 0
        if self.poll_hook is not None:
            now = _time.monotonic()
            if now - self._last_poll > 0.001:
                self._last_poll = now
                self.poll_hook()
        if self.outbox and self.delivery_lock.acquire(blocking=False):
            try:
                while done < limit:
                    try:
                        env = self.outbox.popleft()
                    except IndexError:
                        break
                    self.worker_slots[worker_index] = env.key
                    self.deliver_local(env, worker_index)
                    self.worker_slots[worker_index] = None
                    done += 1
            finally:
                self.worker_slots[worker_index] = None
                self.delivery_lock.release()
        while True:
            with self.delivery_lock:
                try:
                    lp_id, key = self.pending_rollbacks.popleft()
                except IndexError:
                    break
                self.worker_slots[worker_index] = key
            lp = self.lps.get(lp_id)
            if lp is not None:
                with lp.lock:
                    if lp.last_processed_key is not None and key <= lp.last_processed_key:
                        self.rollback(lp, key, worker_index)
                        self._refresh_slot(lp)
            self.worker_slots[worker_index] = None
            done += 1
        return done

    def process_step(self, env: EventEnvelope, worker_index: int) -> list[EventEnvelope]:
        """Process one drawn envelope; returns the newly sent envelopes."""
        lp = self._lp(env.key.receiver)
        sent: list[EventEnvelope] = []
        try:
            with lp.lock:
                if lp.pending.get(env.key) is not env:
                    # Annihilated or replaced between pop and processing.
                    self._force_refresh(lp)
                    return sent
                lp.remove_pending(env.key)
                last = lp.last_processed_key
                if last is not None and env.key < last:
                    self.rollback(lp, env.key, worker_index)
                if env.polarity is Polarity.ANTI:
                    # Antis resolve at delivery and never pend; reaching
                    # here would mean a bookkeeping hole.
                    log.error("anti envelope drawn from schedule queue: %s", env.key)
                else:
                    store = self.manager.store
                    ctx = HandlerContext(self.manager, env.key, self.solver_config)
                    handle_event(ctx, env.payload)
                    for inv in ctx.invalidated:
                        self.pending_rollbacks.append(inv)
                    outputs = []
                    for i, ev in enumerate(ctx.events):
                        if ev.time <= self.config.max_ticks:
                            outputs.append(EventEnvelope(
                                EventKey(ev.time, ev.receiver, env.key.receiver,
                                         output_seq(env.key, i)), ev))
                    with store.lock:
                        reader = (env.key.receiver, env.key)
                        if reader in store.dirty:
                            # A concurrent straggler invalidated one of this
                            # execution's reads mid-flight: discard it and
                            # run the event again with repaired state.
                            store.dirty.discard(reader)
                            for inv in store.undo(env.key):
                                self.pending_rollbacks.append(inv)
                            store.discard_reads(env.key.receiver, env.key)
                            lp.insert_pending(env)
                            self._force_refresh(lp)
                            return sent
                        snapshot = store.entity_state_after(env.key.receiver, env.key)
                        lp.processed.append(ProcessedEntry(env.key, env, tuple(outputs),
                                                           tuple(ctx.records), worker_index,
                                                           snapshot, self.node_id))
                        lp.last_processed_key = env.key
                    for out in outputs:
                        if self.schedule_event(out):
                            sent.append(out)
                    self.stats.processed[worker_index] += 1
                    self.processed_since_round += 1
                    if self.config.track_traffic:
                        self._record_traffic(env.key.receiver, sent)
                self._refresh_slot(lp)
        finally:
            self.worker_slots[worker_index] = None
        return sent

    def _record_traffic(self, receiver: str, sent: list[EventEnvelope]) -> None:
        root = root_name(receiver)
        with self.window_lock:
            self.window_vertices[root] = self.window_vertices.get(root, 0) + 1
            for out in sent:
                other = root_name(out.key.receiver)
                if other == root:
                    continue
                pair = (root, other) if root < other else (other, root)
                self.window_edges[pair] = self.window_edges.get(pair, 0) + 1

    def reset_window(self) -> tuple[dict[str, int], dict[tuple[str, str], int]]:
        with self.window_lock:
            vertices, edges = self.window_vertices, self.window_edges
            self.window_vertices, self.window_edges = {}, {}
        return vertices, edges

    def rollback(self, lp: LPRuntime, to_key: EventKey, worker_index: int = 0) -> int:
        """Undo processed events with key >= to_key; caller holds lp.lock."""
        keys = [e.key for e in lp.processed]
        cut = bisect_left(keys, to_key)
        suffix = lp.processed[cut:]
        if not suffix:
            return 0
        del lp.processed[cut:]
        for entry in reversed(suffix):
            for inv in self.manager.store.undo(entry.key):
                self.pending_rollbacks.append(inv)
            self.manager.store.discard_reads(lp.lp_id, entry.key)
            for out in entry.outputs:
                self.schedule_event(out.anti())
                self.stats.antis_sent[worker_index] += 1
            lp.insert_pending(entry.envelope)
            self.stats.undone[entry.worker] += 1
        self.stats.rollback_calls[worker_index] += 1
        lp.last_processed_key = lp.processed[-1].key if lp.processed else None
        return len(suffix)

    # -- worker loop -----------------------------------------------------------------

    def worker_loop(self, worker_index: int) -> None:
        idle_streak = 0
        try:
            while not self.stop_event.is_set():
                if not self.running_gate.is_set():
                    self.worker_busy[worker_index] = False
                    self.running_gate.wait(0.05)
                    continue
                self.worker_busy[worker_index] = True
                self.drain_service_queues(worker_index)
                env = self.next_scheduled_event(worker_index)
                if env is None:
                    self.worker_busy[worker_index] = False
                    idle_streak = min(idle_streak + 1, 16)
                    # Idle backoff: a starved worker should not burn the GIL.
                    _time.sleep(min(0.0003 * (1 << (idle_streak // 4)), 0.004))
                    continue
                idle_streak = 0
                self.process_step(env, worker_index)
        except BaseException as exc:  # surfaced by the coordinator
            self.worker_error = exc
            log.exception("worker %d.%d crashed", self.node_id, worker_index)
        finally:
            self.worker_busy[worker_index] = False

    def start_workers(self) -> None:
        for w in range(self.config.workers):
            t = threading.Thread(target=self.worker_loop, args=(w,),
                                 name=f"warpgrid-n{self.node_id}w{w}", daemon=True)
            self._threads.append(t)
            t.start()

    def stop_workers(self) -> None:
        self.stop_event.set()
        for t in self._threads:
            t.join(timeout=5)
        self._threads.clear()

    # -- pause gate --------------------------------------------------------------------

    def pause(self) -> None:
        """Drain workers to a consistent point and freeze dequeuing."""
        self.running_gate.clear()
        while any(self.worker_busy) or any(k is not None for k in self.worker_slots):
            _time.sleep(0.001)
        while self.outbox or self.pending_rollbacks:
            self.drain_service_queues()
        self.paused.set()

    def resume(self) -> None:
        self.paused.clear()
        self.running_gate.set()

    # -- virtual-time bounds, termination, commits -----------------------------------------

    def local_minimum(self) -> Optional[EventKey]:
        """Lower bound over every locally pending or in-progress key, or
        None when nothing is pending.

        Holds the delivery lock and all queue locks so worker slots, the
        outbox, and pending sets are observed without gaps.
        """
        best: Optional[EventKey] = None

        def consider(key: Optional[EventKey]) -> None:
            nonlocal best
            if key is not None and (best is None or key < best):
                best = key

        with self.delivery_lock:
            for qidx in range(self.queues.n):
                self.queues.locks[qidx].acquire()
            try:
                for slot in list(self.worker_slots):
                    consider(slot)
                with self.lps_lock:
                    lps = list(self.lps.values())
                for lp in lps:
                    consider(lp.min_pending())
                for env in list(self.outbox):
                    consider(env.key)
                for _, key in list(self.pending_rollbacks):
                    consider(key)
            finally:
                for qidx in range(self.queues.n):
                    self.queues.locks[qidx].release()
        return best

    def local_minimum_time(self) -> float:
        m = self.local_minimum()
        return INFINITY if m is None else float(m.time)

    def check_termination(self, in_flight: int = 0) -> str:
        if self.hold_flag or in_flight:
            return TerminationStatus.RUNNING
        if self.local_minimum() is not None:
            return TerminationStatus.RUNNING
        return TerminationStatus.TERMINABLE

    def commit_below(self, time_bound: float) -> int:
        """Move processed entries older than the bound to committed output."""
        n = 0
        with self.lps_lock:
            lps = list(self.lps.values())
        for lp in lps:
            with lp.lock:
                keys = [e.key.time for e in lp.processed]
                cut = bisect_left(keys, time_bound)
                if cut == 0:
                    continue
                batch = lp.processed[:cut]
                del lp.processed[:cut]
                with self.committed_lock:
                    for entry in batch:
                        slot = (entry.origin_node, entry.worker)
                        self.commit_matrix[slot] = self.commit_matrix.get(slot, 0) + 1
                        if entry.origin_node == self.node_id:
                            self.stats.committed[entry.worker] += 1
                        for record in entry.records:
                            self.committed.append((entry.key.as_tuple(), record))
                n += cut
        return n

    def collect_garbage(self, threshold_time: float) -> int:
        """Reclaim committed history strictly below the threshold time."""
        if threshold_time == INFINITY or threshold_time <= self.gc_horizon:
            return 0
        bound = int(threshold_time)
        reclaimed = self.commit_below(bound)
        reclaimed += self.manager.store.prune_before(bound)
        self.gc_horizon = bound
        self.pending_cancellation = {
            k for k in self.pending_cancellation if k.time >= bound}
        return reclaimed

    def final_flush(self) -> None:
        self.commit_below(INFINITY)

    def committed_records_sorted(self) -> list[TraceRecord]:
        with self.committed_lock:
            return [r for _, r in sorted(self.committed, key=lambda kr: kr[0])]

    def collect_statistics(self) -> dict:
        snap = self.stats.snapshot()
        snap["node"] = self.node_id
        snap["workers"] = self.config.workers
        return snap

    def final_states(self) -> dict[str, object]:
        """Committed entity states after quiescence (roster plus missiles).

        Entities whose every version was undone (e.g. a missile spawn that
        rollback retracted) leave an empty history; they never existed in
        the committed timeline and are excluded.
        """
        end = EventKey(self.config.max_ticks + 2, "", "", 0)
        out = {}
        for name in self.manager.store.known_entities():
            state = self.manager.store.entity_state_at(name, end)
            if state is not None:
                out[name] = state
        return out

    # -- LP migration (engine must be paused at a consistent point) -----------

    def export_lp(self, name: str) -> Optional[dict]:
        """Detach an LP's runtime for transfer.

        World state is replicated everywhere, so queue/history bookkeeping
        and the LP's recorded reads move; nothing else does.
        """
        with self.lps_lock:
            lp = self.lps.pop(name, None)
        if lp is None:
            return None
        with lp.lock:
            lp.scheduled_key = None  # any heap entries become stale
            payload = {
                "lp_id": lp.lp_id,
                "pending": [lp.pending[k] for k in lp.pending_keys],
                "processed": list(lp.processed),
                "last_key": lp.last_processed_key,
                "reads": self.manager.store.export_reads({name}),
            }
        self.stats.migrated_out += 1
        return payload

    def import_lp(self, payload: dict) -> None:
        lp = self._lp(payload["lp_id"])
        with lp.lock:
            for env in payload["pending"]:
                lp.insert_pending(env)
            lp.processed = list(payload["processed"])
            lp.last_processed_key = payload["last_key"]
            self._refresh_slot(lp)
        self.manager.store.import_reads(payload.get("reads", []))
        self.stats.migrated_in += 1


def output_seq(cause: EventKey, index: int) -> int:
    """Sequence field for an emitted event, derived from the causing key.

    Two different events of one sender may emit toward the same receiver at
    the same time (e.g. an injected extra recon chain alongside the natural
    one); folding the full causing key in keeps every output key distinct
    while staying a pure function, so re-execution after rollback and the
    sequential oracle generate identical keys.
    """
    return stable_hash("out", cause.time, cause.receiver, cause.sender, cause.seq, index)


def root_name(name: str) -> str:
    """Owner-routing root: missiles belong with the entity that fired them."""
    dot = name.find(".")
    return name if dot < 0 else name[:dot]
