"""Versioned shared world state with read tracking and rollback undo.

Handlers running on concurrent workers (and on different nodes) share one
logical world: entity states plus grid-cell occupancy.  A plain mutable map
would make results depend on execution order, so every mutation is stored
as a version tagged with the causing event key, and every read is recorded
against the version it observed.  When a write (or an undo) changes what
some recorded read would have returned, that reader is reported for
rollback; re-execution then sees the repaired value.  At the fixed point
every read returns exactly what a strictly key-ordered sequential run
would have produced.

Entity versions are full snapshots.  That is sound because every entity
write is derived from a recorded read at the same key (read-modify-write
discipline), so a stale snapshot's writer is itself invalidated and heals
the chain transitively.  Cell occupancy writes carry no such read (a mover
does not read the cells it crosses), so cell versions are add/remove
deltas with materialized snapshots: an out-of-order insert or removal
recomputes the suffix and invalidates every later reader of that cell.

All mutations are journaled per event key so the full effect of an event
(including writes to other entities, e.g. an attack restoring the
shooter's weapon) can be undone in one call.  The same op stream drives
cross-node replication; replicas apply it through the same code path.

One lock guards the whole store; lock scope is a single node process.
"""

from __future__ import annotations

import threading
from bisect import bisect_left, insort
from typing import Callable, Optional

from .vtime import EventKey

# (lp_id, reader_key) pairs whose observed read was invalidated.
InvalidationSet = set[tuple[str, EventKey]]

_ENT = "e"
_CELL = "c"


class _EntityHistory:
    """Key-sorted state snapshots plus the pre-history base state."""

    __slots__ = ("keys", "values", "base")

    def __init__(self, base):
        self.keys: list[EventKey] = []
        self.values: list = []
        self.base = base

    def read(self, at_key: EventKey):
        i = bisect_left(self.keys, at_key)
        if i:
            return self.values[i - 1], self.keys[i - 1]
        return self.base, None

    def latest(self):
        return self.values[-1] if self.keys else self.base

    def write(self, key: EventKey, value) -> None:
        i = bisect_left(self.keys, key)
        if i < len(self.keys) and self.keys[i] == key:
            raise AssertionError(f"duplicate entity version for {key}")
        self.keys.insert(i, key)
        self.values.insert(i, value)

    def remove(self, key: EventKey) -> bool:
        i = bisect_left(self.keys, key)
        if i < len(self.keys) and self.keys[i] == key:
            del self.keys[i]
            del self.values[i]
            return True
        return False

    def prune_before(self, bound: EventKey) -> int:
        i = bisect_left(self.keys, bound)
        if i == 0:
            return 0
        self.base = self.values[i - 1]
        del self.keys[:i]
        del self.values[:i]
        return i


class _CellHistory:
    """Delta chain (add/remove names) with materialized occupancy snapshots.

    One event may touch a cell several times (an attack removes both the
    target and the missile standing on it), so each version holds the
    ordered list of that event's deltas.
    """

    __slots__ = ("keys", "deltas", "snaps", "base")

    def __init__(self):
        self.keys: list[EventKey] = []
        self.deltas: list[tuple[tuple[str, str], ...]] = []  # (("+"|"-", name), ...)
        self.snaps: list[tuple] = []
        self.base: tuple = ()

    def read(self, at_key: EventKey):
        i = bisect_left(self.keys, at_key)
        if i:
            return self.snaps[i - 1], self.keys[i - 1]
        return self.base, None

    def latest(self):
        return self.snaps[-1] if self.keys else self.base

    def write(self, key: EventKey, delta: tuple[str, str]) -> bool:
        """Insert a delta; returns True when it landed mid-chain."""
        i = bisect_left(self.keys, key)
        if i < len(self.keys) and self.keys[i] == key:
            self.deltas[i] = self.deltas[i] + (delta,)
        else:
            self.keys.insert(i, key)
            self.deltas.insert(i, (delta,))
            self.snaps.insert(i, ())
        self._rebuild_from(i)
        return i < len(self.keys) - 1

    def remove(self, key: EventKey) -> tuple[bool, bool]:
        """Drop every delta of the event at key; returns (found, mid_chain)."""
        i = bisect_left(self.keys, key)
        if i >= len(self.keys) or self.keys[i] != key:
            return False, False
        mid = i < len(self.keys) - 1
        del self.keys[i]
        del self.deltas[i]
        del self.snaps[i]
        self._rebuild_from(i)
        return True, mid

    def _rebuild_from(self, i: int) -> None:
        current = self.snaps[i - 1] if i else self.base
        for j in range(i, len(self.keys)):
            for op, name in self.deltas[j]:
                current = _names_add(current, name) if op == "+" else _names_remove(current, name)
            self.snaps[j] = current

    def prune_before(self, bound: EventKey) -> int:
        i = bisect_left(self.keys, bound)
        if i == 0:
            return 0
        self.base = self.snaps[i - 1]
        del self.keys[:i]
        del self.deltas[:i]
        del self.snaps[:i]
        return i


class WorldStore:
    """Entity-state and cell-occupancy versions for one node process."""

    def __init__(self, on_op: Optional[Callable[[tuple], None]] = None):
        self.lock = threading.RLock()
        self._entities: dict[str, _EntityHistory] = {}
        self._cells: dict[int, _CellHistory] = {}
        # (target kind, id) -> {(lp, reader_key): seen_version_key}
        self._reads: dict[tuple, dict[tuple[str, EventKey], Optional[EventKey]]] = {}
        # event key -> list of mutated targets, for undo
        self._journal: dict[EventKey, list[tuple]] = {}
        # (lp, reader_key) -> list of read targets, for purging on rollback
        self._reads_by_key: dict[tuple[str, EventKey], list[tuple]] = {}
        # Invalidated readers that may still be mid-execution: their
        # completion must check (and consume) this flag under the lock.
        self.dirty: set[tuple[str, EventKey]] = set()
        # Replication hook; receives every locally originated op tuple.
        self.on_op = on_op
        self.record_reads = True

    # -- base population ---------------------------------------------------

    def register_base(self, name: str, state, cell_index: Optional[int]) -> None:
        """Install an entity's initial state (snapshot zero); no event key."""
        with self.lock:
            if name in self._entities:
                raise ValueError(f"entity {name!r} already registered")
            self._entities[name] = _EntityHistory(state)
            if cell_index is not None:
                cell = self._cells.get(cell_index)
                if cell is None:
                    cell = self._cells[cell_index] = _CellHistory()
                cell.base = _names_add(cell.base, name)

    def known_entities(self) -> list[str]:
        with self.lock:
            return list(self._entities)

    # -- reads ---------------------------------------------------------------

    def read_entity(self, name: str, at_key: EventKey, reader_lp: str, record: bool = True):
        with self.lock:
            hist = self._entities.get(name)
            if hist is None:
                return None
            value, seen = hist.read(at_key)
            if record and self.record_reads:
                self._record((_ENT, name), reader_lp, at_key, seen)
            return value

    def read_cell(self, cell_index: int, at_key: EventKey, reader_lp: str, record: bool = True) -> tuple:
        with self.lock:
            hist = self._cells.get(cell_index)
            if hist is None:
                value, seen = (), None
            else:
                value, seen = hist.read(at_key)
            if record and self.record_reads:
                self._record((_CELL, cell_index), reader_lp, at_key, seen)
            return value

    def _record(self, target, lp, at_key, seen) -> None:
        reads = self._reads.get(target)
        if reads is None:
            reads = self._reads[target] = {}
        reader = (lp, at_key)
        if reader not in reads:
            reads[reader] = seen
            self._reads_by_key.setdefault(reader, []).append(target)

    # -- snapshots for committed consumers ------------------------------------

    def entity_state_at(self, name: str, at_key: EventKey):
        """Unrecorded read used for telemetry/commits (at or below GVT)."""
        with self.lock:
            hist = self._entities.get(name)
            return hist.read(at_key)[0] if hist else None

    def entity_state_after(self, name: str, key: EventKey):
        """State including the version written by `key` itself, if any."""
        with self.lock:
            hist = self._entities.get(name)
            if hist is None:
                return None
            i = bisect_left(hist.keys, key)
            if i < len(hist.keys) and hist.keys[i] == key:
                return hist.values[i]
            return hist.values[i - 1] if i else hist.base

    # -- writes ----------------------------------------------------------------

    def apply(self, op: tuple, forward: bool = True) -> InvalidationSet:
        """Apply one mutation op; returns readers invalidated by it.

        Ops (first element is the tag):
          ("we", key, name, state)     entity state version
          ("ca", key, cell, name)      add name to cell occupancy
          ("cr", key, cell, name)      remove name from cell occupancy
          ("un", key)                  undo every effect journaled at key
        `forward=False` marks ops arriving from a replica, which are applied
        but not re-broadcast.
        """
        with self.lock:
            tag = op[0]
            if tag == "un":
                invalidated = self._undo(op[1])
            else:
                invalidated = self._apply_write(op)
            self.dirty.update(invalidated)
            if forward and self.on_op is not None:
                self.on_op(op)
            return invalidated

    def _apply_write(self, op: tuple) -> InvalidationSet:
        tag, key = op[0], op[1]
        if tag == "we":
            name, state = op[2], op[3]
            hist = self._entities.get(name)
            if hist is None:
                hist = self._entities[name] = _EntityHistory(None)
            hist.write(key, state)
            self._journal.setdefault(key, []).append((_ENT, name))
            return self._invalidate_interval((_ENT, name), key)
        if tag in ("ca", "cr"):
            cell_index, name = op[2], op[3]
            hist = self._cells.get(cell_index)
            if hist is None:
                hist = self._cells[cell_index] = _CellHistory()
            mid_chain = hist.write(key, ("+" if tag == "ca" else "-", name))
            self._journal.setdefault(key, []).append((_CELL, cell_index))
            if mid_chain:
                return self._invalidate_after((_CELL, cell_index), key)
            return self._invalidate_interval((_CELL, cell_index), key)
        raise ValueError(f"unknown op {tag!r}")

    def _invalidate_interval(self, target, write_key: EventKey) -> InvalidationSet:
        """Readers whose observed interval contains write_key."""
        reads = self._reads.get(target)
        if not reads:
            return set()
        hit: InvalidationSet = set()
        for reader, seen in list(reads.items()):
            if write_key < reader[1] and (seen is None or seen < write_key):
                hit.add(reader)
                del reads[reader]
        return hit

    def _invalidate_after(self, target, write_key: EventKey) -> InvalidationSet:
        """Every reader after write_key; used when later snapshots changed."""
        reads = self._reads.get(target)
        if not reads:
            return set()
        hit: InvalidationSet = set()
        for reader in list(reads):
            if write_key < reader[1]:
                hit.add(reader)
                del reads[reader]
        return hit

    def _undo(self, key: EventKey) -> InvalidationSet:
        targets = self._journal.pop(key, [])
        hit: InvalidationSet = set()
        for target in targets:
            if target[0] == _ENT:
                hist = self._entities.get(target[1])
                if hist is None or not hist.remove(key):
                    continue
                reads = self._reads.get(target)
                if not reads:
                    continue
                for reader, seen in list(reads.items()):
                    if seen == key:
                        hit.add(reader)
                        del reads[reader]
            else:
                hist = self._cells.get(target[1])
                if hist is None:
                    continue
                found, mid_chain = hist.remove(key)
                if not found:
                    continue
                if mid_chain:
                    hit.update(self._invalidate_after(target, key))
                else:
                    reads = self._reads.get(target)
                    if reads:
                        for reader, seen in list(reads.items()):
                            if seen == key:
                                hit.add(reader)
                                del reads[reader]
        return hit

    def undo(self, key: EventKey, forward: bool = True) -> InvalidationSet:
        return self.apply(("un", key), forward=forward)

    def discard_reads(self, lp: str, at_key: EventKey) -> None:
        """Forget the reads of a rolled-back event so they cannot re-fire."""
        with self.lock:
            reader = (lp, at_key)
            self.dirty.discard(reader)
            for target in self._reads_by_key.pop(reader, []):
                reads = self._reads.get(target)
                if reads is not None:
                    reads.pop(reader, None)

    def export_reads(self, lp_names: set[str]) -> list[tuple]:
        """Detach the read records of the given LPs (for migration).

        A migrated LP's reads must move with it: future writes on the
        destination replica have to be able to invalidate them.
        """
        out = []
        with self.lock:
            readers = [r for r in self._reads_by_key if r[0] in lp_names]
            for reader in readers:
                for target in self._reads_by_key.pop(reader):
                    reads = self._reads.get(target)
                    if reads is not None and reader in reads:
                        out.append((target, reader[0], reader[1], reads.pop(reader)))
                self.dirty.discard(reader)
        return out

    def import_reads(self, entries: list[tuple]) -> None:
        with self.lock:
            for target, lp, at_key, seen in entries:
                self._record(tuple(target), lp, at_key, seen)

    # -- fossil collection --------------------------------------------------------

    def prune_before(self, time_bound: int) -> int:
        """Drop versions, journals and read records older than `time_bound`.

        The newest version below the bound becomes the base value, so state
        at or after the bound can still be reconstructed (rollback safety).
        Returns the number of versions reclaimed.
        """
        bound = EventKey(time_bound, "", "", 0)
        reclaimed = 0
        with self.lock:
            dead_keys = [k for k in self._journal if k < bound]
            touched: set[tuple] = set()
            for k in dead_keys:
                touched.update(self._journal.pop(k))
            for target in touched:
                hist = self._entities.get(target[1]) if target[0] == _ENT else self._cells.get(target[1])
                if hist is not None:
                    reclaimed += hist.prune_before(bound)
            dead_readers = [r for r in self._reads_by_key if r[1] < bound]
            for reader in dead_readers:
                for target in self._reads_by_key.pop(reader):
                    reads = self._reads.get(target)
                    if reads is not None:
                        reads.pop(reader, None)
        return reclaimed

    # -- inspection helpers ----------------------------------------------------------

    def version_count(self, name: str) -> int:
        with self.lock:
            hist = self._entities.get(name)
            return len(hist.keys) if hist else 0

    def occupancy_at(self, at_key: EventKey) -> dict[int, tuple]:
        with self.lock:
            out = {}
            for idx, hist in self._cells.items():
                names, _ = hist.read(at_key)
                if names:
                    out[idx] = names
            return out


def _names_add(names: tuple, name: str) -> tuple:
    if name in names:
        return names
    out = list(names)
    insort(out, name)
    return tuple(out)


def _names_remove(names: tuple, name: str) -> tuple:
    if name not in names:
        return names
    return tuple(n for n in names if n != name)
