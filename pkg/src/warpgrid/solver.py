"""Wargame model: entities as logical processes and their event handlers.

The event cycle is reconnaissance -> missile movement -> attack.  A recon
searches for the nearest attackable enemy; on a hit with a ready weapon it
spawns a missile (a transient entity registered in the grid like any
other) which chases its target, re-aiming every tick, and fires an attack
on arrival.  An attack kills the target, removes the missile, and restores
the shooter's weapon.

All handler randomness is a pure function of (seed, entity name, event
time), so re-execution after rollback and strictly sequential runs produce
the same outputs.  All world access goes through a HandlerContext, which
records reads for invalidation and journals writes for undo.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .hexgrid import (
    DIRECTION_ORDER,
    ORIGIN,
    CubeCoord,
    GridHashTable,
    distance,
    disk,
    disk_cell_count,
    neighbor,
    ring,
    table_size_for,
)
from .scenario import MISSILE_SPEED, MISSILE_TYPE, Scenario, EntityProfile, ScenarioError
from .trace import TraceRecord
from .vtime import EventKey, stable_hash
from .worldstore import WorldStore

RECON = "reconnaissance"
MISSILE_MOVE = "missile_move"
ATTACK = "attack"


class WarEvent(NamedTuple):
    kind: str
    origin: str
    receiver: str
    time: int
    target_name: Optional[str] = None
    target_pos: Optional[CubeCoord] = None


class EntityState(NamedTuple):
    """Mutable attributes of one entity, stored as world-state versions.

    `shooter` is set only on missiles: the attack resolution must restore
    the firing entity's weapon, so the missile carries its parent's name.
    """

    side: str
    entity_type: str
    alive: bool
    position: CubeCoord
    weapon_ready: bool
    missile_target: Optional[str] = None
    shooter: Optional[str] = None


@dataclass(slots=True)
class SolverConfig:
    search: str = "neighbor"  # "neighbor" | "brute"
    missile_speed: int = MISSILE_SPEED
    seed: int = 0


class SharedWorldManager:
    """Per-node singleton coupling the world store with the grid index.

    Grid cells of the whole map are inserted into the open-addressed hash
    table up front; entity lists per cell live in the versioned store keyed
    by the cell's index.
    """

    def __init__(self, map_radius: int, store: Optional[WorldStore] = None):
        self.map_radius = map_radius
        self.store = store if store is not None else WorldStore()
        self.grid_index = GridHashTable(table_size_for(disk_cell_count(map_radius)))
        self.profiles: dict[str, EntityProfile] = {}
        for i, cell in enumerate(disk(ORIGIN, map_radius)):
            self.grid_index.insert(cell, i)

    def cell_index(self, c: CubeCoord) -> Optional[int]:
        if not c.is_valid() or distance(ORIGIN, c) > self.map_radius:
            return None
        return self.grid_index.lookup(c)

    def register_entity(self, profile: EntityProfile) -> None:
        idx = self.cell_index(profile.position)
        if idx is None:
            raise ScenarioError([f"entity {profile.name}: off-map position {profile.position}"])
        state = EntityState(profile.side, profile.entity_type, True,
                            profile.position, True)
        self.store.register_base(profile.name, state, idx)
        self.profiles[profile.name] = profile

    def update_entity_state_info(self, key: EventKey, name: str,
                                 old_state: EntityState, new_state: EntityState) -> set:
        """Write-through state update; moves grid occupancy atomically."""
        invalidated = set()
        invalidated |= self.store.apply(("we", key, name, new_state))
        if old_state.position != new_state.position:
            old_idx = self.cell_index(old_state.position)
            new_idx = self.cell_index(new_state.position)
            if old_idx is not None:
                invalidated |= self.store.apply(("cr", key, old_idx, name))
            if new_idx is not None:
                invalidated |= self.store.apply(("ca", key, new_idx, name))
        return invalidated

    def alive_counts(self, at_key: EventKey) -> dict[str, int]:
        counts = {"blue": 0, "red": 0}
        for name in self.store.known_entities():
            st = self.store.entity_state_at(name, at_key)
            if st is not None and st.alive and st.entity_type != MISSILE_TYPE:
                counts[st.side] = counts.get(st.side, 0) + 1
        return counts


def initialize_entities(scenario: Scenario, store: Optional[WorldStore] = None) -> SharedWorldManager:
    """Build the shared managers from a validated scenario roster."""
    manager = SharedWorldManager(scenario.map_radius, store)
    errors = []
    for profile in scenario.roster:
        try:
            manager.register_entity(profile)
        except (ScenarioError, ValueError) as exc:
            errors.append(str(exc))
    if errors:
        raise ScenarioError(errors)
    return manager


def initialize_lp(profile: EntityProfile) -> list[WarEvent]:
    """First events of one LP: a self-addressed recon at t=1; passive
    entities (ground structures) emit nothing."""
    if profile.speed == 0 and profile.detection_range == 0:
        return []
    return [WarEvent(RECON, profile.name, profile.name, 1)]


class HandlerContext:
    """World access mediator for one event processing.

    Reads are recorded under (receiver LP, event key); writes are journaled
    under the event key.  Emitted events and trace records accumulate here
    and are collected by the engine after the handler returns.
    """

    __slots__ = ("manager", "key", "config", "events", "records", "invalidated")

    def __init__(self, manager: SharedWorldManager, key: EventKey, config: SolverConfig):
        self.manager = manager
        self.key = key
        self.config = config
        self.events: list[WarEvent] = []
        self.records: list[TraceRecord] = []
        self.invalidated: set = set()

    # reads ---------------------------------------------------------------
    def read_state(self, name: str) -> Optional[EntityState]:
        return self.manager.store.read_entity(name, self.key, self.key.receiver)

    def read_cell_names(self, c: CubeCoord) -> tuple:
        idx = self.manager.cell_index(c)
        if idx is None:
            return ()
        return self.manager.store.read_cell(idx, self.key, self.key.receiver)

    # writes -------------------------------------------------------------
    def update_state(self, name: str, old_state: EntityState, new_state: EntityState) -> None:
        self.invalidated |= self.manager.update_entity_state_info(self.key, name, old_state, new_state)

    def spawn(self, name: str, state: EntityState) -> None:
        self.invalidated |= self.manager.store.apply(("we", self.key, name, state))
        idx = self.manager.cell_index(state.position)
        if idx is not None:
            self.invalidated |= self.manager.store.apply(("ca", self.key, idx, name))

    def despawn(self, name: str, state: EntityState) -> None:
        gone = state._replace(alive=False)
        self.invalidated |= self.manager.store.apply(("we", self.key, name, gone))
        idx = self.manager.cell_index(state.position)
        if idx is not None:
            self.invalidated |= self.manager.store.apply(("cr", self.key, idx, name))

    # outputs --------------------------------------------------------------
    def emit(self, event: WarEvent) -> None:
        self.events.append(event)

    def record(self, kind: str, actor: str, side: str, pos: CubeCoord,
               target: Optional[str] = None, destroyed: Optional[str] = None) -> None:
        self.records.append(TraceRecord(self.key.time, kind, actor, side, pos, target, destroyed))


# -- searches ---------------------------------------------------------------


def _is_valid_target(state: Optional[EntityState], searcher_side: str) -> bool:
    return (state is not None and state.alive and state.side != searcher_side
            and state.entity_type != MISSILE_TYPE)


def search_entities(ctx: HandlerContext, center: CubeCoord, radius: int,
                    searcher_side: str) -> Optional[str]:
    """Nearest attackable enemy by (ring, walk-order, name) or None.

    Zero or negative radius and invalid centers return None without
    scanning.  Rings are examined inside-out; the first valid candidate of
    the smallest non-empty ring wins, which makes the choice deterministic.
    """
    if radius <= 0 or not center.is_valid():
        return None
    for r in range(1, radius + 1):
        for cell in ring(center, r):
            for name in ctx.read_cell_names(cell):
                if _is_valid_target(ctx.read_state(name), searcher_side):
                    return name
    return None


def brute_force_search(ctx: HandlerContext, center: CubeCoord, radius: int,
                       searcher_side: str) -> Optional[str]:
    """Full scan returning the same choice as search_entities.

    Ties are broken by the candidate cell's position in the ring walk and
    then by name order within a cell, matching the ring search exactly.
    """
    if radius <= 0 or not center.is_valid():
        return None
    best = None
    ring_cache: dict[int, list[CubeCoord]] = {}
    for name in sorted(ctx.manager.store.known_entities()):
        state = ctx.read_state(name)
        if not _is_valid_target(state, searcher_side):
            continue
        d = distance(center, state.position)
        if d == 0 or d > radius:
            continue
        cells = ring_cache.setdefault(d, ring(center, d))
        ring_pos = cells.index(state.position)
        cell_names = ctx.read_cell_names(state.position)
        name_pos = cell_names.index(name) if name in cell_names else 0
        rank = (d, ring_pos, name_pos)
        if best is None or rank < best[0]:
            best = (rank, name)
    return best[1] if best else None


def _search(ctx: HandlerContext, center: CubeCoord, radius: int, side: str) -> Optional[str]:
    if ctx.config.search == "brute":
        return brute_force_search(ctx, center, radius, side)
    return search_entities(ctx, center, radius, side)


# -- handlers -------------------------------------------------------------------


def handle_event(ctx: HandlerContext, event: WarEvent) -> None:
    if event.kind == RECON:
        handle_recon(ctx, event)
    elif event.kind == MISSILE_MOVE:
        handle_missile_move(ctx, event)
    elif event.kind == ATTACK:
        handle_attack(ctx, event)
    else:
        raise ValueError(f"unknown event kind {event.kind!r}")


def handle_recon(ctx: HandlerContext, event: WarEvent) -> None:
    me = ctx.read_state(event.receiver)
    if me is None or not me.alive:
        return  # silent no-op for dead or missing entities
    profile = ctx.manager.profiles.get(event.receiver)
    if profile is None:
        return
    target = _search(ctx, me.position, profile.detection_range, me.side)
    t = event.time
    if target is not None and me.weapon_ready:
        # Fire: spawn a missile next to the shooter and hold position.  The
        # recon chain continues (scanning resumes next tick with the weapon
        # spent), which is what sustains the engagement cycle.
        spawn_pos = _adjacent_in_map(ctx.manager, me.position)
        missile_name = f"{event.receiver}.m{t}"
        missile = EntityState(me.side, MISSILE_TYPE, True, spawn_pos, False,
                              missile_target=target, shooter=event.receiver)
        ctx.update_state(event.receiver, me, me._replace(weapon_ready=False))
        ctx.spawn(missile_name, missile)
        ctx.emit(WarEvent(MISSILE_MOVE, event.receiver, missile_name, t + 1,
                          target_name=target))
        ctx.emit(WarEvent(RECON, event.receiver, event.receiver, t + 1))
        ctx.record(RECON, event.receiver, me.side, me.position, target=target)
        return
    if profile.speed == 0 and profile.detection_range == 0:
        return  # passive entities never act
    direction = DIRECTION_ORDER[stable_hash("dir", ctx.config.seed, event.receiver, t) % 6]
    steps = _clamped_steps(ctx.manager, me.position, direction, profile.speed)
    new_pos = CubeCoord(me.position.x + direction.value.x * steps,
                        me.position.y + direction.value.y * steps,
                        me.position.z + direction.value.z * steps)
    ctx.update_state(event.receiver, me, me._replace(position=new_pos))
    ctx.emit(WarEvent(RECON, event.receiver, event.receiver, t + 1))
    ctx.record(RECON, event.receiver, me.side, new_pos)


def handle_missile_move(ctx: HandlerContext, event: WarEvent) -> None:
    me = ctx.read_state(event.receiver)
    if me is None or not me.alive:
        return
    target_state = ctx.read_state(me.missile_target) if me.missile_target else None
    if target_state is None or not target_state.alive:
        # Target gone: self-destruct and hand the weapon back.
        ctx.despawn(event.receiver, me)
        _restore_weapon(ctx, me.shooter)
        ctx.record(MISSILE_MOVE, event.receiver, me.side, me.position)
        return
    pos = me.position
    for _ in range(ctx.config.missile_speed):
        if pos == target_state.position:
            break
        pos = _step_toward(pos, target_state.position)
    ctx.update_state(event.receiver, me, me._replace(position=pos))
    if pos == target_state.position:
        ctx.emit(WarEvent(ATTACK, event.receiver, me.missile_target, event.time + 1,
                          target_name=me.missile_target))
    else:
        ctx.emit(WarEvent(MISSILE_MOVE, event.receiver, event.receiver, event.time + 1,
                          target_name=me.missile_target))
    ctx.record(MISSILE_MOVE, event.receiver, me.side, pos, target=me.missile_target)


def handle_attack(ctx: HandlerContext, event: WarEvent) -> None:
    target_state = ctx.read_state(event.receiver)
    missile_name = event.origin
    missile_state = ctx.read_state(missile_name)
    if target_state is None or not target_state.alive:
        # Double kill: the strike is a no-op, but the missile still resolves.
        if missile_state is not None and missile_state.alive:
            ctx.despawn(missile_name, missile_state)
            _restore_weapon(ctx, missile_state.shooter)
        return
    ctx.update_state(event.receiver, target_state, target_state._replace(alive=False))
    idx = ctx.manager.cell_index(target_state.position)
    if idx is not None:
        ctx.invalidated |= ctx.manager.store.apply(("cr", ctx.key, idx, event.receiver))
    if missile_state is not None and missile_state.alive:
        ctx.despawn(missile_name, missile_state)
        _restore_weapon(ctx, missile_state.shooter)
    side = missile_state.side if missile_state is not None else "blue"
    ctx.record(ATTACK, missile_name, side, target_state.position,
               target=event.receiver, destroyed=event.receiver)


def _restore_weapon(ctx: HandlerContext, shooter: Optional[str]) -> None:
    if shooter is None:
        return
    state = ctx.read_state(shooter)
    if state is not None and state.alive and not state.weapon_ready:
        ctx.update_state(shooter, state, state._replace(weapon_ready=True))


def _adjacent_in_map(manager: SharedWorldManager, pos: CubeCoord) -> CubeCoord:
    for d in DIRECTION_ORDER:
        cell = neighbor(pos, d)
        if distance(ORIGIN, cell) <= manager.map_radius:
            return cell
    return pos


def _clamped_steps(manager: SharedWorldManager, pos: CubeCoord, direction, speed: int) -> int:
    steps = 0
    cursor = pos
    for _ in range(speed):
        nxt = neighbor(cursor, direction)
        if distance(ORIGIN, nxt) > manager.map_radius:
            break
        cursor = nxt
        steps += 1
    return steps


_DELTAS = tuple(tuple(d.value) for d in DIRECTION_ORDER)


def _step_toward(pos: CubeCoord, goal: CubeCoord) -> CubeCoord:
    best = pos
    gx, gy, gz = goal
    best_d = (abs(pos.x - gx) + abs(pos.y - gy) + abs(pos.z - gz)) // 2
    for dx, dy, dz in _DELTAS:
        x, y, z = pos.x + dx, pos.y + dy, pos.z + dz
        dd = (abs(x - gx) + abs(y - gy) + abs(z - gz)) // 2
        if dd < best_d:
            best, best_d = CubeCoord(x, y, z), dd
    return best
