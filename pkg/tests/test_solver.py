"""Entity handlers, searches, and shared-world bookkeeping."""

import random
import threading

import pytest

from warpgrid.hexgrid import ORIGIN, CubeCoord, distance, ring
from warpgrid.scenario import EntityProfile, Scenario, ScenarioError
from warpgrid.solver import (
    ATTACK,
    MISSILE_MOVE,
    RECON,
    EntityState,
    HandlerContext,
    SolverConfig,
    WarEvent,
    brute_force_search,
    handle_attack,
    handle_event,
    handle_missile_move,
    handle_recon,
    initialize_entities,
    initialize_lp,
    search_entities,
)
from warpgrid.vtime import EventKey


def make_world(entries, map_radius=10):
    """entries: list of (name, side, type, position[, overrides])."""
    roster = []
    for entry in entries:
        name, side, etype, pos = entry[:4]
        overrides = entry[4] if len(entry) > 4 else {}
        roster.append(EntityProfile.for_type(name, side, etype, pos, **overrides))
    scenario = Scenario(map_radius=map_radius, seed=5, max_time=50, roster=roster)
    return initialize_entities(scenario)


def ctx_for(manager, receiver, t=1, search="neighbor", seed=5):
    key = EventKey(t, receiver, receiver, 0)
    return HandlerContext(manager, key, SolverConfig(search=search, seed=seed))


class TestInitialize:
    def test_empty_scenario(self):
        manager = make_world([])
        assert manager.store.known_entities() == []

    def test_occupancy_sums_to_roster(self):
        rng = random.Random(0)
        entries = []
        used = set()
        while len(entries) < 100:
            x, y = rng.randint(-8, 8), rng.randint(-8, 8)
            pos = CubeCoord(x, y, -x - y)
            if abs(pos.z) > 8 or pos in used or distance(ORIGIN, pos) > 10:
                continue
            used.add(pos)
            side = "blue" if len(entries) % 2 else "red"
            entries.append((f"{side}_e{len(entries)}", side, "aircraft", pos))
        manager = make_world(entries)
        assert len(manager.store.known_entities()) == 100
        occ = manager.store.occupancy_at(EventKey(99, "", "", 0))
        assert sum(len(names) for names in occ.values()) == 100
        # Every entity findable at its registered cell.
        for name in manager.profiles:
            st = manager.store.entity_state_at(name, EventKey(99, "", "", 0))
            idx = manager.cell_index(st.position)
            assert name in occ[idx]

    def test_duplicate_names_rejected(self):
        roster = [EntityProfile.for_type("a", "blue", "aircraft", ORIGIN),
                  EntityProfile.for_type("a", "red", "aircraft", CubeCoord(1, -1, 0))]
        with pytest.raises(ScenarioError):
            initialize_entities(Scenario(5, 1, 10, roster))

    def test_off_map_rejected(self):
        roster = [EntityProfile.for_type("far", "blue", "aircraft", CubeCoord(30, -30, 0))]
        with pytest.raises(ScenarioError):
            initialize_entities(Scenario(5, 1, 10, roster))

    def test_initial_events_per_profile(self):
        aircraft = EntityProfile.for_type("a", "blue", "aircraft", ORIGIN)
        structure = EntityProfile.for_type("s", "blue", "ground_structure", CubeCoord(1, -1, 0))
        assert [e.kind for e in initialize_lp(aircraft)] == [RECON]
        assert initialize_lp(aircraft)[0].time == 1
        assert initialize_lp(structure) == []

    def test_initial_event_count_excludes_structures(self):
        entries = [("b0", "blue", "aircraft", CubeCoord(0, 0, 0)),
                   ("b1", "blue", "ground_structure", CubeCoord(1, -1, 0)),
                   ("r0", "red", "vessel", CubeCoord(2, -2, 0))]
        manager = make_world(entries)
        n = sum(len(initialize_lp(p)) for p in manager.profiles.values())
        assert n == 2


class TestRecon:
    def test_dead_receiver_is_silent(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN)])
        key = EventKey(1, "b", "b", 0)
        dead = manager.store.read_entity("b", key, "x", record=False)._replace(alive=False)
        manager.store.apply(("we", EventKey(0, "b", "init", 0), "b", dead))
        ctx = ctx_for(manager, "b", t=1)
        handle_recon(ctx, WarEvent(RECON, "b", "b", 1))
        assert ctx.events == []
        assert ctx.records == []

    def test_lone_aircraft_moves_and_rechains(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN)])
        ctx = ctx_for(manager, "b", t=1)
        handle_recon(ctx, WarEvent(RECON, "b", "b", 1))
        assert [e.kind for e in ctx.events] == [RECON]
        assert ctx.events[0].time == 2
        after = manager.store.entity_state_after("b", ctx.key)
        assert 0 < distance(ORIGIN, after.position) <= 4

    def test_enemy_at_two_fires_missile_without_moving(self):
        # Hand trace: blue aircraft at origin, red tank at distance 2,
        # weapon ready: one missile_move emitted, shooter stays put.
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "ground_force", CubeCoord(2, -2, 0))])
        ctx = ctx_for(manager, "b", t=1)
        handle_recon(ctx, WarEvent(RECON, "b", "b", 1))
        kinds = [e.kind for e in ctx.events]
        assert kinds.count(MISSILE_MOVE) == 1
        missile_ev = next(e for e in ctx.events if e.kind == MISSILE_MOVE)
        assert missile_ev.receiver == "b.m1"
        assert missile_ev.target_name == "r"
        after = manager.store.entity_state_after("b", ctx.key)
        assert after.position == ORIGIN  # zero recon movement this tick
        assert after.weapon_ready is False
        spawned = manager.store.entity_state_after("b.m1", ctx.key)
        assert spawned.entity_type == "missile"
        assert distance(spawned.position, ORIGIN) == 1

    def test_weapon_not_ready_moves_instead(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "ground_force", CubeCoord(2, -2, 0))])
        key0 = EventKey(0, "b", "init", 0)
        st = manager.store.read_entity("b", EventKey(1, "b", "b", 0), "x", record=False)
        manager.store.apply(("we", key0, "b", st._replace(weapon_ready=False)))
        ctx = ctx_for(manager, "b", t=1)
        handle_recon(ctx, WarEvent(RECON, "b", "b", 1))
        assert [e.kind for e in ctx.events] == [RECON]

    def test_movement_clamped_at_map_edge(self):
        manager = make_world([("b", "blue", "aircraft", CubeCoord(10, -10, 0))], map_radius=10)
        for t in range(1, 30):
            ctx = ctx_for(manager, "b", t=t)
            handle_recon(ctx, WarEvent(RECON, "b", "b", t))
            pos = manager.store.entity_state_after("b", ctx.key).position
            assert distance(ORIGIN, pos) <= 10


class TestMissile:
    def _world_with_missile(self, target_pos, missile_pos=CubeCoord(0, -1, 1)):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "ground_force", target_pos)], map_radius=12)
        key0 = EventKey(1, "b", "b", 0)
        missile = EntityState("blue", "missile", True, missile_pos, False,
                              missile_target="r", shooter="b")
        manager.store.apply(("we", key0, "b.m1", missile))
        idx = manager.cell_index(missile_pos)
        manager.store.apply(("ca", key0, idx, "b.m1"))
        return manager

    def test_dead_target_self_destructs_and_restores_weapon(self):
        manager = self._world_with_missile(CubeCoord(5, -5, 0))
        k1 = EventKey(1, "r", "r", 5)
        tank = manager.store.read_entity("r", k1, "x", record=False)
        manager.store.apply(("we", k1, "r", tank._replace(alive=False)))
        shooter = manager.store.read_entity("b", k1, "x", record=False)
        manager.store.apply(("we", EventKey(1, "b", "b", 9), "b",
                             shooter._replace(weapon_ready=False)))
        ctx = ctx_for(manager, "b.m1", t=2)
        handle_missile_move(ctx, WarEvent(MISSILE_MOVE, "b.m1", "b.m1", 2, target_name="r"))
        assert ctx.events == []
        assert manager.store.entity_state_after("b.m1", ctx.key).alive is False
        assert manager.store.entity_state_after("b", ctx.key).weapon_ready is True

    def test_target_three_away_reached_this_tick(self):
        # Path length hand check: 3 steps toward the target with speed 4.
        manager = self._world_with_missile(CubeCoord(3, -4, 1))
        ctx = ctx_for(manager, "b.m1", t=2)
        handle_missile_move(ctx, WarEvent(MISSILE_MOVE, "b.m1", "b.m1", 2, target_name="r"))
        assert [e.kind for e in ctx.events] == [ATTACK]
        assert ctx.events[0].receiver == "r"
        assert ctx.events[0].time == 3
        assert manager.store.entity_state_after("b.m1", ctx.key).position == CubeCoord(3, -4, 1)

    def test_distant_target_keeps_chasing(self):
        manager = self._world_with_missile(CubeCoord(8, -8, 0))
        ctx = ctx_for(manager, "b.m1", t=2)
        handle_missile_move(ctx, WarEvent(MISSILE_MOVE, "b.m1", "b.m1", 2, target_name="r"))
        assert [e.kind for e in ctx.events] == [MISSILE_MOVE]
        pos = manager.store.entity_state_after("b.m1", ctx.key).position
        assert distance(CubeCoord(0, -1, 1), pos) == 4  # full missile speed
        assert distance(pos, CubeCoord(8, -8, 0)) < distance(CubeCoord(0, -1, 1), CubeCoord(8, -8, 0))

    def test_chase_reaims_at_moved_target(self):
        # Two-tick chase: the target moves between missile steps and the
        # missile heads for the new position each tick.
        manager = self._world_with_missile(CubeCoord(6, -6, 0))
        ctx1 = ctx_for(manager, "b.m1", t=2)
        handle_missile_move(ctx1, WarEvent(MISSILE_MOVE, "b.m1", "b.m1", 2, target_name="r"))
        k_move = EventKey(2, "r", "r", 3)
        tank = manager.store.read_entity("r", k_move, "x", record=False)
        manager.store.apply(("we", k_move, "r", tank._replace(position=CubeCoord(6, -2, -4))))
        ctx2 = ctx_for(manager, "b.m1", t=3)
        handle_missile_move(ctx2, WarEvent(MISSILE_MOVE, "b.m1", "b.m1", 3, target_name="r"))
        pos1 = manager.store.entity_state_after("b.m1", ctx1.key).position
        pos2 = manager.store.entity_state_after("b.m1", ctx2.key).position
        assert distance(pos2, CubeCoord(6, -2, -4)) < distance(pos1, CubeCoord(6, -2, -4))


class TestAttack:
    def _armed_world(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "ground_force", CubeCoord(2, -2, 0))])
        k0 = EventKey(1, "b", "b", 0)
        missile = EntityState("blue", "missile", True, CubeCoord(2, -2, 0), False,
                              missile_target="r", shooter="b")
        manager.store.apply(("we", k0, "b.m1", missile))
        manager.store.apply(("ca", k0, manager.cell_index(CubeCoord(2, -2, 0)), "b.m1"))
        st = manager.store.read_entity("b", k0, "x", record=False)
        manager.store.apply(("we", EventKey(1, "b", "b", 1), "b", st._replace(weapon_ready=False)))
        return manager

    def test_attack_kills_and_cleans_up(self):
        manager = self._armed_world()
        end = EventKey(40, "", "", 0)
        before = sum(len(v) for v in manager.store.occupancy_at(end).values())
        ctx = ctx_for(manager, "r", t=3)
        handle_attack(ctx, WarEvent(ATTACK, "b.m1", "r", 3, target_name="r"))
        assert ctx.events == []  # the cycle ends here
        after_occ = sum(len(v) for v in manager.store.occupancy_at(end).values())
        assert before - after_occ == 2  # tank and missile leave the grid
        assert manager.store.entity_state_after("r", ctx.key).alive is False
        assert manager.store.entity_state_after("b", ctx.key).weapon_ready is True
        assert len(ctx.records) == 1
        assert ctx.records[0].destroyed == "r"

    def test_double_attack_is_a_noop(self):
        manager = self._armed_world()
        ctx = ctx_for(manager, "r", t=3)
        handle_attack(ctx, WarEvent(ATTACK, "b.m1", "r", 3, target_name="r"))
        ctx2 = HandlerContext(manager, EventKey(4, "r", "b.m1", 1),
                              SolverConfig(seed=5))
        handle_attack(ctx2, WarEvent(ATTACK, "b.m1", "r", 4, target_name="r"))
        assert ctx2.records == []
        assert manager.store.entity_state_after("r", ctx2.key).alive is False


class TestSearch:
    def test_no_entities_in_range(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "vessel", CubeCoord(8, -8, 0))], map_radius=12)
        ctx = ctx_for(manager, "b")
        assert search_entities(ctx, ORIGIN, 2, "blue") is None

    def test_closer_ring_wins(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("near", "red", "vessel", CubeCoord(1, -1, 0)),
                              ("far", "red", "vessel", CubeCoord(2, -2, 0))])
        ctx = ctx_for(manager, "b")
        assert search_entities(ctx, ORIGIN, 2, "blue") == "near"

    def test_zero_radius_skips_scan(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "vessel", CubeCoord(1, -1, 0))])
        ctx = ctx_for(manager, "b")
        assert search_entities(ctx, ORIGIN, 0, "blue") is None
        assert brute_force_search(ctx, ORIGIN, 0, "blue") is None

    def test_negative_radius_skips_scan(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "vessel", CubeCoord(1, -1, 0))])
        ctx = ctx_for(manager, "b")
        assert search_entities(ctx, ORIGIN, -3, "blue") is None

    def test_invalid_center_skips_scan(self):
        manager = make_world([("r", "red", "vessel", CubeCoord(1, -1, 0))])
        ctx = ctx_for(manager, "r")
        assert search_entities(ctx, CubeCoord(1, 1, 1), 2, "blue") is None

    def test_missiles_are_invalid_targets(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN)])
        k0 = EventKey(0, "b", "init", 0)
        missile = EntityState("red", "missile", True, CubeCoord(1, -1, 0), False,
                              missile_target="b", shooter="x")
        manager.store.apply(("we", k0, "enemy.m1", missile))
        manager.store.apply(("ca", k0, manager.cell_index(CubeCoord(1, -1, 0)), "enemy.m1"))
        ctx = ctx_for(manager, "b")
        assert search_entities(ctx, ORIGIN, 2, "blue") is None

    def test_dead_candidates_skipped(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN),
                              ("r", "red", "vessel", CubeCoord(1, -1, 0))])
        k0 = EventKey(0, "r", "init", 1)
        st = manager.store.read_entity("r", EventKey(1, "b", "b", 0), "x", record=False)
        manager.store.apply(("we", k0, "r", st._replace(alive=False)))
        manager.store.apply(("cr", k0, manager.cell_index(CubeCoord(1, -1, 0)), "r"))
        ctx = ctx_for(manager, "b")
        assert search_entities(ctx, ORIGIN, 2, "blue") is None

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force_on_random_worlds(self, seed):
        rng = random.Random(seed)
        entries = []
        used = set()
        for i in range(rng.randint(5, 120)):
            x, y = rng.randint(-10, 10), rng.randint(-10, 10)
            pos = CubeCoord(x, y, -x - y)
            if abs(pos.z) > 10 or pos in used or distance(ORIGIN, pos) > 12:
                continue
            used.add(pos)
            side = rng.choice(["blue", "red"])
            etype = rng.choice(["aircraft", "ground_force", "vessel"])
            entries.append((f"{side}_{etype}_{i}", side, etype, pos))
        manager = make_world(entries, map_radius=12)
        for name, profile in manager.profiles.items():
            ctx_a = ctx_for(manager, name)
            ctx_b = ctx_for(manager, name)
            st = manager.store.entity_state_at(name, ctx_a.key)
            got = search_entities(ctx_a, st.position, 4, st.side)
            want = brute_force_search(ctx_b, st.position, 4, st.side)
            assert got == want, f"{name} at {st.position}: {got} != {want}"


class TestSharedWorldManager:
    def test_move_transfers_occupancy(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN)])
        key = EventKey(1, "b", "b", 0)
        st = manager.store.read_entity("b", key, "x", record=False)
        new = st._replace(position=CubeCoord(1, -1, 0))
        manager.update_entity_state_info(key, "b", st, new)
        end = EventKey(9, "", "", 0)
        occ = manager.store.occupancy_at(end)
        assert occ[manager.cell_index(CubeCoord(1, -1, 0))] == ("b",)
        assert manager.cell_index(ORIGIN) not in occ

    def test_noop_update_changes_nothing_spatial(self):
        manager = make_world([("b", "blue", "aircraft", ORIGIN)])
        key = EventKey(1, "b", "b", 0)
        st = manager.store.read_entity("b", key, "x", record=False)
        manager.update_entity_state_info(key, "b", st, st._replace(weapon_ready=False))
        occ = manager.store.occupancy_at(EventKey(9, "", "", 0))
        assert occ[manager.cell_index(ORIGIN)] == ("b",)

    def test_concurrent_updates_conserve_occupancy(self):
        entries = [(f"b{i}", "blue", "aircraft", CubeCoord(i, -i, 0)) for i in range(8)]
        manager = make_world(entries, map_radius=12)
        errors = []

        def mover(name, i):
            try:
                for t in range(1, 40):
                    key = EventKey(t, name, name, 0)
                    st = manager.store.read_entity(name, key, name, record=False)
                    new_pos = CubeCoord(i, -i - (t % 3), t % 3)
                    manager.update_entity_state_info(key, name, st, st._replace(position=new_pos))
            except Exception as exc:  # noqa: BLE001
                errors.append(exc)

        threads = [threading.Thread(target=mover, args=(f"b{i}", i)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        occ = manager.store.occupancy_at(EventKey(99, "", "", 0))
        assert sum(len(v) for v in occ.values()) == 8


def test_handle_event_dispatch_rejects_unknown_kind():
    manager = make_world([("b", "blue", "aircraft", ORIGIN)])
    ctx = ctx_for(manager, "b")
    with pytest.raises(ValueError):
        handle_event(ctx, WarEvent("teleport", "b", "b", 1))
