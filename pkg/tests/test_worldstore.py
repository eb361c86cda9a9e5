"""Versioned world store: visibility, invalidation, undo, pruning."""

from warpgrid.vtime import EventKey
from warpgrid.worldstore import WorldStore


def k(t, recv="a", send="s", seq=0):
    return EventKey(t, recv, send, seq)


class TestEntityVersions:
    def test_base_visible_before_any_write(self):
        ws = WorldStore()
        ws.register_base("tank", ("red", True), cell_index=None)
        assert ws.read_entity("tank", k(5), reader_lp="x") == ("red", True)

    def test_reads_see_latest_version_below_key(self):
        ws = WorldStore()
        ws.register_base("tank", "s0", None)
        ws.apply(("we", k(2), "tank", "s2"))
        ws.apply(("we", k(4), "tank", "s4"))
        assert ws.read_entity("tank", k(1), "x") == "s0"
        assert ws.read_entity("tank", k(3), "x") == "s2"
        assert ws.read_entity("tank", k(9), "x") == "s4"
        # An event does not see its own key's version through read_entity.
        assert ws.read_entity("tank", k(4), "x") == "s2"
        assert ws.entity_state_after("tank", k(4)) == "s4"

    def test_unknown_entity_reads_none(self):
        ws = WorldStore()
        assert ws.read_entity("ghost", k(1), "x") is None

    def test_write_invalidates_interval_readers_only(self):
        ws = WorldStore()
        ws.register_base("tank", "s0", None)
        ws.apply(("we", k(2), "tank", "s2"))
        ws.read_entity("tank", k(1), "early")   # saw base
        ws.read_entity("tank", k(3), "late")    # saw s2
        ws.read_entity("tank", k(9), "later")   # saw s2
        hit = ws.apply(("we", k(5), "tank", "s5"))
        # Only the reader whose interval (s2, 9) contains key 5 is hit.
        assert hit == {("later", k(9))}

    def test_undo_invalidates_readers_of_that_version(self):
        ws = WorldStore()
        ws.register_base("tank", "s0", None)
        ws.apply(("we", k(2), "tank", "s2"))
        ws.read_entity("tank", k(3), "saw2")
        ws.read_entity("tank", k(1), "saw0")
        hit = ws.undo(k(2))
        assert hit == {("saw2", k(3))}
        assert ws.read_entity("tank", k(3), "saw2") == "s0"

    def test_discarded_reads_do_not_refire(self):
        ws = WorldStore()
        ws.register_base("tank", "s0", None)
        ws.read_entity("tank", k(3), "r")
        ws.discard_reads("r", k(3))
        assert ws.apply(("we", k(2), "tank", "s2")) == set()


class TestCellVersions:
    def test_occupancy_deltas(self):
        ws = WorldStore()
        ws.register_base("a", "sa", 7)
        ws.register_base("b", "sb", 7)
        assert ws.read_cell(7, k(1), "x") == ("a", "b")
        ws.apply(("cr", k(2), 7, "a"))
        ws.apply(("ca", k(4), 7, "c"))
        assert ws.read_cell(7, k(3), "x") == ("b",)
        assert ws.read_cell(7, k(5), "x") == ("b", "c")

    def test_straggler_delta_rebuilds_later_snapshots(self):
        ws = WorldStore()
        ws.apply(("ca", k(2), 9, "a"))
        ws.apply(("ca", k(6), 9, "c"))
        assert ws.read_cell(9, k(7), "x", record=False) == ("a", "c")
        # Straggler insert at key 4 must appear in the key-6 snapshot too.
        ws.apply(("ca", k(4), 9, "b"))
        assert ws.read_cell(9, k(5), "x", record=False) == ("a", "b")
        assert ws.read_cell(9, k(7), "x", record=False) == ("a", "b", "c")

    def test_straggler_delta_invalidates_every_later_reader(self):
        ws = WorldStore()
        ws.apply(("ca", k(2), 9, "a"))
        ws.apply(("ca", k(6), 9, "c"))
        ws.read_cell(9, k(3), "r3")
        ws.read_cell(9, k(7), "r7")
        hit = ws.apply(("ca", k(4), 9, "b"))
        assert hit == {("r7", k(7))}

    def test_append_delta_uses_precise_interval_rule(self):
        ws = WorldStore()
        ws.apply(("ca", k(2), 9, "a"))
        ws.read_cell(9, k(3), "r3")
        hit = ws.apply(("ca", k(5), 9, "b"))
        assert hit == set()

    def test_mid_chain_undo_rebuilds_and_invalidates(self):
        ws = WorldStore()
        ws.apply(("ca", k(2), 9, "a"))
        ws.apply(("cr", k(4), 9, "a"))
        ws.apply(("ca", k(6), 9, "b"))
        ws.read_cell(9, k(5), "r5")
        ws.read_cell(9, k(7), "r7")
        hit = ws.undo(k(4))
        assert hit == {("r5", k(5)), ("r7", k(7))}
        assert ws.read_cell(9, k(5), "x", record=False) == ("a",)
        assert ws.read_cell(9, k(7), "x", record=False) == ("a", "b")


class TestJournalAndPrune:
    def test_undo_reverts_every_target_of_the_event(self):
        ws = WorldStore()
        ws.register_base("m", "alive", 1)
        key = k(5)
        ws.apply(("we", key, "m", "dead"))
        ws.apply(("cr", key, 1, "m"))
        ws.apply(("ca", key, 2, "m"))
        ws.undo(key)
        assert ws.read_entity("m", k(9), "x", record=False) == "alive"
        assert ws.read_cell(1, k(9), "x", record=False) == ("m",)
        assert ws.read_cell(2, k(9), "x", record=False) == ()

    def test_prune_collapses_old_versions_into_base(self):
        ws = WorldStore()
        ws.register_base("tank", "s0", None)
        for t in (1, 2, 3, 4, 5):
            ws.apply(("we", k(t), "tank", f"s{t}"))
        reclaimed = ws.prune_before(4)
        assert reclaimed == 3
        assert ws.version_count("tank") == 2
        assert ws.read_entity("tank", k(4), "x", record=False) == "s3"
        # Versions at or above the bound are untouched.
        assert ws.read_entity("tank", k(6), "x", record=False) == "s5"

    def test_prune_drops_stale_read_records(self):
        ws = WorldStore()
        ws.register_base("tank", "s0", None)
        ws.read_entity("tank", k(2), "old")
        ws.prune_before(4)
        # The old reader is gone; a write below its key cannot hit it.
        assert ws.apply(("we", k(1), "tank", "s1")) == set()


def test_op_forwarding_hook():
    seen = []
    ws = WorldStore(on_op=seen.append)
    ws.apply(("we", k(1), "a", "s"))
    ws.apply(("ca", k(1), 3, "a"), forward=False)
    ws.undo(k(1))
    assert [op[0] for op in seen] == ["we", "un"]


class TestRandomInterleavingOracle:
    """Random write/undo interleavings against a replay-from-scratch oracle.

    The store applies mutations in arrival order with its incremental
    bookkeeping; the oracle folds the surviving ops in key order from the
    base state.  Visible values must agree at every probe key.
    """

    def test_against_replay_oracle(self):
        import random

        rng = random.Random(2024)
        for trial in range(40):
            ws = WorldStore()
            names = ["a", "b", "c"]
            cells = [0, 1]
            home = {n: rng.choice(cells) for n in names}
            for n in names:
                ws.register_base(n, f"{n}-base", home[n])

            applied: dict = {}
            seq = 0
            for _ in range(rng.randint(10, 60)):
                seq += 1
                if applied and rng.random() < 0.3:
                    victim = rng.choice(sorted(applied))
                    ws.undo(victim)
                    del applied[victim]
                    continue
                key = k(rng.randint(1, 20), rng.choice(names), "s", seq)
                ops = []
                if rng.random() < 0.6:
                    ops.append(("we", key, rng.choice(names), f"v{seq}"))
                if rng.random() < 0.6:
                    tag = rng.choice(["ca", "cr"])
                    ops.append((tag, key, rng.choice(cells), rng.choice(names)))
                if not ops:
                    continue
                for op in ops:
                    ws.apply(op)
                applied[key] = ops

            def entity_at(name, at_key):
                value = f"{name}-base"
                for key in sorted(applied):
                    if key >= at_key:
                        break
                    for op in applied[key]:
                        if op[0] == "we" and op[2] == name:
                            value = op[3]
                return value

            def cell_at(cell, at_key):
                members = {n for n in names if home[n] == cell}
                for key in sorted(applied):
                    if key >= at_key:
                        break
                    for op in applied[key]:
                        if op[0] == "ca" and op[2] == cell:
                            members.add(op[3])
                        elif op[0] == "cr" and op[2] == cell:
                            members.discard(op[3])
                return tuple(sorted(members))

            for _ in range(12):
                probe = k(rng.randint(1, 22), "p", "p", rng.randint(0, 5))
                for n in names:
                    assert ws.read_entity(n, probe, "probe", record=False) == \
                        entity_at(n, probe), f"trial {trial} entity {n} at {probe}"
                for c in cells:
                    assert ws.read_cell(c, probe, "probe", record=False) == \
                        cell_at(c, probe), f"trial {trial} cell {c} at {probe}"
