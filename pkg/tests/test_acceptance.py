"""Acceptance criteria, one test per criterion, with pass/fail lines.

Criteria 1-10 cover the engine, solver, balancer, and metrics; criterion
11 (operator panel round trip) lives with the frontend package and its
end-to-end test.  Each test prints `ACCEPTANCE <n>: PASS/FAIL (detail)`
so the suite output doubles as the acceptance report.

Note on criterion 5: the speedup thresholds are hardware-dependent by the
criterion's own wording.  This host exposes 2 CPU cores to CPython with a
GIL, which bounds any honest CPU-bound speedup below the 3x threshold;
the test measures and asserts faithfully rather than relabeling.
"""

import random
import time

import pytest

from warpgrid import balance
from warpgrid.gvt import GvtRound, reclaim_threshold
from warpgrid.hexgrid import ORIGIN, CubeCoord, distance
from warpgrid.listener import Listener
from warpgrid.metrics import SensitivityRecord, efficiency, sensitivity
from warpgrid.runner import RunConfig, Session, run_simulation
from warpgrid.scenario import EntityProfile, Scenario, generate, symmetric_counts
from warpgrid.solver import (
    RECON,
    HandlerContext,
    SolverConfig,
    WarEvent,
    brute_force_search,
    handle_event,
    initialize_entities,
    search_entities,
)
from warpgrid.vtime import EventKey


def report(n, ok, detail=""):
    print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}"
          + (f" ({detail})" if detail else ""))
    return ok


def trace_of(result):
    return [r.encode() for r in result.records]


@pytest.fixture(scope="module")
def thousand_entity_scenario():
    counts = symmetric_counts({"aircraft": 150, "ground_force": 200,
                               "vessel": 100, "ground_structure": 50})
    return generate(counts, map_radius=60, seed=7, max_time=100)


def test_criterion_1_oracle_equivalence(thousand_entity_scenario):
    """Byte-identical traces: workers {1,2,4,8} x topologies {1,2 nodes}."""
    scn = thousand_entity_scenario
    t0 = time.monotonic()
    reference = None
    results = {}
    for nodes in (1, 2):
        for workers in (1, 2, 4, 8):
            mode = "balanced" if nodes > 1 else "static"
            result = run_simulation(
                RunConfig(scenario=scn, workers=workers, nodes=nodes,
                          partition_mode=mode),
                max_wall=120)
            trace = trace_of(result)
            if reference is None:
                reference = trace
            results[(workers, nodes)] = trace == reference
    elapsed = time.monotonic() - t0
    all_equal = all(results.values())
    ok = all_equal and elapsed < 60.0
    assert report(1, ok, f"8 runs, identical={all_equal}, {elapsed:.1f}s < 60s") or ok
    assert all_equal
    assert elapsed < 60.0


def test_criterion_2_injection_equivalence():
    """20 randomized (scenario, events) pairs: live injection == prescheduled."""
    t0 = time.monotonic()
    mismatches = []
    for pair in range(20):
        rng = random.Random(1000 + pair)
        counts = symmetric_counts({
            "aircraft": rng.randint(2, 5),
            "ground_force": rng.randint(2, 5),
        })
        scn = generate(counts, map_radius=rng.randint(10, 16), seed=rng.randint(1, 10_000),
                       max_time=20)
        live = Session(RunConfig(scenario=scn, workers=2, control=True, gc_rounds=100))
        live.start()
        live.run_until_quiescent(max_wall=60)
        base_t = max(1, int(live.injection_horizon))
        roster = [p.name for p in scn.roster]
        events = [WarEvent(RECON, "__operator__", rng.choice(roster),
                           min(20, base_t + rng.randint(0, 4)))
                  for _ in range(rng.randint(1, 3))]
        for ev in events:
            live.schedule_operator_event(ev)
        live_result = live.finish(max_wall=60)
        pre = run_simulation(
            RunConfig(scenario=scn, workers=2, gc_rounds=100,
                      extra_events=[(e.time, e.receiver, e) for e in events]),
            max_wall=60)
        if trace_of(live_result) != trace_of(pre) or live_result.final_states != pre.final_states:
            mismatches.append(pair)
    elapsed = time.monotonic() - t0
    ok = not mismatches and elapsed < 120.0
    report(2, ok, f"20 pairs, mismatches={mismatches}, {elapsed:.1f}s < 120s")
    assert not mismatches
    assert elapsed < 120.0


def _random_world(rng, n_entities, map_radius):
    roster = []
    used = set()
    attempts = 0
    while len(roster) < n_entities and attempts < n_entities * 30:
        attempts += 1
        x = rng.randint(-map_radius, map_radius)
        y = rng.randint(-map_radius, map_radius)
        pos = CubeCoord(x, y, -x - y)
        if abs(pos.z) > map_radius or distance(ORIGIN, pos) > map_radius or pos in used:
            continue
        used.add(pos)
        i = len(roster)
        side = "blue" if rng.random() < 0.5 else "red"
        etype = rng.choice(["aircraft", "ground_force", "vessel"])
        roster.append(EntityProfile.for_type(f"{side[0]}{etype[0]}{i}", side, etype, pos))
    scn = Scenario(map_radius=map_radius, seed=1, max_time=10, roster=roster)
    manager = initialize_entities(scn)
    manager.store.record_reads = False
    return manager


def test_criterion_3_search_equivalence():
    """Ring search == brute force on 1,000 random worlds up to 5,000 entities."""
    rng = random.Random(30_000)
    sizes = [rng.randint(2, 60) for _ in range(970)]
    sizes += [rng.randint(200, 1000) for _ in range(20)]
    sizes += [rng.randint(2000, 5000) for _ in range(10)]
    checked = 0
    mismatches = 0
    for world_i, size in enumerate(sizes):
        radius = max(8, int((size * 1.5) ** 0.5) + 2)
        manager = _random_world(rng, size, radius)
        names = sorted(manager.profiles)
        sample = names if len(names) <= 8 else rng.sample(names, 8)
        for name in sample:
            profile = manager.profiles[name]
            key = EventKey(1, name, name, 0)
            ctx = HandlerContext(manager, key, SolverConfig(seed=1))
            st = manager.store.entity_state_at(name, key)
            got = search_entities(ctx, st.position, profile.detection_range, st.side)
            want = brute_force_search(ctx, st.position, profile.detection_range, st.side)
            checked += 1
            if got != want:
                mismatches += 1
    ok = mismatches == 0 and len(sizes) == 1000
    report(3, ok, f"{len(sizes)} worlds, {checked} searches, mismatches={mismatches}")
    assert mismatches == 0


def test_criterion_4_search_performance():
    """At 50,000 entities, neighbor queries >= 10x faster than brute force."""
    t0 = time.monotonic()
    rng = random.Random(4)
    manager = _random_world(rng, 50_000, map_radius=150)
    assert len(manager.profiles) == 50_000
    names = sorted(manager.profiles)
    searchers = rng.sample(names, 400)
    key = EventKey(1, "bench", "bench", 0)

    def one_query(fn, name):
        profile = manager.profiles[name]
        ctx = HandlerContext(manager, key, SolverConfig(seed=1))
        st = manager.store.entity_state_at(name, key)
        return fn(ctx, st.position, profile.detection_range, st.side)

    t_n = time.monotonic()
    for name in searchers:
        one_query(search_entities, name)
    neighbor_mean = (time.monotonic() - t_n) / len(searchers)

    brute_sample = searchers[:25]
    t_b = time.monotonic()
    for name in brute_sample:
        one_query(brute_force_search, name)
    brute_mean = (time.monotonic() - t_b) / len(brute_sample)

    ratio = brute_mean / neighbor_mean
    elapsed = time.monotonic() - t0
    ok = ratio >= 10.0 and elapsed < 300.0
    report(4, ok, f"neighbor {neighbor_mean*1e6:.0f}us vs brute {brute_mean*1e6:.0f}us, "
                  f"ratio {ratio:.1f}x >= 10x, {elapsed:.0f}s < 300s")
    assert ratio >= 10.0
    assert elapsed < 300.0


@pytest.fixture(scope="module")
def twenty_k_scenario():
    counts = symmetric_counts({"aircraft": 1500, "ground_force": 2000,
                               "vessel": 1000, "ground_structure": 500})
    return generate(counts, map_radius=150, seed=5, max_time=12)


def test_criterion_5_parallel_speedup(twenty_k_scenario):
    """8 workers >= 3x over 1 worker; monotone non-increasing wall times.

    Hardware note: this host gives CPython 2 cores under a GIL, so worker
    threads cannot produce CPU-bound speedup; the criterion is asserted
    faithfully and the measured numbers are printed either way.
    """
    scn = twenty_k_scenario
    walls = {}
    for workers in (1, 2, 4, 8):
        t0 = time.monotonic()
        run_simulation(RunConfig(scenario=scn, workers=workers), max_wall=600)
        walls[workers] = time.monotonic() - t0
    speedup = walls[1] / walls[8]
    monotone = all(walls[a] >= walls[b] - 1e-9
                   for a, b in ((1, 2), (2, 4), (4, 8)))
    detail = (f"walls {[f'{w}w={walls[w]:.1f}s' for w in (1, 2, 4, 8)]}, "
              f"8w speedup {speedup:.2f}x (need >= 3), monotone={monotone}")
    ok = speedup >= 3.0 and monotone
    report(5, ok, detail)
    assert monotone, f"wall times not monotone non-increasing: {walls}"
    assert speedup >= 3.0, (
        f"measured {speedup:.2f}x; 2-core GIL-bound host cannot reach 3x "
        f"thread speedup for CPU-bound event processing")


def test_criterion_6_load_balancing(tmp_path):
    """Skewed node (~5x events) : balance+migration >= 25% faster than
    static, and max/min per-worker committed ratio < 1.5."""
    from warpgrid.cluster import run_cluster
    from warpgrid.scenario import save
    from warpgrid.transport import free_port

    counts = symmetric_counts({"aircraft": 160, "ground_force": 160, "vessel": 80})
    scn = generate(counts, map_radius=40, seed=6, max_time=30)
    scn_path = tmp_path / "skew.scn"
    save(scn, scn_path)
    topo = tmp_path / "topo.txt"
    topo.write_text(f"0 127.0.0.1:{free_port()}\n1 127.0.0.1:{free_port()}\n")
    # One node seeded with ~5x the entities (and hence ~5x the events).
    names = sorted(p.name for p in scn.roster)
    skew = {name: (0 if i < len(names) * 5 // 6 else 1)
            for i, name in enumerate(names)}

    def timed(mode, assignment=None):
        cfg = RunConfig(scenario=scn, workers=2, partition_mode=mode,
                        assignment=assignment, gvt_cadence=800)
        t0 = time.monotonic()
        result = run_cluster(cfg, topo, scn_path)
        return time.monotonic() - t0, result

    static_wall, static_result = timed("static", skew)
    balanced_wall, balanced_result = timed("balanced+migration")
    reduction = (static_wall - balanced_wall) / static_wall
    per_worker = [n for n in balanced_result.commit_matrix.values() if n > 0]
    ratio = max(per_worker) / min(per_worker)
    same = trace_of(static_result) == trace_of(balanced_result)
    ok = reduction >= 0.25 and ratio < 1.5 and same
    report(6, ok, f"static {static_wall:.1f}s vs balanced {balanced_wall:.1f}s "
                  f"(-{reduction*100:.0f}%, need >= 25%), worker ratio {ratio:.2f} < 1.5, "
                  f"traces identical={same}")
    assert same
    assert reduction >= 0.25
    assert ratio < 1.5


def test_criterion_7_partitioner_properties():
    """100 random graphs: balance, non-increasing refinement, beats random;
    4-vertex instances equal brute-force optimum."""
    import itertools

    rng = random.Random(70)
    failures = []
    for trial in range(100):
        k = rng.choice([2, 3, 4])
        n = rng.randint(10 * k, 200)
        g = balance.InteractionGraph()
        names = [f"v{i:03d}" for i in range(n)]
        for name in names:
            g.add_vertex(name, 1)
        for _ in range(int(n * 1.8)):
            a, b = rng.sample(names, 2)
            g.add_edge(a, b, rng.randint(1, 10))
        result = balance.partition(g, k, bf=1.10)
        if set(result.part_of) != set(g.vertices):
            failures.append((trial, "coverage"))
        if result.imbalance > 1.10 + 1e-9:
            failures.append((trial, f"imbalance {result.imbalance:.3f}"))
        if result.cut > result.initial_cut:
            failures.append((trial, "refinement increased cut"))
        if result.cut > balance.random_assignment_cut(g, k, seed=trial):
            failures.append((trial, "worse than random"))
    brute_failures = 0
    for trial in range(30):
        g = balance.InteractionGraph()
        names = ["a", "b", "c", "d"]
        for v in names:
            g.add_vertex(v, 1)
        for a, b in itertools.combinations(names, 2):
            if rng.random() < 0.7:
                g.add_edge(a, b, rng.randint(1, 9))
        result = balance.partition(g, 2, bf=1.10)
        best = min(balance.cut_weight(g, dict(zip(names, bits)))
                   for bits in itertools.product((0, 1), repeat=4) if sum(bits) == 2)
        if result.cut != best:
            brute_failures += 1
    ok = not failures and brute_failures == 0
    report(7, ok, f"100 graphs failures={failures[:3]}, "
                  f"4-vertex brute mismatches={brute_failures}")
    assert not failures
    assert brute_failures == 0


def test_criterion_8_gc_deferral():
    """K=4: history survives exactly 4 rounds; injection >= horizon accepted,
    below horizon rejected."""
    scn = generate(symmetric_counts({"aircraft": 4, "ground_force": 4}),
                   map_radius=12, seed=13, max_time=40)
    session = Session(RunConfig(scenario=scn, workers=1, gc_rounds=4, control=True))
    listener = Listener(session)
    listener.open_channel()
    session.start()
    session.run_until_quiescent(max_wall=60)
    node = session.nodes[0]
    session.history.clear()
    session.commit_time = 0.0

    def survivors_below(t):
        return sum(1 for lp in node.lps.values() for e in lp.processed if e.key.time < t)

    stage_ok = survivors_below(10) > 0
    for value in (10.0, 20.0, 30.0, 40.0):
        session.history.append(GvtRound(len(session.history) + 1, value, {0: value}))
        node.collect_garbage(reclaim_threshold(session.history, session.policy))
        stage_ok = stage_ok and survivors_below(10) > 0
    session.history.append(GvtRound(5, 50.0, {0: 50.0}))
    threshold = reclaim_threshold(session.history, session.policy)
    session.commit_time = max(session.commit_time, threshold)
    node.collect_garbage(threshold)
    reclaimed_exactly = survivors_below(10) == 0 and threshold == 10.0

    accepted, errors = listener.inject([{"receiver": "blue_aircraft_0", "time": 10}])
    horizon_accept = accepted == 1 and not errors
    accepted2, errors2 = listener.inject([{"receiver": "blue_aircraft_0", "time": 9}])
    below_reject = accepted2 == 0 and len(errors2) == 1 and "horizon" in errors2[0]

    ok = stage_ok and reclaimed_exactly and horizon_accept and below_reject
    report(8, ok, f"survived 4 rounds={stage_ok}, reclaimed at round 5={reclaimed_exactly}, "
                  f"inject@10 accepted={horizon_accept}, inject@9 rejected={below_reject}")
    listener.close_channel()
    session.finish(max_wall=60)
    assert stage_ok and reclaimed_exactly and horizon_accept and below_reject


def test_criterion_9_metrics_exactness():
    """Reference sensitivity column and efficiency point reproduce exactly."""
    checks = [
        (SensitivityRecord(500, 1500, 26, 46), 0.384615385),
        (SensitivityRecord(500, 1500, 27, 48), 0.388888889),
        (SensitivityRecord(1500, 2500, 46, 65), 0.619565217),
        (SensitivityRecord(1500, 2500, 48, 69), 0.65625),
        (SensitivityRecord(2500, 5000, 65, 98), 0.507692308),
        (SensitivityRecord(5000, 7500, 98, 135), 0.755102041),
        (SensitivityRecord(7500, 10000, 135, 174), 0.866666667),
    ]
    bad = [(rec, want, sensitivity(rec)[0]) for rec, want in checks
           if abs(sensitivity(rec)[0] - want) > 1e-9]
    eff_ok = efficiency(8.5, 16) == 0.53125
    ok = not bad and eff_ok
    report(9, ok, f"{len(checks)} sensitivity values to 1e-9, 8.5/16 == 0.53125: {eff_ok}")
    assert not bad
    assert eff_ok


def test_criterion_10_correctness_case_suite():
    """The edge-case battery, five repetitions each, zero errors."""
    rng = random.Random(10)
    manager = _random_world(rng, 100, map_radius=14)
    hostile_pairs = [(n, p) for n, p in manager.profiles.items()]
    key = EventKey(1, "probe", "probe", 0)

    def ctx():
        return HandlerContext(manager, key, SolverConfig(seed=1))

    def run_case(fn):
        outcomes = []
        for _ in range(5):
            outcomes.append(fn())
        return outcomes

    errors = []

    def case(name, fn, expect=None):
        try:
            outcomes = run_case(fn)
        except Exception as exc:  # noqa: BLE001 - the criterion demands zero errors
            errors.append(f"{name}: {exc!r}")
            return
        if len(set(map(repr, outcomes))) != 1:
            errors.append(f"{name}: unstable outcomes {outcomes}")
        if expect is not None and outcomes[0] != expect:
            errors.append(f"{name}: {outcomes[0]!r} != {expect!r}")

    some = hostile_pairs[0][1]
    case("normal search",
         lambda: isinstance(search_entities(ctx(), some.position, 2, some.side), (str, type(None))),
         expect=True)
    case("radius 0", lambda: search_entities(ctx(), some.position, 0, some.side), expect=None)
    case("radius 1",
         lambda: search_entities(ctx(), some.position, 1, some.side)
         == brute_force_search(ctx(), some.position, 1, some.side),
         expect=True)
    case("invalid center", lambda: search_entities(ctx(), CubeCoord(1, 1, 1), 2, "blue"),
         expect=None)
    case("negative radius", lambda: search_entities(ctx(), some.position, -2, some.side),
         expect=None)
    case("empty war event",
         lambda: handle_event(ctx(), WarEvent(RECON, "", "", 1)), expect=None)

    # Seed a temporary (missile) entity next to the searcher: it must be
    # skipped as a target by both strategies.
    from warpgrid.solver import EntityState

    tmp_state = EntityState("red" if some.side == "blue" else "blue", "missile",
                            True, some.position, False, "x", "y")
    tmp_key = EventKey(0, "tmp", "init", 0)
    manager.store.apply(("we", tmp_key, "tmp.m0", tmp_state))
    tmp_cell = manager.cell_index(some.position)
    manager.store.apply(("ca", tmp_key, tmp_cell, "tmp.m0"))
    case("invalid temporary entity",
         lambda: search_entities(ctx(), some.position, 1, some.side)
         == brute_force_search(ctx(), some.position, 1, some.side), expect=True)

    def hostile():
        enemy = next(p for n, p in hostile_pairs if p.side != some.side)
        got = brute_force_search(ctx(), enemy.position, 4, some.side)
        return got is None or manager.profiles[got].side != some.side

    case("process hostile units", hostile, expect=True)
    case("large range search",
         lambda: search_entities(ctx(), some.position, 40, some.side)
         == brute_force_search(ctx(), some.position, 40, some.side), expect=True)

    ok = not errors
    report(10, ok, f"9 cases x 5 repetitions, errors={errors[:3]}")
    assert not errors
