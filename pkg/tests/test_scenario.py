"""Scenario generation determinism, validation, and file round-trips."""

import pytest

from warpgrid.hexgrid import ORIGIN, distance
from warpgrid.scenario import (
    ScenarioError,
    TYPE_ATTRIBUTES,
    generate,
    load,
    save,
    symmetric_counts,
)


def test_empty_counts_give_empty_roster():
    scn = generate({}, map_radius=5, seed=1)
    assert scn.roster == []


def test_positions_unique_and_inside_map():
    scn = generate(symmetric_counts({"aircraft": 25, "ground_force": 25}), 50, seed=7)
    assert len(scn.roster) == 100
    positions = [p.position for p in scn.roster]
    assert len(set(positions)) == 100
    assert all(distance(ORIGIN, p) <= 50 for p in positions)


def test_same_seed_same_scenario_file(tmp_path):
    counts = symmetric_counts({"aircraft": 10, "vessel": 5})
    a, b = tmp_path / "a.scn", tmp_path / "b.scn"
    save(generate(counts, 30, seed=42), a)
    save(generate(counts, 30, seed=42), b)
    assert a.read_bytes() == b.read_bytes()


def test_over_capacity_rejected():
    with pytest.raises(ScenarioError, match="exceed map capacity"):
        generate(symmetric_counts({"aircraft": 50}), 2, seed=1)


def test_table_attributes_applied():
    scn = generate(symmetric_counts({"aircraft": 1, "ground_force": 1,
                                     "vessel": 1, "ground_structure": 1}), 10, seed=3)
    by_type = {p.entity_type: p for p in scn.roster if p.side == "blue"}
    assert (by_type["aircraft"].detection_range, by_type["aircraft"].attack_range,
            by_type["aircraft"].speed) == (2, 2, 4)
    assert (by_type["ground_force"].detection_range, by_type["ground_force"].speed) == (1, 2)
    assert (by_type["vessel"].detection_range, by_type["vessel"].speed) == (2, 2)
    assert (by_type["ground_structure"].detection_range, by_type["ground_structure"].speed) == (0, 0)


def test_round_trip_is_byte_identical(tmp_path):
    scn = generate(symmetric_counts({"aircraft": 100, "ground_force": 300,
                                     "vessel": 80, "ground_structure": 20}), 60, seed=9)
    path = tmp_path / "big.scn"
    save(scn, path)
    loaded = load(path)
    second = tmp_path / "big2.scn"
    save(loaded, second)
    assert path.read_bytes() == second.read_bytes()
    assert len(loaded.roster) == 1000


def test_defaults_applied_when_attributes_omitted(tmp_path):
    path = tmp_path / "s.scn"
    path.write_text("warpgrid-scenario v1\nmap_radius 5\nseed 1\nmax_time 10\n"
                    "entity b1 blue aircraft 0 0 0\n"
                    "entity r1 red vessel 1 -1 0 detect=4 attack=3 speed=1\n")
    scn = load(path)
    b1 = scn.profile("b1")
    assert (b1.detection_range, b1.attack_range, b1.speed) == TYPE_ATTRIBUTES["aircraft"]
    r1 = scn.profile("r1")
    assert (r1.detection_range, r1.attack_range, r1.speed) == (4, 3, 1)


def test_corrupt_file_reports_every_error_with_line_numbers(tmp_path):
    path = tmp_path / "bad.scn"
    path.write_text("warpgrid-scenario v1\nmap_radius 5\nseed 1\nmax_time 10\n"
                    "entity ok blue aircraft 0 0 0\n"
                    "entity bad purple aircraft 0 0 0\n"
                    "entity worse blue dragon 1 1 1\n"
                    "entity ok blue aircraft 1 -1 0\n"
                    "bogus line here\n")
    with pytest.raises(ScenarioError) as err:
        load(path)
    messages = err.value.errors
    assert any("line 6" in m and "purple" in m for m in messages)
    assert any("line 7" in m and "dragon" in m for m in messages)
    assert any("line 8" in m and "duplicate" in m for m in messages)
    assert any("line 9" in m for m in messages)


def test_off_map_position_rejected(tmp_path):
    path = tmp_path / "far.scn"
    path.write_text("warpgrid-scenario v1\nmap_radius 3\nseed 1\nmax_time 10\n"
                    "entity b1 blue aircraft 9 -9 0\n")
    with pytest.raises(ScenarioError, match="outside map radius"):
        load(path)


def test_zero_sum_violation_rejected(tmp_path):
    path = tmp_path / "sum.scn"
    path.write_text("warpgrid-scenario v1\nmap_radius 3\nseed 1\nmax_time 10\n"
                    "entity b1 blue aircraft 1 1 1\n")
    with pytest.raises(ScenarioError, match="sum to zero"):
        load(path)


def test_dotted_names_reserved(tmp_path):
    path = tmp_path / "dot.scn"
    path.write_text("warpgrid-scenario v1\nmap_radius 3\nseed 1\nmax_time 10\n"
                    "entity b.1 blue aircraft 0 0 0\n")
    with pytest.raises(ScenarioError, match="reserved"):
        load(path)


def test_missing_header_field(tmp_path):
    path = tmp_path / "nohdr.scn"
    path.write_text("warpgrid-scenario v1\nmap_radius 5\nseed 1\n")
    with pytest.raises(ScenarioError, match="max_time"):
        load(path)
