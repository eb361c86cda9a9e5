"""Scenario generation, validation, and roster file I/O.

A scenario is a hex disk of a given radius plus a roster of entities with
initial positions.  Generation is a pure function of its arguments; the
file format is line oriented and versioned so saved scenarios diff and
round-trip byte-identically.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .hexgrid import ORIGIN, CubeCoord, disk_cell_count, distance

SIDES = ("blue", "red")

# Type name -> (detection range, attack range, movement speed) in grids.
# Ground structures are passive ("/" rows): they never detect, attack, or
# move.  Missiles are transient runtime entities, not roster members.
TYPE_ATTRIBUTES: dict[str, tuple[int, int, int]] = {
    "ground_structure": (0, 0, 0),
    "aircraft": (2, 2, 4),
    "ground_force": (1, 1, 2),
    "vessel": (2, 2, 2),
}

MISSILE_TYPE = "missile"
MISSILE_SPEED = 4  # grids per tick; fastest roster speed, configurable


@dataclass(frozen=True, slots=True)
class EntityProfile:
    """Static attributes of one roster entity."""

    name: str
    side: str
    entity_type: str
    position: CubeCoord
    detection_range: int
    attack_range: int
    speed: int

    @classmethod
    def for_type(cls, name: str, side: str, entity_type: str, position: CubeCoord,
                 detection_range: int | None = None, attack_range: int | None = None,
                 speed: int | None = None) -> "EntityProfile":
        base = TYPE_ATTRIBUTES[entity_type]
        return cls(
            name=name,
            side=side,
            entity_type=entity_type,
            position=position,
            detection_range=base[0] if detection_range is None else detection_range,
            attack_range=base[1] if attack_range is None else attack_range,
            speed=base[2] if speed is None else speed,
        )


@dataclass(slots=True)
class Scenario:
    map_radius: int
    seed: int
    max_time: int
    roster: list[EntityProfile] = field(default_factory=list)

    def profile(self, name: str) -> EntityProfile:
        for p in self.roster:
            if p.name == name:
                return p
        raise KeyError(name)


class ScenarioError(Exception):
    """Validation failure; carries every violation, not just the first."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


_SHORT = {"ground_structure": "structure", "aircraft": "aircraft",
          "ground_force": "tank", "vessel": "vessel"}


def generate(counts: Mapping[tuple[str, str], int], map_radius: int, seed: int,
             max_time: int = 100) -> Scenario:
    """Build a scenario with `counts[(side, type)]` entities of each kind.

    Positions are sampled uniformly over the disk without collision via
    rejection sampling, deterministic under the seed.  Raises ScenarioError
    when the roster exceeds the cell count of the map.
    """
    total = sum(counts.values())
    capacity = disk_cell_count(map_radius)
    if total > capacity:
        raise ScenarioError(
            [f"{total} entities exceed map capacity {capacity} at radius {map_radius}"])
    rng = random.Random(seed)
    occupied: set[CubeCoord] = set()

    def sample_cell() -> CubeCoord:
        # Rejection sampling over the bounding coordinate box; falls back to
        # a deterministic scan when the disk is nearly full.
        for _ in range(10_000):
            x = rng.randint(-map_radius, map_radius)
            y = rng.randint(-map_radius, map_radius)
            c = CubeCoord(x, y, -x - y)
            if abs(c.z) <= map_radius and distance(ORIGIN, c) <= map_radius and c not in occupied:
                return c
        for x in range(-map_radius, map_radius + 1):
            for y in range(-map_radius, map_radius + 1):
                c = CubeCoord(x, y, -x - y)
                if abs(c.z) <= map_radius and c not in occupied:
                    return c
        raise ScenarioError(["map is full"])

    roster: list[EntityProfile] = []
    for side in SIDES:
        for entity_type in TYPE_ATTRIBUTES:
            n = counts.get((side, entity_type), 0)
            for i in range(n):
                pos = sample_cell()
                occupied.add(pos)
                name = f"{side}_{_SHORT[entity_type]}_{i}"
                roster.append(EntityProfile.for_type(name, side, entity_type, pos))
    return Scenario(map_radius=map_radius, seed=seed, max_time=max_time, roster=roster)


def symmetric_counts(per_side: Mapping[str, int]) -> dict[tuple[str, str], int]:
    """Same per-type count for each side (CLI convenience)."""
    return {(side, t): n for side in SIDES for t, n in per_side.items()}


# -- file format -------------------------------------------------------------

_HEADER = "warpgrid-scenario v1"


def save(scenario: Scenario, path: str | Path) -> None:
    lines = [_HEADER,
             f"map_radius {scenario.map_radius}",
             f"seed {scenario.seed}",
             f"max_time {scenario.max_time}"]
    for p in scenario.roster:
        entry = f"entity {p.name} {p.side} {p.entity_type} {p.position.x} {p.position.y} {p.position.z}"
        base = TYPE_ATTRIBUTES[p.entity_type]
        if (p.detection_range, p.attack_range, p.speed) != base:
            entry += f" detect={p.detection_range} attack={p.attack_range} speed={p.speed}"
        lines.append(entry)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; reports every violation."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    errors: list[str] = []
    if not lines or lines[0].strip() != _HEADER:
        raise ScenarioError([f"line 1: expected header {_HEADER!r}"])
    header: dict[str, int] = {}
    roster: list[EntityProfile] = []
    names: set[str] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        if kind in ("map_radius", "seed", "max_time"):
            try:
                header[kind] = int(parts[1])
            except (IndexError, ValueError):
                errors.append(f"line {lineno}: bad {kind}")
        elif kind == "entity":
            profile = _parse_entity(parts, lineno, errors)
            if profile is not None:
                if profile.name in names:
                    errors.append(f"line {lineno}: duplicate name {profile.name!r}")
                else:
                    names.add(profile.name)
                    roster.append(profile)
        else:
            errors.append(f"line {lineno}: unknown record {kind!r}")
    for field_name in ("map_radius", "seed", "max_time"):
        if field_name not in header:
            errors.append(f"missing header field {field_name}")
    if not errors:
        radius = header["map_radius"]
        for p in roster:
            if not p.position.is_valid():
                errors.append(f"entity {p.name}: coordinates do not sum to zero")
            elif distance(ORIGIN, p.position) > radius:
                errors.append(f"entity {p.name}: position outside map radius {radius}")
    if errors:
        raise ScenarioError(errors)
    return Scenario(map_radius=header["map_radius"], seed=header["seed"],
                    max_time=header["max_time"], roster=roster)


def _parse_entity(parts: list[str], lineno: int, errors: list[str]) -> EntityProfile | None:
    if len(parts) < 7:
        errors.append(f"line {lineno}: entity record needs name side type x y z")
        return None
    name, side, entity_type = parts[1], parts[2], parts[3]
    ok = True
    if "." in name:
        errors.append(f"line {lineno}: name {name!r} may not contain '.' (reserved for runtime entities)")
        ok = False
    if side not in SIDES:
        errors.append(f"line {lineno}: unknown side {side!r}")
        ok = False
    if entity_type not in TYPE_ATTRIBUTES:
        errors.append(f"line {lineno}: unknown type {entity_type!r}")
        ok = False
    try:
        pos = CubeCoord(int(parts[4]), int(parts[5]), int(parts[6]))
    except ValueError:
        errors.append(f"line {lineno}: non-integer coordinates")
        return None
    overrides: dict[str, int] = {}
    for extra in parts[7:]:
        if "=" not in extra:
            errors.append(f"line {lineno}: bad attribute {extra!r}")
            ok = False
            continue
        key, _, value = extra.partition("=")
        if key not in ("detect", "attack", "speed"):
            errors.append(f"line {lineno}: unknown attribute {key!r}")
            ok = False
            continue
        try:
            overrides[key] = int(value)
        except ValueError:
            errors.append(f"line {lineno}: bad value for {key!r}")
            ok = False
    if not ok:
        return None
    return EntityProfile.for_type(
        name, side, entity_type, pos,
        detection_range=overrides.get("detect"),
        attack_range=overrides.get("attack"),
        speed=overrides.get("speed"),
    )
