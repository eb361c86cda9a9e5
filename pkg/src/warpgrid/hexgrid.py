"""Cube-coordinate hex geometry and the open-addressed grid hash table.

Coordinates satisfy x + y + z = 0.  The six directions each keep exactly
one axis unchanged (NE/SW hold y, E/W hold z, SE/NW hold x).  Rings are
enumerated in a fixed order so every consumer (searches, tie-breaking,
tests) agrees on candidate ordering.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterator, NamedTuple, Optional


class CubeCoord(NamedTuple):
    x: int
    y: int
    z: int

    def is_valid(self) -> bool:
        return self.x + self.y + self.z == 0

    def add(self, other: "CubeCoord") -> "CubeCoord":
        return CubeCoord(self.x + other.x, self.y + other.y, self.z + other.z)

    def scale(self, k: int) -> "CubeCoord":
        return CubeCoord(self.x * k, self.y * k, self.z * k)


ORIGIN = CubeCoord(0, 0, 0)


class HexDirection(Enum):
    NORTH_EAST = CubeCoord(+1, 0, -1)
    EAST = CubeCoord(+1, -1, 0)
    SOUTH_EAST = CubeCoord(0, -1, +1)
    SOUTH_WEST = CubeCoord(-1, 0, +1)
    WEST = CubeCoord(-1, +1, 0)
    NORTH_WEST = CubeCoord(0, +1, -1)

    @property
    def delta(self) -> CubeCoord:
        return self.value


# Fixed clockwise cycle; also the tie-break order wherever directions are
# enumerated.
DIRECTION_ORDER = (
    HexDirection.NORTH_EAST,
    HexDirection.EAST,
    HexDirection.SOUTH_EAST,
    HexDirection.SOUTH_WEST,
    HexDirection.WEST,
    HexDirection.NORTH_WEST,
)

# Walking the ring from the SW corner requires entering the direction cycle
# at NW (the only forward-cyclic phase that stays on the ring).
_RING_WALK = (
    HexDirection.NORTH_WEST,
    HexDirection.NORTH_EAST,
    HexDirection.EAST,
    HexDirection.SOUTH_EAST,
    HexDirection.SOUTH_WEST,
    HexDirection.WEST,
)


def neighbor(c: CubeCoord, d: HexDirection) -> CubeCoord:
    dx, dy, dz = d.value
    return CubeCoord(c.x + dx, c.y + dy, c.z + dz)


def distance(a: CubeCoord, b: CubeCoord) -> int:
    """Grid distance: half the L1 norm of the coordinate difference."""
    return (abs(a.x - b.x) + abs(a.y - b.y) + abs(a.z - b.z)) // 2


_ring_offset_cache: dict[int, tuple[tuple[int, int, int], ...]] = {}


def _ring_offsets(radius: int) -> tuple[tuple[int, int, int], ...]:
    cached = _ring_offset_cache.get(radius)
    if cached is not None:
        return cached
    out = []
    x, y, z = (HexDirection.SOUTH_WEST.value.x * radius,
               HexDirection.SOUTH_WEST.value.y * radius,
               HexDirection.SOUTH_WEST.value.z * radius)
    for d in _RING_WALK:
        dx, dy, dz = d.value
        for _ in range(radius):
            out.append((x, y, z))
            x += dx
            y += dy
            z += dz
    cached = tuple(out)
    _ring_offset_cache[radius] = cached
    return cached


def ring(center: CubeCoord, radius: int) -> list[CubeCoord]:
    """All cells at exactly `radius` grids from center, in walk order.

    radius 0 yields [center]; radius r >= 1 yields exactly 6r cells,
    starting at center + r * delta(SOUTH_WEST) and walking the six sides
    clockwise.  The order is fixed so searches are deterministic.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return [center]
    cx, cy, cz = center
    return [CubeCoord(cx + dx, cy + dy, cz + dz) for dx, dy, dz in _ring_offsets(radius)]


def disk(center: CubeCoord, radius: int) -> Iterator[CubeCoord]:
    """All cells within `radius` grids of center (rings 0..radius)."""
    for r in range(radius + 1):
        yield from ring(center, r)


def disk_cell_count(radius: int) -> int:
    return 1 + 3 * radius * (radius + 1)


# Classic 3D spatial-hash primes; large and pairwise distinct.  They are
# configuration, not correctness: any large distinct primes disperse.
P1 = 73856093
P2 = 19349663
P3 = 83492791


def hash_value(c: CubeCoord, table_size: int, primes: tuple[int, int, int] = (P1, P2, P3)) -> int:
    """Home-slot hash of a coordinate, always in [0, table_size).

    The double modulus keeps the result non-negative even for negative
    coordinate mixes (Python's % already guarantees this for a positive
    modulus; the expression spells it out).
    """
    if table_size < 1:
        raise ValueError("table_size must be >= 1")
    p1, p2, p3 = primes
    return ((c.x * p1 + c.y * p2 + c.z * p3) % table_size + table_size) % table_size


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def next_prime(n: int) -> int:
    while not _is_prime(n):
        n += 1
    return n


def table_size_for(expected_entries: int) -> int:
    """Smallest prime >= twice the expected entry count plus one."""
    return next_prime(2 * max(expected_entries, 1) + 1)


class GridHashTableFull(Exception):
    """Raised on insert when no free slot remains."""


class GridHashTable:
    """Open-addressed coordinate-to-index map with linear probing.

    Slots are 0-based; a probe that cycles through every slot without
    finding the coordinate or a free slot reports table-full via the
    None sentinel from find_slot (insert raises GridHashTableFull).
    """

    __slots__ = ("table_size", "primes", "_coords", "_indices", "_count")

    def __init__(self, table_size: int, primes: tuple[int, int, int] = (P1, P2, P3)):
        if table_size < 1:
            raise ValueError("table_size must be >= 1")
        self.table_size = table_size
        self.primes = primes
        self._coords: list[Optional[CubeCoord]] = [None] * table_size
        self._indices: list[int] = [0] * table_size
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def hash_value(self, c: CubeCoord) -> int:
        return hash_value(c, self.table_size, self.primes)

    def find_slot(self, h: int, c: CubeCoord) -> Optional[int]:
        """First free slot or the slot already holding c, probing from h.

        Returns None (the table-full sentinel) after a full cycle.
        """
        coords = self._coords
        size = self.table_size
        index = h % size
        start = index
        while True:
            occupant = coords[index]
            if occupant is None or occupant == c:
                return index
            index = (index + 1) % size
            if index == start:
                return None

    def insert(self, c: CubeCoord, value: int) -> int:
        """Idempotent insert; re-inserting with a different value is a conflict."""
        slot = self.find_slot(self.hash_value(c), c)
        if slot is None:
            raise GridHashTableFull(f"no free slot for {c}")
        if self._coords[slot] is None:
            self._coords[slot] = c
            self._indices[slot] = value
            self._count += 1
        elif self._indices[slot] != value:
            raise ValueError(f"{c} already mapped to {self._indices[slot]}, refusing {value}")
        return slot

    def lookup(self, c: CubeCoord) -> Optional[int]:
        slot = self.find_slot(self.hash_value(c), c)
        if slot is None or self._coords[slot] is None:
            return None
        return self._indices[slot]
