"""Simulation clock, event ordering keys, and event envelopes.

Virtual time is an integer tick count.  Events are ordered by a composite
key so that any two distinct events compare strictly: ties on time are
broken by receiver name, then sender name, then a per-emission sequence
number.  This total order is what makes a parallel run reproducible -- the
committed history of every run equals the history of processing all events
in key order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Union

# Virtual time in ticks.  math.inf is allowed only as the distinguished
# "beyond any event" value used by GVT at quiescence.
VirtualTime = Union[int, float]

INFINITY: VirtualTime = float("inf")


def stable_hash(*parts: object) -> int:
    """Process-independent 63-bit hash of the given parts.

    Python's builtin hash() is salted per process, so anything that must
    agree across ranks (worker RNG draws, LP-to-queue assignment, output
    sequence numbers) goes through here instead.  63 bits keeps values
    non-negative in a signed 64-bit wire field.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


class EventKey(NamedTuple):
    """Total-order key: (time, receiver, sender, sequence).

    A NamedTuple so heap and bisect comparisons run at tuple speed; key
    comparisons dominate the scheduling hot path.
    """

    time: int
    receiver: str
    sender: str
    seq: int

    def as_tuple(self) -> tuple:
        return tuple(self)


class Polarity(Enum):
    POSITIVE = "positive"
    ANTI = "anti"


@dataclass(frozen=True, slots=True)
class EventEnvelope:
    """A keyed message between logical processes.

    An anti envelope carries the exact key of a previously sent positive
    envelope; its payload is ignored on cancellation.
    """

    key: EventKey
    payload: object
    polarity: Polarity = Polarity.POSITIVE

    def anti(self) -> "EventEnvelope":
        return EventEnvelope(self.key, None, Polarity.ANTI)
