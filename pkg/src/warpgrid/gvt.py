"""Global virtual time rounds and deferred garbage collection policy.

GVT is a lower bound on every future event timestamp: the minimum over all
pending, in-progress, and in-flight event times.  State strictly below GVT
is committed.  Collection is deferred by K rounds: at round n the reclaim
threshold is the GVT value from K rounds ago, so anything younger than K
rounds of GVT progress survives and a live operator can still inject
events (which may roll the simulation back) into that window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .vtime import INFINITY


@dataclass(slots=True)
class GvtRound:
    round_index: int
    value: float
    per_node_minima: dict[int, float] = field(default_factory=dict)
    in_flight_minimum: float = INFINITY


@dataclass(slots=True)
class GcPolicy:
    deferral_rounds: int = 4

    def __post_init__(self) -> None:
        if self.deferral_rounds < 1:
            raise ValueError("deferral_rounds must be >= 1")


def next_round(history: list[GvtRound], minima: dict[int, float],
               in_flight_minimum: float = INFINITY) -> GvtRound:
    """Fold per-node minima and the in-flight bound into the next round.

    The value is non-decreasing across rounds as long as no event is
    injected from outside: every new event descends from one at or above
    the previous bound.  A live injection below the current bound
    legitimately lowers it, which is why collection is deferred.
    """
    value = min(list(minima.values()) + [in_flight_minimum]) if minima else in_flight_minimum
    return GvtRound(round_index=len(history) + 1, value=value,
                    per_node_minima=dict(minima), in_flight_minimum=in_flight_minimum)


def reclaim_threshold(history: list[GvtRound], policy: GcPolicy) -> float:
    """Reclaim bound after the latest round: the GVT value K rounds ago.

    With rounds valued [10, 20, 30, 40, 50] and K=4, the fifth round
    reclaims strictly below 10.  Fewer than K+1 rounds reclaim nothing.
    Infinite round values (quiescence under an open control channel) do
    not advance the bound, so the injection window stays intact while an
    operator is attached.
    """
    n = len(history)
    k = policy.deferral_rounds
    if n < k + 1:
        return 0.0
    value = history[n - k - 1].value
    return 0.0 if value == INFINITY else value
