"""Optimistic parallel discrete-event wargame simulation on a hexagonal grid.

The package couples a Time Warp kernel (speculative event processing with
rollback, anti-messages, global virtual time and deferred fossil collection)
with a hex-grid combat solver whose entities act as logical processes, a
graph-partitioning load balancer, a live control channel for pausing and
injecting orders, and a telemetry gateway for an operator panel.
"""

from .vtime import INFINITY, EventEnvelope, EventKey, Polarity

__version__ = "0.1.0"

__all__ = ["EventKey", "EventEnvelope", "Polarity", "INFINITY", "__version__"]
