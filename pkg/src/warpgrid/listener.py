"""Live control of a running simulation: hold, pause, inject, status.

Commands are accepted at rank 0 and fanned out.  While a control channel
is open the termination hold flag stays set, so a quiescent simulation
waits for more input instead of ending.  Injected events pass per-event
validation; events at or above the oldest retained virtual time are
scheduled through the normal straggler path (rolling back whatever already
ran past them), anything older is rejected.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional, TextIO

from .runner import Session
from .solver import ATTACK, MISSILE_MOVE, RECON, WarEvent
from .vtime import INFINITY

log = logging.getLogger("warpgrid.listener")

COMMAND_KINDS = ("pause", "resume", "inject", "status", "shutdown")
EVENT_KINDS = (RECON, MISSILE_MOVE, ATTACK)


@dataclass(slots=True)
class ControlCommand:
    kind: str
    inject_payload: Optional[list[dict]] = None


class CommandError(Exception):
    pass


def parse_command(line: str) -> ControlCommand:
    """Parse one protocol line: {"cmd": "...", ...}."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CommandError(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "cmd" not in obj:
        raise CommandError("expected an object with a 'cmd' field")
    kind = obj["cmd"]
    if kind not in COMMAND_KINDS:
        raise CommandError(f"unknown command {kind!r}")
    if kind == "inject":
        events = obj.get("events")
        if not isinstance(events, list):
            raise CommandError("inject requires an 'events' list")
        return ControlCommand("inject", events)
    return ControlCommand(kind)


class Listener:
    """Rank-0 command executor bound to a running session."""

    def __init__(self, session: Session):
        self.session = session
        self.open = False

    def open_channel(self) -> None:
        """Set the hold flag everywhere; termination is deferred while open.

        Commands are only accepted at rank 0 and fanned out from there.
        """
        if self.session.nodes[0].node_id != 0:
            raise CommandError("control channels open on rank 0 only")
        self.open = True
        self._broadcast_hold(True)

    def close_channel(self) -> None:
        self.open = False
        self._broadcast_hold(False)

    def _broadcast_hold(self, value: bool) -> None:
        self.session.nodes[0].hold_flag = value
        if self.session.transport is not None:
            self.session.transport.broadcast_listener_notice(0, ("hold", value))
        else:
            for node in self.session.nodes:
                node.hold_flag = value

    # -- commands ----------------------------------------------------------

    def inject(self, events: list[dict]) -> tuple[int, list[str]]:
        """Validate and schedule operator events; returns (accepted, errors).

        Malformed entries are rejected individually; the rest are accepted.
        """
        accepted = 0
        errors: list[str] = []
        horizon = self.session.injection_horizon
        max_ticks = self.session.nodes[0].config.max_ticks
        roster = self.session.nodes[0].manager.profiles
        to_schedule: list[WarEvent] = []
        for i, raw in enumerate(events):
            problem = self._validate(raw, horizon, max_ticks, roster)
            if problem is not None:
                errors.append(f"event {i}: {problem}")
                continue
            target = raw.get("target")
            to_schedule.append(WarEvent(
                raw.get("kind", RECON), "__operator__", raw["receiver"],
                int(raw["time"]), target_name=target))
        if to_schedule:
            self._broadcast_hold(self.open)  # re-assert hold before new input
            for ev in to_schedule:
                self.session.schedule_operator_event(ev)
                accepted += 1
        return accepted, errors

    @staticmethod
    def _validate(raw: object, horizon: float, max_ticks: int, roster: dict) -> Optional[str]:
        if not isinstance(raw, dict):
            return "not an object"
        receiver = raw.get("receiver")
        if not isinstance(receiver, str) or receiver not in roster:
            return f"unknown receiver {receiver!r}"
        time = raw.get("time")
        if not isinstance(time, int):
            return "time must be an integer tick"
        if time < max(1, horizon if horizon != INFINITY else 1):
            return f"time {time} is below the retained horizon {horizon}"
        if time > max_ticks:
            return f"time {time} exceeds the virtual-time budget {max_ticks}"
        kind = raw.get("kind", RECON)
        if kind not in EVENT_KINDS:
            return f"unknown event kind {kind!r}"
        return None

    def pause(self) -> dict:
        self.session.pause_all()  # idempotent
        return {"ok": True, "paused": True}

    def resume(self) -> dict:
        self.session.resume_all()
        return {"ok": True, "paused": False}

    def status(self) -> dict:
        committed = sum(self.session.nodes[0].commit_matrix.values())
        for node in self.session.nodes[1:]:
            committed += sum(node.commit_matrix.values())
        per_worker = {}
        for node in self.session.nodes:
            for w, n in enumerate(node.stats.processed):
                per_worker[f"{node.node_id}.{w}"] = n
        gvt = self.session.gvt_value
        return {
            "gvt": None if gvt == INFINITY else gvt,
            "committed": committed,
            "per_worker": per_worker,
            "alive": self.session.alive_counts(),
            "paused": self.session._paused,
            "horizon": self.session.injection_horizon,
        }

    def apply(self, cmd: ControlCommand) -> dict:
        if cmd.kind == "pause":
            return self.pause()
        if cmd.kind == "resume":
            return self.resume()
        if cmd.kind == "status":
            return {"ok": True, "status": self.status()}
        if cmd.kind == "inject":
            accepted, errors = self.inject(cmd.inject_payload or [])
            return {"ok": not errors, "accepted": accepted, "rejected": errors}
        if cmd.kind == "shutdown":
            self.close_channel()
            return {"ok": True, "shutdown": True}
        raise CommandError(f"unhandled command {cmd.kind!r}")


def run_console(listener: Listener, lines: TextIO, out: TextIO) -> None:
    """Line-oriented local control console (used when no socket is bound)."""
    listener.open_channel()
    try:
        for line in lines:
            line = line.strip()
            if not line:
                continue
            try:
                reply = listener.apply(parse_command(line))
            except CommandError as exc:
                reply = {"ok": False, "error": str(exc)}
            out.write(json.dumps(reply) + "\n")
            out.flush()
            if reply.get("shutdown"):
                return
    finally:
        if listener.open:
            listener.close_channel()
