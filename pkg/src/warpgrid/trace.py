"""Committed-event trace records and their line-delimited text encoding.

One record is appended per committed event processing that changed the
world (no-op processings of dead entities produce nothing).  Field order
inside a line is fixed, so two runs that commit the same history produce
byte-identical trace files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .hexgrid import CubeCoord


@dataclass(frozen=True, slots=True)
class TraceRecord:
    ts: int
    kind: str
    actor: str
    side: str
    pos: CubeCoord
    target: Optional[str] = None
    destroyed: Optional[str] = None

    def encode(self) -> str:
        fields: dict = {
            "ts": self.ts,
            "kind": self.kind,
            "actor": self.actor,
            "side": self.side,
            "pos": [self.pos.x, self.pos.y, self.pos.z],
        }
        if self.target is not None:
            fields["target"] = self.target
        if self.destroyed is not None:
            fields["destroyed"] = self.destroyed
        return json.dumps(fields, separators=(",", ":"))


class TraceParseError(Exception):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def decode_line(line: str, lineno: int = 0) -> TraceRecord:
    try:
        fields = json.loads(line)
        pos = fields["pos"]
        return TraceRecord(
            ts=int(fields["ts"]),
            kind=str(fields["kind"]),
            actor=str(fields["actor"]),
            side=str(fields["side"]),
            pos=CubeCoord(int(pos[0]), int(pos[1]), int(pos[2])),
            target=fields.get("target"),
            destroyed=fields.get("destroyed"),
        )
    except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
        raise TraceParseError(lineno, str(exc)) from exc


def write_trace(records: Iterable[TraceRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.encode())
            fh.write("\n")


def read_trace(path: str | Path) -> list[TraceRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                out.append(decode_line(line, lineno))
    return out
