"""Self-describing binary encoding for wire message bodies.

Small tagged format covering the value shapes the simulation exchanges:
None, bools, 64-bit ints, floats, strings, bytes, lists, tuples, and
dicts.  Every body starts with a one-byte schema version so readers can
reject frames from incompatible builds.
"""

from __future__ import annotations

import struct
from typing import Any

SCHEMA_VERSION = 1

_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")
_U32 = struct.Struct("<I")


class CodecError(Exception):
    pass


def _encode_into(obj: Any, out: bytearray) -> None:
    if obj is None:
        out.append(0x4E)  # 'N'
    elif obj is True:
        out.append(0x54)  # 'T'
    elif obj is False:
        out.append(0x46)  # 'F'
    elif isinstance(obj, int):
        out.append(0x49)  # 'I'
        out += _I64.pack(obj)
    elif isinstance(obj, float):
        out.append(0x44)  # 'D'
        out += _F64.pack(obj)
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out.append(0x53)  # 'S'
        out += _U32.pack(len(raw))
        out += raw
    elif isinstance(obj, bytes):
        out.append(0x42)  # 'B'
        out += _U32.pack(len(obj))
        out += obj
    elif isinstance(obj, tuple):
        out.append(0x55)  # 'U'
        out += _U32.pack(len(obj))
        for item in obj:
            _encode_into(item, out)
    elif isinstance(obj, list):
        out.append(0x4C)  # 'L'
        out += _U32.pack(len(obj))
        for item in obj:
            _encode_into(item, out)
    elif isinstance(obj, dict):
        out.append(0x4D)  # 'M'
        out += _U32.pack(len(obj))
        for k, v in obj.items():
            _encode_into(k, out)
            _encode_into(v, out)
    else:
        raise CodecError(f"unencodable type {type(obj).__name__}")


def encode_body(obj: Any) -> bytes:
    out = bytearray([SCHEMA_VERSION])
    _encode_into(obj, out)
    return bytes(out)


def _decode_at(buf: bytes, pos: int) -> tuple[Any, int]:
    tag = buf[pos]
    pos += 1
    if tag == 0x4E:
        return None, pos
    if tag == 0x54:
        return True, pos
    if tag == 0x46:
        return False, pos
    if tag == 0x49:
        return _I64.unpack_from(buf, pos)[0], pos + 8
    if tag == 0x44:
        return _F64.unpack_from(buf, pos)[0], pos + 8
    if tag == 0x53:
        n = _U32.unpack_from(buf, pos)[0]
        pos += 4
        return buf[pos:pos + n].decode("utf-8"), pos + n
    if tag == 0x42:
        n = _U32.unpack_from(buf, pos)[0]
        pos += 4
        return buf[pos:pos + n], pos + n
    if tag in (0x55, 0x4C):
        n = _U32.unpack_from(buf, pos)[0]
        pos += 4
        items = []
        for _ in range(n):
            item, pos = _decode_at(buf, pos)
            items.append(item)
        return (tuple(items) if tag == 0x55 else items), pos
    if tag == 0x4D:
        n = _U32.unpack_from(buf, pos)[0]
        pos += 4
        out = {}
        for _ in range(n):
            k, pos = _decode_at(buf, pos)
            v, pos = _decode_at(buf, pos)
            out[k] = v
        return out, pos
    raise CodecError(f"unknown tag 0x{tag:02x} at offset {pos - 1}")


def decode_body(buf: bytes) -> Any:
    if not buf:
        raise CodecError("empty body")
    if buf[0] != SCHEMA_VERSION:
        raise CodecError(f"schema version {buf[0]} unsupported (expected {SCHEMA_VERSION})")
    obj, pos = _decode_at(buf, 1)
    if pos != len(buf):
        raise CodecError(f"{len(buf) - pos} trailing bytes")
    return obj
