"""Portable named-tensor container (.fanc).

Byte layout, all integers little-endian u32, all payloads little-endian
float32 in row-major order:

    magic   4 bytes  "FANC"
    version u32      1
    count   u32      number of entries
    entry*  name_len u32, name (UTF-8), rank u32, dims u32 x rank, payload

Names are unique within a file and the file length is consumed exactly.
Loading validates every length field against the remaining byte budget
before allocating, so arbitrary byte streams produce a structured
:class:`ContainerError` rather than a crash.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FANC"
VERSION = 1

_MAX_RANK = 32
_MAX_NAME = 4096


class ContainerError(ValueError):
    """Malformed container file; `offset` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def save_container(entries, path) -> None:
    """Write entries ({name: float32 array} or [(name, array), ...]) to `path`.

    Entry order in the file is the iteration order given by the caller.
    """
    if isinstance(entries, dict):
        items = list(entries.items())
    else:
        items = list(entries)
    seen = set()
    blobs = [MAGIC, struct.pack("<II", VERSION, len(items))]
    for name, arr in items:
        if name in seen:
            raise ValueError(f"duplicate entry name {name!r}")
        seen.add(name)
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise ValueError(f"entry {name!r} must be float32, got {arr.dtype}")
        nbytes = name.encode("utf-8")
        if len(nbytes) > _MAX_NAME:
            raise ValueError(f"entry name too long ({len(nbytes)} bytes)")
        blobs.append(struct.pack("<I", len(nbytes)))
        blobs.append(nbytes)
        blobs.append(struct.pack("<I", arr.ndim))
        blobs.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blobs))


def load_container(path) -> dict:
    """Read a container back into an insertion-ordered {name: float32 array} dict."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_container(data)


def parse_container(data: bytes) -> dict:
    pos = 0

    def need(n: int, what: str) -> int:
        nonlocal pos
        if pos + n > len(data):
            raise ContainerError(f"truncated file: expected {n} bytes for {what}", pos)
        start = pos
        pos += n
        return start

    start = need(4, "magic")
    if data[start:start + 4] != MAGIC:
        raise ContainerError(f"bad magic {data[start:start + 4]!r}, expected {MAGIC!r}", start)
    start = need(4, "version")
    (version,) = struct.unpack_from("<I", data, start)
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}, expected {VERSION}", start)
    start = need(4, "entry count")
    (count,) = struct.unpack_from("<I", data, start)

    entries: dict = {}
    for i in range(count):
        start = need(4, f"name length of entry {i}")
        (name_len,) = struct.unpack_from("<I", data, start)
        if name_len > _MAX_NAME:
            raise ContainerError(f"entry {i} name length {name_len} exceeds {_MAX_NAME}", start)
        start = need(name_len, f"name of entry {i}")
        try:
            name = data[start:start + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise ContainerError(f"entry {i} name is not valid UTF-8", start) from None
        if name in entries:
            raise ContainerError(f"duplicate entry name {name!r}", start)
        start = need(4, f"rank of {name!r}")
        (rank,) = struct.unpack_from("<I", data, start)
        if rank > _MAX_RANK:
            raise ContainerError(f"entry {name!r} rank {rank} exceeds {_MAX_RANK}", start)
        start = need(4 * rank, f"dims of {name!r}")
        dims = struct.unpack_from(f"<{rank}I", data, start)
        size = 1
        for d in dims:
            size *= d
        start = need(4 * size, f"payload of {name!r}")
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=start)
        entries[name] = arr.reshape(dims).astype(np.float32)
    if pos != len(data):
        raise ContainerError(
            f"file length not exactly consumed: {len(data) - pos} trailing bytes", pos
        )
    return entries
