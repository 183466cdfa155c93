"""Binary checkpoint format "FRF1".

Layout: magic `FRF1`, u16 version = 1, u32 tensor count; per tensor:
u32 name length, UTF-8 name, u8 rank, rank x u32 dims, little-endian f32
payload; finally a u64 config fingerprint.  Everything little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FRF1"
VERSION = 1


def save_checkpoint(tensors: dict, path, fingerprint: int = 0):
    """tensors: mapping name -> numpy array (stored as f32)."""
    names = list(tensors)
    if len(set(names)) != len(names):
        raise ValueError("duplicate tensor names")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(names)))
        for name in names:
            # np.ascontiguousarray would promote rank-0 arrays to rank 1
            arr = np.asarray(tensors[name], dtype="<f4")
            if not arr.flags.c_contiguous:
                arr = arr.copy(order="C")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.tobytes())
        f.write(struct.pack("<Q", fingerprint & 0xFFFFFFFFFFFFFFFF))


def load_checkpoint(path):
    """Returns (tensors: dict[str, np.float32 array], fingerprint: int)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"bad magic: expected {MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < 10:
        raise ValueError("truncated checkpoint: missing header")
    version, count = struct.unpack("<HI", raw[4:10])
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 10
    tensors = {}

    def take(n, what):
        nonlocal pos
        if pos + n > len(raw):
            raise ValueError(f"truncated checkpoint: while reading {what}")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        if name in tensors:
            raise ValueError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims")) if rank else ()
        numel = int(np.prod(dims)) if rank else 1
        payload = take(4 * numel, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    (fingerprint,) = struct.unpack("<Q", take(8, "fingerprint"))
    if pos != len(raw):
        raise ValueError(f"trailing bytes after fingerprint: {len(raw) - pos}")
    return tensors, fingerprint
