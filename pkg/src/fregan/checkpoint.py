"""Binary checkpoint container: magic "FREGANv1", entry table, raw f32 arrays.

Layout (all integers little-endian):

    bytes 0..7   magic b"FREGANv1"
    u32          number of entries
    per entry:   u16 name length, name (utf-8), u8 dtype code (0 = float32),
                 u8 ndim, ndim x u32 dims, u64 absolute byte offset
    data:        raw little-endian float32 arrays at the stated offsets

Scalars are stored as one-element vectors (arrays are written with at
least one dimension). Writes go to a temp file in
the target directory and are renamed into place, so readers never observe
a partial file.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"FREGANv1"
DTYPE_F32 = 0


class CheckpointError(RuntimeError):
    """Malformed, truncated or mismatched checkpoint file."""


def write_entries(entries: dict[str, np.ndarray], path: str) -> None:
    """Atomically write named float32 arrays to ``path``."""
    arrays = {}
    for name, arr in entries.items():
        a = np.asarray(arr)
        if not np.issubdtype(a.dtype, np.floating) and not np.issubdtype(a.dtype, np.integer):
            raise CheckpointError(f"entry {name!r} has non-numeric dtype {a.dtype}")
        a32 = np.ascontiguousarray(a, dtype="<f4")
        if a.dtype != np.float32 and not np.array_equal(a32.astype(a.dtype), a):
            raise CheckpointError(
                f"entry {name!r} does not fit float32 exactly (value range "
                "or precision loss); integers must stay below 2**24"
            )
        arrays[name] = a32

    header = bytearray()
    header += MAGIC
    header += struct.pack("<I", len(arrays))
    fixed = []
    for name, a in arrays.items():
        nb = name.encode("utf-8")
        fixed.append((nb, a))
        header += struct.pack("<H", len(nb))
        header += nb
        header += struct.pack("<BB", DTYPE_F32, a.ndim)
        header += struct.pack(f"<{a.ndim}I", *a.shape)
        header += struct.pack("<Q", 0)  # offset patched below

    # patch offsets now the header length is known
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", len(arrays))
    offset = len(header)
    for nb, a in fixed:
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<BB", DTYPE_F32, a.ndim)
        out += struct.pack(f"<{a.ndim}I", *a.shape)
        out += struct.pack("<Q", offset)
        offset += a.nbytes
    for _, a in fixed:
        out += a.tobytes()

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(out)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_entries(path: str) -> dict[str, np.ndarray]:
    """Read a checkpoint back into name -> float32 array."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    def take(n: int, pos: int) -> tuple[bytes, int]:
        if pos + n > len(blob):
            raise CheckpointError(f"truncated checkpoint {path} (needed {pos + n} bytes)")
        return blob[pos : pos + n], pos + n

    raw, pos = take(len(MAGIC), 0)
    if raw != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic {raw!r})")
    raw, pos = take(4, pos)
    (count,) = struct.unpack("<I", raw)
    table = []
    for _ in range(count):
        raw, pos = take(2, pos)
        (name_len,) = struct.unpack("<H", raw)
        raw, pos = take(name_len, pos)
        name = raw.decode("utf-8")
        raw, pos = take(2, pos)
        dtype_code, ndim = struct.unpack("<BB", raw)
        if dtype_code != DTYPE_F32:
            raise CheckpointError(f"entry {name!r} has unsupported dtype code {dtype_code}")
        raw, pos = take(4 * ndim, pos)
        shape = struct.unpack(f"<{ndim}I", raw)
        raw, pos = take(8, pos)
        (offset,) = struct.unpack("<Q", raw)
        table.append((name, shape, offset))

    out = {}
    for name, shape, offset in table:
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
        raw, _ = take(nbytes, offset)
        out[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return out
