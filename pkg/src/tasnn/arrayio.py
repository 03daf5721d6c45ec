"""Versioned binary container for named arrays.

Layout::

    b"TASNNARR"                      magic
    uint32 LE                        format version
    uint64 LE                        header length H
    H bytes                          UTF-8 JSON header (sorted keys)
    payload                          raw little-endian array bytes

The header holds ``meta`` (any JSON value) and ``arrays``, a list of
``{name, dtype, shape, offset, nbytes}`` records in insertion order.
Writing the same arrays and metadata always yields the same bytes.
"""
import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"TASNNARR"
VERSION = 1


class ContainerError(ValueError):
    pass


def dumps(arrays, meta=None):
    records = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        # np.ascontiguousarray would promote 0-d arrays to 1-d
        arr = np.array(arr, order="C", copy=True)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes()
        records.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"arrays": records, "meta": meta}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<IQ", VERSION, len(header)), header] + chunks)


def loads(blob):
    if blob[:8] != MAGIC:
        raise ContainerError("not a tasnn array container")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    base = 20 + hlen
    arrays = {}
    for rec in header["arrays"]:
        start = base + rec["offset"]
        raw = blob[start:start + rec["nbytes"]]
        if len(raw) != rec["nbytes"]:
            raise ContainerError(f"truncated payload for {rec['name']!r}")
        arr = np.frombuffer(raw, dtype=np.dtype(rec["dtype"])).reshape(rec["shape"])
        arrays[rec["name"]] = arr.copy()
    return arrays, header["meta"]


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` via a temp file + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, arrays, meta=None):
    atomic_write_bytes(path, dumps(arrays, meta))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
