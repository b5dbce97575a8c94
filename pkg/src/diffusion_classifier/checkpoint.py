"""Binary checkpoint format for trained networks.

Layout:

    bytes 0..3   magic  b"DCK1"
    bytes 4..7   u32 little-endian header length L
    bytes 8..8+L UTF-8 JSON header
    then         raw little-endian tensor payloads, in header order

The header carries {"version": 1, "config": <run config snapshot>,
"net": <architecture metadata>, "tensors": [{"name", "shape", "dtype"}]}
with dtype "f32" or "f64".  Parameters are stored in their native float32,
so a save/load round trip reproduces the network bit-exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .denoisers.mlp import MlpDenoiser
from .errors import CheckpointError

MAGIC = b"DCK1"
VERSION = 1

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def save_checkpoint(net: MlpDenoiser, config: dict, path):
    """Write the network and a config snapshot to ``path``."""
    state = net.state()
    tensors = []
    for name, arr in state.items():
        dt = _DTYPE_NAMES.get(arr.dtype)
        if dt is None:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype "
                                  f"{arr.dtype}")
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": dt})
    header = {"version": VERSION, "config": dict(config or {}),
              "net": net.meta(), "tensors": tensors}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, _ in ((t["name"], t) for t in tensors):
            arr = state[name]
            f.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"),
                                                     copy=False).tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (net, config dict).

    Raises CheckpointError on a bad magic, an unsupported version, or a
    truncated payload (reporting the failing byte offset).
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint file not found: {path}") from None
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 8:
        raise CheckpointError("truncated header length field at byte offset 4")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise CheckpointError(f"truncated header at byte offset {len(data)} "
                              f"(expected {8 + hlen} bytes)")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"malformed header JSON: {exc}") from exc
    version = header.get("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}, "
                              f"this reader handles {VERSION}")
    offset = 8 + hlen
    state = {}
    for spec in header.get("tensors", []):
        dtype = _DTYPES.get(spec.get("dtype"))
        if dtype is None:
            raise CheckpointError(f"tensor {spec.get('name')!r} has "
                                  f"unsupported dtype {spec.get('dtype')!r}")
        shape = tuple(int(s) for s in spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(
                f"truncated payload for tensor {spec['name']!r} at byte "
                f"offset {offset}: need {nbytes} bytes, "
                f"{len(data) - offset} remain")
        state[spec["name"]] = np.frombuffer(
            data, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
            offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after "
                              f"payloads at byte offset {offset}")
    net = MlpDenoiser.from_meta(header["net"])
    net.load_state(state)
    return net, header.get("config", {})
