"""Network checkpoint container (format version 1).

Layout, all integers little-endian::

    offset 0   8 bytes   magic b"ZNLCKPT\\0"
    offset 8   u32       format version (1)
    offset 12  u64       header length H in bytes
    offset 20  H bytes   UTF-8 JSON header
    offset 20+H          parameter data, float64 little-endian, row-major,
                         tensors concatenated in header order

The JSON header holds ``network`` (loss name and nested layer configs) and
``params``: a list of ``{"name", "shape", "offset", "count"}`` where offset
and count are in elements from the start of the data section. Optional
``meta`` carries free-form run information.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn import Network

MAGIC = b"ZNLCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_network(net: Network, path, meta: dict | None = None) -> None:
    entries, chunks, offset = [], [], 0
    for name, value in net.parameters():
        entries.append({"name": name, "shape": list(value.shape), "offset": offset, "count": int(value.size)})
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
        offset += value.size
    header = json.dumps({"network": net.config(), "params": entries, "meta": meta or {}},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_network(path) -> tuple[Network, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[20:20 + hlen].decode("utf-8"))
    data = np.frombuffer(raw, dtype="<f8", offset=20 + hlen)
    net = Network.from_config(header["network"])
    expected = {name: value.shape for name, value in net.parameters()}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise CheckpointError(f"{path}: parameter {entry['name']} shape {shape} does not match network")
        chunk = data[entry["offset"]:entry["offset"] + entry["count"]]
        if chunk.size != entry["count"]:
            raise CheckpointError(f"{path}: truncated parameter data")
        net.set_parameter(entry["name"], chunk.astype(np.float64).reshape(shape))
    return net, header.get("meta", {})
