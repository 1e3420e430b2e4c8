"""Binary checkpoint codec: magic, JSON header, little-endian float64 payload."""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import CheckpointError
from .network import InputNorm, NetworkSpec, ParameterSet

MAGIC = b"MXNC"
FORMAT_VERSION = 1


def save_params(params: ParameterSet, path, role=None, seed=None) -> None:
    """Write a checkpoint; the payload reproduces params.flat bit for bit."""
    header = {
        "format_version": FORMAT_VERSION,
        "spec": {
            "input_dim": params.spec.input_dim,
            "output_dim": params.spec.output_dim,
            "hidden": list(params.spec.hidden),
            "activation": params.spec.activation,
        },
        "norm": {
            "center": params.norm.center.tolist(),
            "halfspan": params.norm.halfspan.tolist(),
        },
        "param_count": int(params.flat.size),
        "role": role,
        "seed": seed,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(params.flat.astype("<f8", copy=False).tobytes())


def load_params(path):
    """Read a checkpoint; returns (ParameterSet, header dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = struct.unpack("<I", data[4:8])[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header_len = struct.unpack("<Q", data[8:16])[0]
    if len(data) < 16 + header_len:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    try:
        spec = NetworkSpec(
            input_dim=header["spec"]["input_dim"],
            output_dim=header["spec"]["output_dim"],
            hidden=tuple(header["spec"]["hidden"]),
            activation=header["spec"]["activation"],
        )
        norm = InputNorm(
            center=np.array(header["norm"]["center"], dtype=np.float64),
            halfspan=np.array(header["norm"]["halfspan"], dtype=np.float64),
        )
        count = int(header["param_count"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint header missing field: {exc}") from exc
    payload = data[16 + header_len:]
    if len(payload) != 8 * count:
        raise CheckpointError(f"payload holds {len(payload)} bytes, expected {8 * count}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64, copy=True)
    if count != spec.param_count:
        raise CheckpointError("parameter count does not match the architecture")
    return ParameterSet(spec=spec, norm=norm, flat=flat), header
