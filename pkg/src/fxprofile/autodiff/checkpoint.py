"""Binary checkpoint format.

Layout (little-endian)::

    b"STCK"  u32 version
    u32 n_params   then n_params records
    u32 n_opt      then n_opt records (0 when no optimizer state)

    record := u32 name_len, name (utf-8), u32 rank, u32 dims[rank], f32 values

Optimizer records are named ``adamw.m/<param>``, ``adamw.v/<param>`` plus
rank-0 scalars ``adamw.t``, ``adamw.beta1``, ``adamw.beta2``, ``adamw.eps``
and ``adamw.weight_decay``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .optim import AdamWState

MAGIC = b"STCK"
VERSION = 1
_SCALARS = ("t", "beta1", "beta2", "eps", "weight_decay")


def _pack_record(name: str, arr) -> bytes:
    arr = np.asarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    head = struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr).tobytes()


def _unpack_records(buf, pos, count):
    out = {}
    for _ in range(count):
        try:
            (n,) = struct.unpack_from("<I", buf, pos)
            name = bytes(buf[pos + 4:pos + 4 + n]).decode("utf-8")
            pos += 4 + n
            (rank,) = struct.unpack_from("<I", buf, pos)
            dims = struct.unpack_from(f"<{rank}I", buf, pos + 4)
            pos += 4 + 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) if rank else 1
            if pos + 4 * size > len(buf):
                raise DataError(f"checkpoint truncated inside record {name!r}")
            arr = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(dims)
            pos += 4 * size
        except struct.error as exc:
            raise DataError(f"checkpoint truncated: {exc}") from None
        out[name] = arr.copy()
    return out, pos


def save_checkpoint(path, params, opt_state: AdamWState | None = None) -> Path:
    path = Path(path)
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise DataError("duplicate parameter names")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(params))]
    parts += [_pack_record(p.name, p.data) for p in params]
    opt = []
    if opt_state is not None:
        opt += [_pack_record(f"adamw.{k}", getattr(opt_state, k)) for k in _SCALARS]
        for p in params:
            if p.name in opt_state.m:
                opt.append(_pack_record(f"adamw.m/{p.name}", opt_state.m[p.name]))
                opt.append(_pack_record(f"adamw.v/{p.name}", opt_state.v[p.name]))
    parts.append(struct.pack("<I", len(opt)))
    parts += opt
    path.write_bytes(b"".join(parts))
    return path


def load_checkpoint(path):
    """Return ``(params, opt_state)``: a name -> float32 array dict and an
    ``AdamWState`` (or ``None`` when the file carries no optimizer state)."""
    buf = memoryview(Path(path).read_bytes())
    if len(buf) < 12 or bytes(buf[:4]) != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (n,) = struct.unpack_from("<I", buf, 8)
    params, pos = _unpack_records(buf, 12, n)
    opt_state = None
    if pos + 4 <= len(buf):
        (n_opt,) = struct.unpack_from("<I", buf, pos)
        opt, pos = _unpack_records(buf, pos + 4, n_opt)
        if opt:
            opt_state = AdamWState(
                beta1=float(opt["adamw.beta1"]), beta2=float(opt["adamw.beta2"]),
                eps=float(opt["adamw.eps"]), weight_decay=float(opt["adamw.weight_decay"]),
                t=int(opt["adamw.t"]))
            for key, arr in opt.items():
                if key.startswith("adamw.m/"):
                    opt_state.m[key[8:]] = arr
                elif key.startswith("adamw.v/"):
                    opt_state.v[key[8:]] = arr
    if pos != len(buf):
        raise DataError(f"{path}: {len(buf) - pos} trailing bytes")
    return params, opt_state
