"""Binary persistence of trajectory ensembles.

Layout (all integers and floats little-endian):

    magic   b"PBTRJ1\\n"
    u32     length of the JSON header in bytes
    bytes   JSON header: format_version, count, steps, n_ops, dim, dt,
            master_seed, operators, eta, gamma_meas, gamma_deph_odd, noise
            rates, code name, pure_noise_currents, and any extra metadata
    then per trajectory:
    u64     seed
    f64[n_ops * steps]      currents, operator-major
    f64[dim * dim * 2]      final state, row-major, interleaved re/im

This file is the handoff between the simulation stage and any later
processing stage (recovery, textbook decoding, estimation).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterator

import numpy as np

from .sme import TrajectoryRecord

MAGIC = b"PBTRJ1\n"
FORMAT_VERSION = 1


def write_ensemble(path: str | Path, records: list[TrajectoryRecord],
                   header: dict) -> None:
    if not records:
        raise ValueError("no trajectories to write")
    r0 = records[0]
    n_ops, steps = r0.currents.shape
    dim = r0.final_state.shape[0]
    meta = dict(header)
    meta.update(
        format_version=FORMAT_VERSION,
        count=len(records),
        steps=int(steps),
        n_ops=int(n_ops),
        dim=int(dim),
        dt=float(r0.dt),
        pure_noise_currents=bool(r0.pure_noise_currents),
    )
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for rec in records:
            if rec.currents.shape != (n_ops, steps) or rec.final_state.shape != (dim, dim):
                raise ValueError("inhomogeneous trajectory records")
            fh.write(struct.pack("<Q", rec.seed))
            fh.write(np.ascontiguousarray(rec.currents, dtype="<f8").tobytes())
            state = np.empty((dim, dim, 2))
            state[:, :, 0] = rec.final_state.real
            state[:, :, 1] = rec.final_state.imag
            fh.write(np.ascontiguousarray(state, dtype="<f8").tobytes())


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a trajectory file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(hlen).decode("utf-8"))


def iter_records(path: str | Path) -> Iterator[TrajectoryRecord]:
    header = read_header(path)
    n_ops, steps, dim = header["n_ops"], header["steps"], header["dim"]
    dt = header["dt"]
    pure = header.get("pure_noise_currents", False)
    cur_bytes = 8 * n_ops * steps
    state_bytes = 8 * dim * dim * 2
    with open(path, "rb") as fh:
        fh.seek(len(MAGIC))
        (hlen,) = struct.unpack("<I", fh.read(4))
        fh.seek(len(MAGIC) + 4 + hlen)
        for _ in range(header["count"]):
            (seed,) = struct.unpack("<Q", fh.read(8))
            currents = np.frombuffer(fh.read(cur_bytes), dtype="<f8").reshape(n_ops, steps)
            raw = np.frombuffer(fh.read(state_bytes), dtype="<f8").reshape(dim, dim, 2)
            state = raw[:, :, 0] + 1j * raw[:, :, 1]
            yield TrajectoryRecord(seed=int(seed), dt=dt, steps=steps,
                                   currents=currents.copy(), final_state=state,
                                   pure_noise_currents=pure)


def read_ensemble(path: str | Path) -> tuple[dict, list[TrajectoryRecord]]:
    return read_header(path), list(iter_records(path))
