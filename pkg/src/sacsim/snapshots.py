"""Field snapshot files: one JSON header line, then raw little-endian float64.

Spectral payload: interleaved (re, im) of the (2N+1)^2 coefficient square,
row-major.  Physical payload: the GxG values, row-major.
"""

from __future__ import annotations

import json

import numpy as np

from .spectral import PhysicalField, SpectralField

FORMAT_VERSION = 1


def write_snapshot(path, obj, time: float) -> None:
    if isinstance(obj, SpectralField):
        kind, size = "spectral", obj.cutoff
        flat = np.empty(obj.coeffs.size * 2, dtype="<f8")
        flat[0::2] = obj.coeffs.real.ravel()
        flat[1::2] = obj.coeffs.imag.ravel()
    elif isinstance(obj, PhysicalField):
        kind, size = "physical", obj.grid_size
        flat = obj.values.ravel().astype("<f8")
    else:
        raise TypeError("snapshot payload must be a SpectralField or PhysicalField")
    header = {"version": FORMAT_VERSION, "kind": kind,
              "cutoff_or_grid": int(size), "time": float(time)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(flat.tobytes())


def dump_noise_path(noise_path, out_dir, prefix: str = "zpath") -> list:
    """Optional path dump: one spectral snapshot of Z_{-inf, t_k} per grid time."""
    import os

    names = []
    for k in range(noise_path.fine_steps + 1):
        name = f"{prefix}_{k:06d}.bin"
        write_snapshot(os.path.join(out_dir, name), noise_path.slice_field(k),
                       noise_path.time_of(k))
        names.append(name)
    return names


def read_snapshot(path):
    """Returns (field, time); field type follows the header's kind."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot version {header.get('version')}")
    size = int(header["cutoff_or_grid"])
    data = np.frombuffer(payload, dtype="<f8")
    if header["kind"] == "spectral":
        side = 2 * size + 1
        if data.size != 2 * side * side:
            raise ValueError("spectral payload size does not match the header")
        coeffs = (data[0::2] + 1j * data[1::2]).reshape(side, side)
        return SpectralField(size, coeffs), float(header["time"])
    if header["kind"] == "physical":
        if data.size != size * size:
            raise ValueError("physical payload size does not match the header")
        return PhysicalField(size, data.reshape(size, size).copy()), float(header["time"])
    raise ValueError(f"unknown snapshot kind {header['kind']!r}")
