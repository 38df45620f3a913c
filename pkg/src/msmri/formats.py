"""Little-endian binary containers for images, coils, k-space and trajectories.

Every file starts with a 4-byte magic, a ``u32`` version (currently 1) and a
fixed number of ``u32`` dimensions, followed by ``float32`` payload. Complex
data is stored as interleaved (real, imag) pairs.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError

VERSION = 1


def _write(path, magic: bytes, dims, payload: np.ndarray):
    header = magic + struct.pack("<I", VERSION) + struct.pack(f"<{len(dims)}I", *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())


def _read(path, magic: bytes, ndims: int):
    raw = Path(path).read_bytes()
    head = 8 + 4 * ndims
    if len(raw) < head:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != magic:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    dims = struct.unpack(f"<{ndims}I", raw[8:head])
    return dims, raw[head:]


def _payload(path, body: bytes, count: int) -> np.ndarray:
    if len(body) != 4 * count:
        raise FormatError(f"{path}: expected {4 * count} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4")


def _interleave(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape + (2,), dtype="<f4")
    out[..., 0] = z.real
    out[..., 1] = z.imag
    return out


def _deinterleave(flat: np.ndarray, shape) -> np.ndarray:
    pairs = flat.reshape(tuple(shape) + (2,)).astype(np.float64)
    return pairs[..., 0] + 1j * pairs[..., 1]


def save_image(path, img: np.ndarray) -> None:
    """Write an ``(H, W, T)`` image as ``.cimg`` (t slowest, then row, column)."""
    H, W, T = img.shape
    _write(path, b"CIMG", (H, W, T), _interleave(np.transpose(img, (2, 0, 1))))


def load_image(path) -> np.ndarray:
    (H, W, T), body = _read(path, b"CIMG", 3)
    flat = _payload(path, body, 2 * H * W * T)
    return np.transpose(_deinterleave(flat, (T, H, W)), (1, 2, 0))


def save_coils(path, maps: np.ndarray) -> None:
    C, H, W = maps.shape
    _write(path, b"COIL", (C, H, W), _interleave(maps))


def load_coils(path) -> np.ndarray:
    (C, H, W), body = _read(path, b"COIL", 3)
    return _deinterleave(_payload(path, body, 2 * C * H * W), (C, H, W))


def save_kspace(path, y: np.ndarray) -> None:
    """Write ``(C, T, M)`` samples as ``.ksp`` (coil slowest, then phase, sample)."""
    C, T, M = y.shape
    _write(path, b"KSPC", (C, T, M), _interleave(y))


def load_kspace(path) -> np.ndarray:
    (C, T, M), body = _read(path, b"KSPC", 3)
    return _deinterleave(_payload(path, body, 2 * C * T * M), (C, T, M))


def save_trajectory_arrays(path, coords: np.ndarray, dcf: np.ndarray) -> None:
    """Write ``coords (T, M, 2)`` and ``dcf (T, M)`` as ``.trj`` triples."""
    T, M, _ = coords.shape
    triples = np.concatenate([coords, dcf[..., None]], axis=-1)
    _write(path, b"TRAJ", (T, M), triples)


def load_trajectory_arrays(path):
    (T, M), body = _read(path, b"TRAJ", 2)
    triples = _payload(path, body, 3 * T * M).reshape(T, M, 3).astype(np.float64)
    return triples[..., :2].copy(), triples[..., 2].copy()
