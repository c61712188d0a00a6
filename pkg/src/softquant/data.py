"""Synthetic datasets and IDX tensor files.

The generators are deterministic in the seed. IDX is the classic
big-endian image/label container: magic {0, 0, dtype, ndim}, then ndim
uint32 dimensions, then row-major payload.
"""

from __future__ import annotations

import numpy as np

_IDX_CODES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_REVERSE = {v.newbyteorder("="): k for k, v in _IDX_CODES.items()}


def two_moons(n: int = 400, noise: float = 0.2, seed: int = 0):
    """Two interleaved half-circles with Gaussian jitter.

    Returns (X, y): X float64 of shape (n, 2), y int64 labels 0/1.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    x0 = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    x1 = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    X = np.concatenate([x0, x1], axis=0)
    X += rng.normal(0.0, noise, size=X.shape)
    y = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    perm = rng.permutation(n)
    return X[perm], y[perm]


def gaussian_blobs(n: int = 300, centers=((-2.0, 0.0), (2.0, 0.0), (0.0, 2.5)),
                   spread: float = 0.6, seed: int = 0):
    """Isotropic Gaussian clusters; labels are the cluster indices."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2:
        raise ValueError("centers must be a 2-D array of coordinates")
    k = len(centers)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, size=n)
    X = centers[labels] + rng.normal(0.0, spread, size=(n, centers.shape[1]))
    perm = rng.permutation(n)
    return X[perm], labels[perm].astype(np.int64)


def read_idx(path) -> np.ndarray:
    """Read an IDX file into a native-endian array."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if len(magic) != 4 or magic[0] != 0 or magic[1] != 0:
            raise ValueError(f"not an IDX file: bad magic {magic!r}")
        code, ndim = magic[2], magic[3]
        if code not in _IDX_CODES:
            raise ValueError(f"unknown IDX dtype code 0x{code:02x}")
        dims_raw = f.read(4 * ndim)
        if len(dims_raw) != 4 * ndim:
            raise ValueError("truncated IDX header")
        dims = np.frombuffer(dims_raw, dtype=">u4").tolist()
        count = int(np.prod(dims)) if dims else 1
        payload = f.read()
    dt = _IDX_CODES[code]
    expected = count * dt.itemsize
    if len(payload) != expected:
        raise ValueError(f"IDX payload is {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=dt).reshape(dims)
    return arr.astype(dt.newbyteorder("="))


def write_idx(path, arr) -> None:
    arr = np.asarray(arr)
    key = arr.dtype.newbyteorder("=")
    if key not in _IDX_REVERSE:
        raise ValueError(f"dtype {arr.dtype} not representable in IDX")
    if arr.ndim > 255:
        raise ValueError("too many dimensions for IDX")
    code = _IDX_REVERSE[key]
    with open(path, "wb") as f:
        f.write(bytes([0, 0, code, arr.ndim]))
        f.write(np.asarray(arr.shape, dtype=">u4").tobytes())
        f.write(arr.astype(arr.dtype.newbyteorder(">")).tobytes())
