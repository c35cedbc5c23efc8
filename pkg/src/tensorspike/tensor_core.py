"""Symmetric order-p tensors restricted to strictly increasing index tuples.

Entries are stored flat in colex order.  Indices are 0-based: the tuple
``(i_1 < ... < i_p)`` lives at position ``sum_k C(i_k, k)``.
"""

from __future__ import annotations

import math
import os
import struct
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from ._accel import HAVE_NUMBA, resolve_backend
from .errors import FormatError, InvalidIndexError, MemoryCapError, ShapeError

MAGIC = b"SPIKTENS"
VERSION = 1
DTYPE_F64 = 1
_HEADER = struct.Struct("<8sIIQB7x")
HEADER_SIZE = _HEADER.size  # 32 bytes

DEFAULT_MEM_CAP_GB = 8.0


def mem_cap_bytes() -> int:
    """Allocation cap from ``TENSORSPIKE_MEM_CAP_GB`` (GiB, default 8)."""
    raw = os.environ.get("TENSORSPIKE_MEM_CAP_GB")
    gb = float(raw) if raw else DEFAULT_MEM_CAP_GB
    return int(gb * (1 << 30))


def check_alloc(nbytes: int, what: str = "tensor") -> None:
    cap = mem_cap_bytes()
    if nbytes > cap:
        raise MemoryCapError(
            f"{what} needs {nbytes / (1 << 30):.2f} GiB, above the cap of "
            f"{cap / (1 << 30):.2f} GiB (set TENSORSPIKE_MEM_CAP_GB to raise it)"
        )


def n_entries(n: int, p: int) -> int:
    return math.comb(n, p)


@lru_cache(maxsize=32)
def _table(n: int, p: int) -> np.ndarray:
    t = K.binom_table(n, p)
    t.flags.writeable = False
    return t


def colex_rank(indices: Sequence[int], p: int | None = None) -> int:
    """Position of a strictly increasing 0-based tuple in colex order."""
    idx = [int(i) for i in indices]
    if p is not None and len(idx) != p:
        raise InvalidIndexError(f"expected {p} indices, got {len(idx)}")
    if any(i < 0 for i in idx):
        raise InvalidIndexError(f"negative index in {tuple(idx)}")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise InvalidIndexError(f"indices must be strictly increasing: {tuple(idx)}")
    return sum(math.comb(i, k + 1) for k, i in enumerate(idx))


def colex_unrank(rank: int, p: int) -> tuple[int, ...]:
    """Inverse of :func:`colex_rank`."""
    if rank < 0:
        raise InvalidIndexError("rank must be non-negative")
    out = []
    for k in range(p, 0, -1):
        v = k - 1
        while math.comb(v + 1, k) <= rank:
            v += 1
        out.append(v)
        rank -= math.comb(v, k)
    return tuple(reversed(out))


def unrank_block(start: int, stop: int, n: int, p: int) -> np.ndarray:
    """Index tuples for positions ``start..stop-1`` as an ``(m, p)`` array."""
    return K.np_unrank(np.arange(start, stop), p, _table(n, p))


def iter_tuples(n: int, p: int) -> Iterable[tuple[int, ...]]:
    """All increasing tuples in colex order (slow; for tests and small n)."""
    total = n_entries(n, p)
    for start in range(0, total, K.CHUNK):
        for row in unrank_block(start, min(start + K.CHUNK, total), n, p):
            yield tuple(int(v) for v in row)


class SymmetricTensor:
    """Immutable symmetric tensor holding only extra-diagonal entries.

    Args:
        n: Dimension along each axis.
        p: Order (``p >= 2``).
        data: Flat float64 payload of length ``C(n, p)`` in colex order.
        copy: Copy ``data`` instead of taking ownership.
    """

    __slots__ = ("n", "p", "_data")

    def __init__(self, n: int, p: int, data: np.ndarray, copy: bool = True):
        n, p = int(n), int(p)
        if p < 2:
            raise ShapeError(f"order p must be >= 2, got {p}")
        if n < p:
            raise ShapeError(f"need n >= p to have any entries (n={n}, p={p})")
        arr = np.asarray(data)
        if arr.dtype != np.float64:
            raise TypeError(f"tensor payload must be float64, got {arr.dtype}")
        if arr.ndim != 1 or arr.shape[0] != n_entries(n, p):
            raise ShapeError(f"payload length {arr.size} != C({n},{p}) = {n_entries(n, p)}")
        if copy:
            check_alloc(arr.nbytes)
            arr = arr.copy()
        arr.flags.writeable = False
        self.n, self.p, self._data = n, p, arr

    @classmethod
    def zeros(cls, n: int, p: int) -> "SymmetricTensor":
        check_alloc(8 * n_entries(n, p))
        return cls(n, p, np.zeros(n_entries(n, p)), copy=False)

    @classmethod
    def from_function(cls, n: int, p: int, fn) -> "SymmetricTensor":
        """Build from ``fn(idx)`` evaluated on ``(m, p)`` blocks of tuples."""
        total = n_entries(n, p)
        check_alloc(8 * total)
        data = np.empty(total)
        for start in range(0, total, K.CHUNK):
            stop = min(start + K.CHUNK, total)
            data[start:stop] = fn(unrank_block(start, stop, n, p))
        return cls(n, p, data, copy=False)

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the flat payload."""
        return self._data

    @property
    def size(self) -> int:
        return self._data.shape[0]

    @property
    def nbytes(self) -> int:
        return self._data.nbytes

    def __getitem__(self, indices: Sequence[int]) -> float:
        idx = [int(i) for i in indices]
        if len(idx) != self.p:
            raise InvalidIndexError(f"expected {self.p} indices, got {len(idx)}")
        if any(i < 0 or i >= self.n for i in idx):
            raise InvalidIndexError(f"index out of range for n={self.n}: {tuple(idx)}")
        idx.sort()
        if any(a == b for a, b in zip(idx, idx[1:])):
            raise InvalidIndexError(f"repeated index {tuple(idx)}: diagonal entries are not stored")
        return float(self._data[colex_rank(idx)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymmetricTensor):
            return NotImplemented
        return self.n == other.n and self.p == other.p and np.array_equal(self._data, other._data)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"SymmetricTensor(n={self.n}, p={self.p})"


def contraction_prefactor(n: int, p: int) -> float:
    """``sqrt((p-1)!) / n^((p-1)/2)``."""
    return math.sqrt(math.factorial(p - 1)) / n ** ((p - 1) / 2)


def _as_factor(x: np.ndarray, n: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise ShapeError(f"factor must have shape (n, r) with n={n}, got {arr.shape}")
    return np.ascontiguousarray(arr)


def contract_leave_one(
    s: SymmetricTensor,
    factors: np.ndarray | Sequence[np.ndarray],
    prefactor: float = 1.0,
    backend: str | None = None,
    strategy: str | None = None,
) -> np.ndarray:
    """Contract ``s`` against ``p - 1`` factors, leaving one index free.

    ``out[i, k] = prefactor * sum_{tuples containing i} s[t] * prod_{j in t, j != i} x_j[k]``

    Args:
        s: Symmetric tensor.
        factors: One ``(n, r)`` array reused in every slot, or a list of
            ``p - 1`` arrays (symmetrized over slot assignments).
        prefactor: Scalar multiplying the result.
        backend: ``"numba"`` or ``"numpy"``; defaults to the env setting.
        strategy: ``"scatter"`` (serial streaming) or ``"gather"`` (parallel
            over the output index).  Both give bit-identical results; the
            default picks gather only when more than one thread is available.

    Returns:
        ``(n, r)`` array.
    """
    backend = resolve_backend(backend)
    table = _table(s.n, s.p)
    if isinstance(factors, (list, tuple)):
        fs = [_as_factor(f, s.n) for f in factors]
        if len(fs) != s.p - 1:
            raise ShapeError(f"need {s.p - 1} factors, got {len(fs)}")
        if any(f.shape != fs[0].shape for f in fs):
            raise ShapeError("factors must share a shape")
        if all(f is fs[0] or np.array_equal(f, fs[0]) for f in fs):
            x = fs[0]
        else:
            return prefactor * K.np_contract_factors(s.data, fs, s.p, table)
    else:
        x = _as_factor(factors, s.n)

    if backend == "numpy":
        out = K.np_contract(s.data, x, s.p, table)
    else:
        if strategy is None:
            from ._accel import set_threads

            strategy = "gather" if set_threads(None) > 1 else "scatter"
        out = np.zeros(x.shape)
        if strategy == "scatter":
            if s.p == 3:
                out_t = np.zeros((x.shape[1], x.shape[0]))
                K.nb_contract_scatter3(s.data, np.ascontiguousarray(x.T), out_t)
                out = out_t.T.copy()
            else:
                K.nb_contract_scatter(s.data, x, s.p, out)
        elif strategy == "gather":
            K.nb_contract_gather(s.data, x, s.p, table, out)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
    if prefactor != 1.0:
        out *= prefactor
    return out


def fill_spike(x: np.ndarray, p: int, scale: float, out: np.ndarray, backend: str | None = None) -> None:
    """Write ``scale * sum_k prod x[i_a, k]`` into ``out`` in colex order."""
    backend = resolve_backend(backend)
    x = _as_factor(x, x.shape[0])
    if backend == "numba":
        K.nb_spike_fill(x, p, float(scale), out)
    else:
        K.np_spike_fill(x, p, float(scale), out, _table(x.shape[0], p))


# ---------------------------------------------------------------------------
# binary IO


def write_tensor(t: SymmetricTensor, path: str | os.PathLike) -> None:
    """Write ``t`` in the ``.tns`` format (32-byte header + LE float64)."""
    header = _HEADER.pack(MAGIC, VERSION, t.p, t.n, DTYPE_F64)
    with open(path, "wb") as fh:
        fh.write(header)
        t.data.astype("<f8", copy=False).tofile(fh)


def read_header(path: str | os.PathLike) -> tuple[int, int]:
    """Validate the header and return ``(n, p)``."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    magic, version, p, n, dtype = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F64:
        raise FormatError(f"{path}: unsupported dtype code {dtype} (only float64)")
    if p < 2:
        raise FormatError(f"{path}: order p={p} < 2")
    if n < p:
        raise FormatError(f"{path}: n={n} < p={p}")
    return int(n), int(p)


def read_payload(path: str | os.PathLike) -> tuple[int, int, np.ndarray]:
    """Read header and a writable payload array."""
    n, p = read_header(path)
    count = n_entries(n, p)
    expected = HEADER_SIZE + 8 * count
    actual = Path(path).stat().st_size
    if actual != expected:
        raise FormatError(f"{path}: size {actual} bytes, expected {expected} for n={n}, p={p}")
    check_alloc(8 * count)
    data = np.fromfile(path, dtype="<f8", count=count, offset=HEADER_SIZE)
    return n, p, data.astype(np.float64, copy=False)


def read_tensor(path: str | os.PathLike) -> SymmetricTensor:
    n, p, data = read_payload(path)
    return SymmetricTensor(n, p, data, copy=False)


def tensor_io(mode: str, path: str | os.PathLike, tensor: SymmetricTensor | None = None):
    """Single entry point: ``tensor_io("read", path)`` or ``tensor_io("write", path, t)``."""
    if mode == "read":
        return read_tensor(path)
    if mode == "write":
        if tensor is None:
            raise ValueError("write needs a tensor")
        write_tensor(tensor, path)
        return tensor
    raise ValueError(f"mode must be 'read' or 'write', got {mode!r}")


__all__ = [
    "HAVE_NUMBA",
    "SymmetricTensor",
    "check_alloc",
    "colex_rank",
    "colex_unrank",
    "contract_leave_one",
    "contraction_prefactor",
    "fill_spike",
    "iter_tuples",
    "mem_cap_bytes",
    "n_entries",
    "read_header",
    "read_tensor",
    "tensor_io",
    "unrank_block",
    "write_tensor",
]
