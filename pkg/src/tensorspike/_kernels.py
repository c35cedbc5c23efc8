"""Low-level kernels over the flat colex layout.

Every kernel exists twice: a numba version (``nb_*``) and a vectorized numpy
version (``np_*``).  The numba scatter and gather contractions accumulate each
output entry in ascending colex order with the same association of products,
so they agree bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit, prange

# Entries processed per block by the numpy paths; fixed so results do not
# depend on how work is scheduled.
CHUNK = 1 << 18


def binom_table(n: int, p: int) -> np.ndarray:
    """Table ``T[v, k] = C(v, k)`` for ``0 <= v <= n``, ``0 <= k <= p``."""
    if math.comb(n, p) >= 2**63:
        raise OverflowError(f"C({n},{p}) does not fit in int64")
    t = np.zeros((n + 1, p + 1), dtype=np.int64)
    for v in range(n + 1):
        for k in range(min(v, p) + 1):
            t[v, k] = math.comb(v, k)
    return t


def np_unrank(ranks: np.ndarray, p: int, table: np.ndarray) -> np.ndarray:
    """Vectorized colex unrank: ranks -> (len, p) sorted index tuples."""
    ranks = np.asarray(ranks, dtype=np.int64).copy()
    out = np.empty((ranks.size, p), dtype=np.int64)
    for k in range(p, 0, -1):
        col = table[:, k]
        # largest v with C(v, k) <= rank; column is nondecreasing in v
        v = np.searchsorted(col, ranks, side="right") - 1
        out[:, k - 1] = v
        ranks -= col[v]
    return out


# ---------------------------------------------------------------------------
# numba kernels


@njit
def nb_rank(idx, table):
    r = 0
    for a in range(idx.shape[0]):
        r += table[idx[a], a + 1]
    return r


@njit
def nb_contract_scatter(data, x, p, out):
    """Stream entries in colex order; scatter into every member index."""
    r = x.shape[1]
    idx = np.arange(p)
    pre = np.empty(p + 1)
    suf = np.empty(p + 1)
    for pos in range(data.shape[0]):
        s = data[pos]
        for k in range(r):
            pre[0] = 1.0
            for a in range(p):
                pre[a + 1] = pre[a] * x[idx[a], k]
            suf[p] = 1.0
            for a in range(p - 1, -1, -1):
                suf[a] = suf[a + 1] * x[idx[a], k]
            for a in range(p):
                out[idx[a], k] += s * pre[a] * suf[a + 1]
        j = 0
        while j < p - 1 and idx[j] + 1 == idx[j + 1]:
            idx[j] = j
            j += 1
        idx[j] += 1


@njit
def nb_contract_scatter3(data, xT, outT):
    """``p = 3`` scatter over the colex block structure.

    Works on column-major factors ``xT`` of shape ``(r, n)``.  Entries with
    largest index ``c`` form a contiguous block, and within it entries with
    middle index ``b`` are contiguous too, which lets the partial sums for
    ``b`` and ``c`` live in registers.  Additions happen in the same order
    and with the same association as :func:`nb_contract_scatter`.
    """
    r, n = xT.shape
    for k in range(r):
        x = xT[k]
        out = outT[k]
        pos = 0
        for c in range(2, n):
            xc = x[c]
            accc = 0.0
            for b in range(1, c):
                xb = x[b]
                bc = xb * xc
                accb = out[b]
                for a in range(b):
                    s = data[pos + a]
                    xa = x[a]
                    out[a] += s * bc
                    accb += s * xa * xc
                    accc += s * (xa * xb)
                out[b] = accb
                pos += b
            out[c] = accc


@njit(parallel=True)
def nb_contract_gather(data, x, p, table, out):
    """Parallel over the output index; each row summed in colex order."""
    n, r = x.shape
    ncomb = table[n - 1, p - 1]
    for i in prange(n):
        comb = np.arange(p - 1)
        full = np.empty(p, dtype=np.int64)
        acc = np.zeros(r)
        for _t in range(ncomb):
            q = 0
            slot = -1
            for a in range(p - 1):
                v = comb[a] if comb[a] < i else comb[a] + 1
                if slot < 0 and v > i:
                    full[q] = i
                    slot = q
                    q += 1
                full[q] = v
                q += 1
            if slot < 0:
                full[q] = i
                slot = q
            rank = 0
            for a in range(p):
                rank += table[full[a], a + 1]
            s = data[rank]
            for k in range(r):
                pre = 1.0
                for a in range(slot):
                    pre = pre * x[full[a], k]
                suf = 1.0
                for a in range(p - 1, slot, -1):
                    suf = suf * x[full[a], k]
                acc[k] += s * pre * suf
            j = 0
            while j < p - 2 and comb[j] + 1 == comb[j + 1]:
                comb[j] = j
                j += 1
            comb[j] += 1
        for k in range(r):
            out[i, k] = acc[k]


@njit
def nb_spike_fill(x, p, scale, data):
    """``data[rank] = scale * sum_k prod_a x[i_a, k]`` in colex order."""
    r = x.shape[1]
    idx = np.arange(p)
    for pos in range(data.shape[0]):
        acc = 0.0
        for k in range(r):
            prod = 1.0
            for a in range(p):
                prod *= x[idx[a], k]
            acc += prod
        data[pos] = scale * acc
        j = 0
        while j < p - 1 and idx[j] + 1 == idx[j + 1]:
            idx[j] = j
            j += 1
        idx[j] += 1


# ---------------------------------------------------------------------------
# numpy fallbacks


def np_contract(data: np.ndarray, x: np.ndarray, p: int, table: np.ndarray) -> np.ndarray:
    n, r = x.shape
    out = np.zeros((n, r))
    total = data.shape[0]
    for start in range(0, total, CHUNK):
        stop = min(start + CHUNK, total)
        idx = np_unrank(np.arange(start, stop), p, table)
        s = data[start:stop]
        for k in range(r):
            vals = x[idx, k]  # (m, p)
            pre = np.ones((stop - start, p + 1))
            suf = np.ones((stop - start, p + 1))
            for a in range(p):
                pre[:, a + 1] = pre[:, a] * vals[:, a]
            for a in range(p - 1, -1, -1):
                suf[:, a] = suf[:, a + 1] * vals[:, a]
            for a in range(p):
                out[:, k] += np.bincount(idx[:, a], weights=s * pre[:, a] * suf[:, a + 1], minlength=n)
    return out


def np_contract_factors(
    data: np.ndarray, factors: list[np.ndarray], p: int, table: np.ndarray
) -> np.ndarray:
    """Contraction with distinct factors, symmetrized over slot assignments."""
    import itertools

    n, r = factors[0].shape
    perms = list(itertools.permutations(range(p - 1)))
    out = np.zeros((n, r))
    total = data.shape[0]
    for start in range(0, total, CHUNK):
        stop = min(start + CHUNK, total)
        idx = np_unrank(np.arange(start, stop), p, table)
        s = data[start:stop]
        for a in range(p):
            others = np.delete(idx, a, axis=1)
            acc = np.zeros((stop - start, r))
            for perm in perms:
                term = np.ones((stop - start, r))
                for slot, f in enumerate(perm):
                    term *= factors[f][others[:, slot]]
                acc += term
            acc /= len(perms)
            for k in range(r):
                out[:, k] += np.bincount(idx[:, a], weights=s * acc[:, k], minlength=n)
    return out


def np_spike_fill(x: np.ndarray, p: int, scale: float, data: np.ndarray, table: np.ndarray) -> None:
    total = data.shape[0]
    for start in range(0, total, CHUNK):
        stop = min(start + CHUNK, total)
        idx = np_unrank(np.arange(start, stop), p, table)
        data[start:stop] = scale * np.prod(x[idx], axis=1).sum(axis=1)
