import itertools
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorspike.errors import FormatError, InvalidIndexError, MemoryCapError, ShapeError
from tensorspike.tensor_core import (
    SymmetricTensor,
    check_alloc,
    colex_rank,
    colex_unrank,
    contract_leave_one,
    iter_tuples,
    n_entries,
    read_tensor,
    tensor_io,
    write_tensor,
)

from conftest import naive_contract


def _random_tensor(n, p, seed=0):
    gen = np.random.default_rng(seed)
    return SymmetricTensor(n, p, gen.standard_normal(n_entries(n, p)))


# -- indexing ----------------------------------------------------------------


def test_colex_examples():
    # 0-based versions of (1,2,3), (1,2,4), (2,4,5)
    assert colex_rank((0, 1, 2)) == 0
    assert colex_rank((0, 1, 3)) == 1
    assert colex_rank((1, 3, 4)) == 8


def test_colex_matches_enumeration_order():
    n, p = 7, 3
    colex = sorted(itertools.combinations(range(n), p), key=lambda t: t[::-1])
    assert [colex_rank(t) for t in colex] == list(range(n_entries(n, p)))
    assert list(iter_tuples(n, p)) == colex


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6).flatmap(lambda p: st.tuples(st.just(p), st.sets(st.integers(0, 40), min_size=p, max_size=p))))
def test_rank_unrank_roundtrip(args):
    p, idx = args
    tup = tuple(sorted(idx))
    assert colex_unrank(colex_rank(tup), p) == tup


@pytest.mark.parametrize("bad", [(2, 1, 3), (1, 1, 2), (-1, 0, 2)])
def test_rank_rejects_invalid(bad):
    with pytest.raises(InvalidIndexError):
        colex_rank(bad)


@settings(max_examples=50, deadline=None)
@given(st.permutations([0, 2, 5]))
def test_lookup_permutation_invariant(perm):
    t = _random_tensor(6, 3)
    assert t[perm] == t[(0, 2, 5)]


def test_lookup_rejects_diagonal():
    t = _random_tensor(5, 3)
    with pytest.raises(InvalidIndexError):
        t[(1, 1, 2)]
    with pytest.raises(InvalidIndexError):
        t[(0, 1, 5)]


def test_construction_checks():
    with pytest.raises(ShapeError):
        SymmetricTensor(5, 3, np.zeros(9))
    with pytest.raises(ShapeError):
        SymmetricTensor(5, 1, np.zeros(5))
    with pytest.raises(TypeError):
        SymmetricTensor(4, 2, np.zeros(6, dtype=np.float32))
    t = _random_tensor(5, 2)
    with pytest.raises(ValueError):
        t.data[0] = 1.0


# -- contraction -------------------------------------------------------------


def test_contraction_zero_tensor():
    out = contract_leave_one(SymmetricTensor.zeros(6, 3), np.ones((6, 2)))
    assert np.all(out == 0)


def test_contraction_all_ones():
    s = SymmetricTensor(4, 3, np.ones(4))
    out = contract_leave_one(s, np.ones((4, 1)), prefactor=2.0)
    np.testing.assert_array_equal(out, np.full((4, 1), 6.0))


@pytest.mark.parametrize("backend", ["numba", "numpy"])
@pytest.mark.parametrize("p", [2, 3, 4])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_contraction_matches_naive(backend, p, r):
    n = 8
    s = _random_tensor(n, p, seed=p * 10 + r)
    x = np.random.default_rng(r).standard_normal((n, r))
    ref = naive_contract(s, x, 0.7)
    out = contract_leave_one(s, x, 0.7, backend=backend)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_contraction_strategies_bit_identical():
    s = _random_tensor(30, 3)
    x = np.random.default_rng(1).standard_normal((30, 2))
    a = contract_leave_one(s, x, backend="numba", strategy="scatter")
    b = contract_leave_one(s, x, backend="numba", strategy="gather")
    s4 = _random_tensor(14, 4)
    x4 = np.random.default_rng(2).standard_normal((14, 3))
    c = contract_leave_one(s4, x4, backend="numba", strategy="scatter")
    d = contract_leave_one(s4, x4, backend="numba", strategy="gather")
    assert np.array_equal(a, b)
    assert np.array_equal(c, d)


def test_contraction_distinct_factors():
    n, p = 7, 3
    s = _random_tensor(n, p)
    gen = np.random.default_rng(3)
    f1, f2 = gen.standard_normal((n, 2)), gen.standard_normal((n, 2))
    out = contract_leave_one(s, [f1, f2])
    ref = np.zeros((n, 2))
    for tup in itertools.combinations(range(n), p):
        for pos, i in enumerate(tup):
            j, k = tup[:pos] + tup[pos + 1:]
            ref[i] += s[tup] * 0.5 * (f1[j] * f2[k] + f1[k] * f2[j])
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_contraction_shape_error():
    with pytest.raises(ShapeError):
        contract_leave_one(_random_tensor(6, 3), np.ones((5, 1)))


# -- binary IO ---------------------------------------------------------------


def test_roundtrip_bit_exact(tmp_path):
    t = _random_tensor(10, 3)
    path = tmp_path / "t.tns"
    write_tensor(t, path)
    back = read_tensor(path)
    assert back == t
    assert back.data.tobytes() == t.data.tobytes()
    assert tensor_io("read", path) == t


def test_header_layout(tmp_path):
    t = _random_tensor(9, 4)
    path = tmp_path / "t.tns"
    write_tensor(t, path)
    raw = path.read_bytes()
    assert raw[:8] == b"SPIKTENS"
    version, p, n, dtype = struct.unpack("<IIQB", raw[8:25])
    assert (version, p, n, dtype) == (1, 4, 9, 1)
    assert raw[25:32] == b"\0" * 7
    assert len(raw) == 32 + 8 * math.comb(9, 4)
    np.testing.assert_array_equal(np.frombuffer(raw[32:], dtype="<f8"), t.data)


def test_truncated_file(tmp_path):
    path = tmp_path / "t.tns"
    write_tensor(_random_tensor(8, 3), path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_tensor(path)
    path.write_bytes(b"SPIK")
    with pytest.raises(FormatError):
        read_tensor(path)


@pytest.mark.parametrize("field,value", [("magic", b"NOTATENS"), ("version", 2), ("p", 1), ("dtype", 2)])
def test_bad_header(tmp_path, field, value):
    path = tmp_path / "t.tns"
    t = _random_tensor(6, 3)
    write_tensor(t, path)
    raw = bytearray(path.read_bytes())
    if field == "magic":
        raw[:8] = value
    elif field == "version":
        raw[8:12] = struct.pack("<I", value)
    elif field == "p":
        raw[12:16] = struct.pack("<I", value)
    else:
        raw[24] = value
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(path)


def test_memory_cap(monkeypatch):
    monkeypatch.setenv("TENSORSPIKE_MEM_CAP_GB", "0.001")
    with pytest.raises(MemoryCapError):
        check_alloc(2 << 20)
    with pytest.raises(MemoryCapError):
        SymmetricTensor.zeros(200, 3)
    check_alloc(1 << 10)
