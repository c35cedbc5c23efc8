"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 400] [--p 3] [--r 2] [--repeat 5]

Each kernel is run once untimed so JIT compilation is excluded, then timed
``--repeat`` times; the best time is reported along with the max deviation
between backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tensorspike import rng
from tensorspike._accel import HAVE_NUMBA
from tensorspike.tensor_core import SymmetricTensor, contract_leave_one, fill_spike, n_entries


def best_of(fn, repeat):
    fn()  # warmup / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--r", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    gen = rng.generator(0, rng.NOISE)
    size = n_entries(args.n, args.p)
    s = SymmetricTensor(args.n, args.p, gen.standard_normal(size), copy=False)
    x = gen.standard_normal((args.n, args.r))
    print(f"n={args.n} p={args.p} r={args.r} entries={size:,}")

    rows = []
    for label, mk in [
        ("contract_leave_one", lambda b: (lambda: contract_leave_one(s, x, backend=b))),
        ("fill_spike", lambda b: (lambda: _spike(x, args.p, size, b))),
    ]:
        t_nb, o_nb = best_of(mk("numba"), args.repeat)
        t_np, o_np = best_of(mk("numpy"), args.repeat)
        dev = float(np.max(np.abs(o_nb - o_np)))
        rows.append((label, t_nb, t_np, dev))

    print(f"{'kernel':<20}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for label, t_nb, t_np, dev in rows:
        print(f"{label:<20}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x{dev:>14.2e}")


def _spike(x, p, size, backend):
    out = np.empty(size)
    fill_spike(x, p, 1.0, out, backend=backend)
    return out


if __name__ == "__main__":
    main()
