"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed even when output capture is on.
"""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from tensorspike.amp import amp_init, amp_step, run_both_inits
from tensorspike.cli import FIG1_DAMPING, FIG1_LEFT_DELTAS
from tensorspike.free_energy import imms_consistency, maximize_phi_rs, phi_rs
from tensorspike.integrate import MonteCarlo
from tensorspike.model import AWGN, Bernoulli, Clusters, Gaussian, ModelSpec, Rademacher, make_instance, make_score
from tensorspike.oracle import exact_free_energy, nishimori_check
from tensorspike.phase import (
    compute_thresholds,
    find_delta_c,
    gaussian_closed_thresholds,
    mu_tri,
    table1_cell,
    tri_critical,
)
from tensorspike.state_evolution import cluster_mr_with_error, cluster_se_step, line_model, se_fixed_point, se_step
from tensorspike.tensor_core import read_tensor, write_tensor

from conftest import CATALOG, naive_amp_step


@pytest.fixture
def report(capsys):
    def emit(k, failures, detail=""):
        status = "PASS" if not failures else "FAIL"
        msg = f"CRITERION {k} {status}"
        if detail:
            msg += f": {detail}"
        if failures:
            msg += " | " + "; ".join(failures)
        with capsys.disabled():
            print("\n" + msg)
        assert not failures, msg

    return emit


# 1 ---------------------------------------------------------------------------

RADEMACHER_IT = {2: 1.000, 3: 0.2828, 4: 0.1902, 5: 0.1473, 10: 0.07216}
GAUSSIAN_IT = {2: 2 * math.log(2), 3: 0.754, 4: 0.701, 5: 0.685, 10: 0.677}
CLUSTER_RATIO = {3: 1.0, 4: 1.18, 5: 1.62, 10: 6.59}


@pytest.mark.slow
def test_criterion_1_table(report):
    bad = []
    for p, ref in RADEMACHER_IT.items():
        v = table1_cell("rademacher", p)["delta_it"]
        if abs(v - ref) > 5e-4:
            bad.append(f"rademacher p={p} delta_it={v:.5f} vs {ref}")
    for p, ref in GAUSSIAN_IT.items():
        v = table1_cell("gaussian", p)["delta_it*p*log(p)"]
        if abs(v - ref) > 5e-3:
            bad.append(f"gaussian p={p} scaled={v:.4f} vs {ref:.4f}")
    ber = table1_cell("bernoulli:rho=0.1", 3)
    if abs(ber["delta_it*rho^-p"] - 0.577) > 0.005:
        bad.append(f"bernoulli delta_it/rho^3={ber['delta_it*rho^-p']:.4f} vs 0.577")
    if abs(ber["delta_alg*rho^(2-2p)"] - 3.738) > 0.01:
        bad.append(f"bernoulli delta_alg/rho^4={ber['delta_alg*rho^(2-2p)']:.4f} vs 3.738")
    for p in (2, 3, 4, 5, 10):
        cell = table1_cell("clusters:r=3", p)
        alg = cell["delta_alg*r^(2p-2)/(p-1)"]
        if abs(alg - 1.0) > 1e-4:
            bad.append(f"clusters p={p} scaled delta_alg={alg:.6f} vs 1")
        if p in CLUSTER_RATIO:
            ratio, ref = cell["delta_it/delta_alg"], CLUSTER_RATIO[p]
            if abs(ratio - ref) > 0.02 * ref:
                bad.append(f"clusters p={p} delta_it/delta_alg={ratio:.4f} vs {ref}")
    report(1, bad, "Table 1 cells")


# 2 ---------------------------------------------------------------------------


def test_criterion_2_gaussian_closed_forms(report):
    bad = []
    for p in (3, 4):
        for mu in np.round(np.arange(0.0, 0.351, 0.05), 2):
            ts = compute_thresholds(p, Gaussian(float(mu)))
            alg, dyn, _, _ = gaussian_closed_thresholds(float(mu), p)
            if abs(ts.delta_alg - alg) > 1e-4:
                bad.append(f"p={p} mu={mu} delta_alg {ts.delta_alg:.5f} vs {alg:.5f}")
            if abs(ts.delta_dyn - dyn) > 1e-4:
                bad.append(f"p={p} mu={mu} delta_dyn {ts.delta_dyn:.5f} vs {dyn:.5f}")
        tri = tri_critical(p, "gaussian", "numeric")
        x = (p - 2) * (3 * p - 4) / p**2
        d_ref = x ** (p - 2) / (1 + x) ** (p - 1)
        if abs(tri.param - mu_tri(p)) > 1e-6:
            bad.append(f"p={p} mu_tri {tri.param:.7f} vs {mu_tri(p):.7f}")
        if abs(tri.delta - d_ref) > 1e-6:
            bad.append(f"p={p} delta_tri {tri.delta:.6f} vs {d_ref:.6f}")
    dyn0 = compute_thresholds(3, Gaussian(0.0), tol=1e-6).delta_dyn
    if abs(dyn0 - 0.25) > 1e-6:
        bad.append(f"delta_dyn(0,3)={dyn0:.8f}")
    report(2, bad, "bisection versus closed forms")


# 3 ---------------------------------------------------------------------------


def test_criterion_3_bernoulli(report):
    bad = []
    rho = 1e-3
    alg = compute_thresholds(3, Bernoulli(rho)).delta_alg / rho**4
    if abs(alg - 2 * math.e) > 0.05 * 2 * math.e:
        bad.append(f"delta_alg/rho^4={alg:.4f} vs 2e")
    tri = tri_critical(3, "bernoulli")
    if abs(tri.param - 0.178) > 0.004:
        bad.append(f"rho_tri={tri.param:.5f}")
    scaled = tri.delta / tri.param**4
    if abs(scaled - 2.60) > 0.05:
        bad.append(f"delta_tri/rho^4={scaled:.4f}")
    report(3, bad, f"delta_alg/rho^4={alg:.4f}, rho_tri={tri.param:.5f}, delta_tri/rho^4={scaled:.4f}")


# 4 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_amp_versus_se(report):
    prior = Gaussian(0.2)
    bad = []
    worst = 0.0
    bistable = 0
    for d in FIG1_LEFT_DELTAS:
        lo = se_fixed_point(d, 3, prior, "eps").m_star[0, 0]
        hi = se_fixed_point(d, 3, prior, "informative").m_star[0, 0]
        window = hi - lo > 0.1
        bistable += window
        for seed in range(3):
            x0, s, dd = make_score(ModelSpec(3, 1000, prior, AWGN(d)), seed)
            uninf, inf = run_both_inits(s, dd, prior, x0, seed=seed, damping=FIG1_DAMPING, max_iter=1000)
            ou, oi = uninf.overlap[0, 0], inf.overlap[0, 0]
            for name, o, ref in (("uninformative", ou, lo), ("informative", oi, hi)):
                worst = max(worst, abs(o - ref))
                if abs(o - ref) > 0.05:
                    bad.append(f"delta={d} seed={seed} {name} {o:.4f} vs SE {ref:.4f}")
            if window and not (abs(ou - lo) < abs(ou - hi) and abs(oi - hi) < abs(oi - lo)):
                bad.append(f"delta={d} seed={seed} runs did not separate ({ou:.3f}, {oi:.3f})")
    if bistable == 0:
        bad.append("grid misses the bistable window")
    report(4, bad, f"max |AMP - SE| = {worst:.4f} over 30 runs, {bistable} bistable deltas")


# 5 ---------------------------------------------------------------------------

_THREAD_SCRIPT = """
import hashlib, sys, numpy as np
from tensorspike._accel import set_threads
from tensorspike.tensor_core import SymmetricTensor, contract_leave_one, n_entries
set_threads(int(sys.argv[1]))
gen = np.random.default_rng(11)
t = SymmetricTensor(300, 3, gen.standard_normal(n_entries(300, 3)))
x = gen.standard_normal((300, 2))
print(hashlib.sha256(contract_leave_one(t, x).tobytes()).hexdigest())
"""


def test_criterion_5_exactness(report, tmp_path):
    bad = []
    worst_nish = 0.0
    for prior in (Rademacher(), Bernoulli(0.3)):
        for delta in (0.05, 0.3, 1.0):
            rep = nishimori_check(prior, 3, delta, n=8, trials=20, seed=5)
            worst_nish = max(worst_nish, rep.max_discrepancy)
            if rep.max_discrepancy >= 1e-10:
                bad.append(f"nishimori {prior!r} delta={delta}: {rep.max_discrepancy:.2e}")
    worst_amp = 0.0
    for name, prior in CATALOG.items():
        for p in (2, 3, 4):
            n = 8
            inst = make_instance(ModelSpec(p, n, prior, AWGN(0.5)), 3)
            st = amp_step(amp_init("random", prior, 1, n=n), inst.y, 0.5, prior)
            ref = naive_amp_step(inst.y, 0.5, prior, st.xhat, st.xhat_prev, st.sigma)[0]
            err = float(np.max(np.abs(amp_step(st, inst.y, 0.5, prior).xhat - ref)))
            worst_amp = max(worst_amp, err)
            if err > 1e-12:
                bad.append(f"amp_step {name} p={p}: {err:.2e}")
    inst = make_instance(ModelSpec(3, 40, Gaussian(0.1), AWGN(0.3)), 9)
    path = tmp_path / "y.tns"
    write_tensor(inst.y, path)
    if read_tensor(path).data.tobytes() != inst.y.data.tobytes():
        bad.append("tensor round trip not bit-exact")
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    digests = set()
    for k in (1, 2, 4):
        out = subprocess.run([sys.executable, "-c", _THREAD_SCRIPT, str(k)], env=env, capture_output=True,
                             text=True, check=True)
        digests.add(out.stdout.strip())
    if len(digests) != 1:
        bad.append(f"contraction differs across thread counts ({len(digests)} distinct)")
    report(5, bad, f"nishimori max {worst_nish:.1e}, amp_step max {worst_amp:.1e}, threads 1/2/4 identical")


# 6 ---------------------------------------------------------------------------

RANK_ONE = {
    "gaussian": (Gaussian(0.0), 3),
    "gaussian:mu=0.2": (Gaussian(0.2), 3),
    "rademacher": (Rademacher(), 3),
    "bernoulli:rho=0.3": (Bernoulli(0.3), 3),
    "rademacher p=2": (Rademacher(), 2),
}


def test_criterion_6_stationarity_duality(report):
    bad = []
    worst_grad = 0.0
    worst_rel = 0.0
    worst_conv = 0.0
    for name, (prior, p) in RANK_ONE.items():
        ts = compute_thresholds(p, prior)
        ref = ts.delta_it if ts.delta_it else ts.delta_c
        for d in np.geomspace(0.3, 3.0, 10) * ref:
            for init in ("eps", "informative"):
                fp = se_fixed_point(float(d), p, prior, init, tol=1e-15)
                if not fp.converged:
                    continue
                m = fp.m_star[0, 0]
                h = 1e-5 * max(m, 1e-2)
                lo = max(m - h, 0.0)
                g = (phi_rs(m + h, d, p, prior) - phi_rs(lo, d, p, prior)) / (m + h - lo)
                worst_grad = max(worst_grad, abs(g))
                if abs(g) >= 1e-6:
                    bad.append(f"{name} delta={d:.4g} {init}: dphi/dm={g:.1e}")
        grid = np.geomspace(0.3, 3.0, 24) * ref
        exclude = (ts.delta_it,) if ts.hard_phase else ()
        rep = imms_consistency(grid, p, prior, rel_tol=1e-3, convexity_tol=1e-6, exclude=exclude)
        worst_rel = max(worst_rel, rep.max_rel_violation)
        worst_conv = min(worst_conv, rep.min_second_difference)
        bad.extend(f"{name}: {v}" for v in rep.violations)
    report(6, bad, f"max |dphi/dm| {worst_grad:.1e}, I-MMSE rel {worst_rel:.1e}, min 2nd diff {worst_conv:.1e}")


# 7 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_clusters(report):
    bad = []
    for p in (2, 3, 4, 5):
        for r in (2, 3, 4):
            dc = find_delta_c(p, Clusters(r))
            ref = (p - 1) / r ** (2 * p - 2)
            if abs(dc - ref) > 1e-5 * ref:
                bad.append(f"delta_c p={p} r={r}: {dc:.8g} vs {ref:.8g}")
    for r in (2, 3, 4):
        for x in (0.005, 0.01, 0.02):
            v, err = cluster_mr_with_error(x, r)
            taylor = x / r**2 + x**2 * (r - 4) / (2 * r**4)
            if abs(v - taylor) > 3 * err:
                bad.append(f"M_{r}({x}) {v:.6g} vs {taylor:.6g} (stderr {err:.1e})")
    r, p, d = 3, 3, 0.03
    prior = Clusters(r)
    line = line_model(prior, p)
    worst = 0.0
    for b in (0.2, 0.6):
        outs = np.array([se_step(line.matrix(b), d, p, prior, MonteCarlo(100_000, s)) for s in range(12)])
        bs = np.array([cluster_se_step(b, d, p, r, MonteCarlo(100_000, 100 + s)) for s in range(12)])
        err = outs.std(axis=0, ddof=1) / math.sqrt(12)
        target = line.matrix(bs.mean())
        terr = np.abs(line.matrix(bs.mean() + bs.std(ddof=1) / math.sqrt(12)) - target)
        z = np.abs(outs.mean(axis=0) - target) / np.hypot(err, terr)
        worst = max(worst, float(z.max()))
        if np.any(z > 3):
            bad.append(f"closure at b={b}: max z {z.max():.2f}")
    report(7, bad, f"closure max z {worst:.2f}")


# 8 ---------------------------------------------------------------------------


def test_criterion_8_finite_size_trend(report):
    bad = []
    parts = []
    for delta in (0.2, 0.5):
        target = maximize_phi_rs(delta, 3, Rademacher()).phi_star
        gaps = []
        for n in (6, 8, 10, 12):
            f, se = exact_free_energy(n, 3, Rademacher(), delta, mc_trials=1000, seed=17)
            gaps.append((abs(target - f), se))
        for (g0, s0), (g1, s1), n in zip(gaps, gaps[1:], (8, 10, 12)):
            if g1 > g0 + math.hypot(s0, s1):
                bad.append(f"delta={delta} N={n}: gap {g1:.4f} > {g0:.4f} beyond error bars")
        parts.append(f"delta={delta} gaps " + ",".join(f"{g:.4f}" for g, _ in gaps))
    report(8, bad, "; ".join(parts))
