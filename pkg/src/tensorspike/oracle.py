"""Exact small-N references: posterior enumeration, Nishimori checks, F_N."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rng as _rng
from ._accel import njit, resolve_backend
from .errors import CapacityError, NotApplicableError, ShapeError, UsageError
from .model import AWGN, ModelSpec, Prior, make_instance
from .tensor_core import SymmetricTensor, n_entries, unrank_block

MAX_STATES = 1 << 24
_CHUNK = 1 << 14
_PAIR_LIMIT = 1 << 12


def _coeff(n: int, p: int) -> float:
    return math.sqrt(math.factorial(p - 1)) / n ** ((p - 1) / 2)


def _tuples(n: int, p: int) -> np.ndarray:
    return unrank_block(0, n_entries(n, p), n, p)


def hamiltonian(x, y: SymmetricTensor, delta: float, p: int | None = None) -> np.ndarray | float:
    """Energy of one configuration ``(n,)`` or a batch ``(K, n)`` (rank one)."""
    p = y.p if p is None else p
    if p != y.p:
        raise ShapeError("p does not match the tensor order")
    if delta <= 0:
        raise UsageError("delta must be positive")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[-1] != y.n:
        raise ShapeError(f"configuration length {xb.shape[-1]} does not match n={y.n}")
    c = _coeff(y.n, p)
    tup = _tuples(y.n, p)
    out = np.empty(xb.shape[0])
    step = max(16, (1 << 22) // (tup.shape[0] * p))
    for s in range(0, xb.shape[0], step):
        blk = xb[s : s + step]
        prod = np.prod(blk[:, tup], axis=-1)
        out[s : s + step] = (c * prod @ y.data - 0.5 * c * c * np.sum(prod * prod, axis=1)) / delta
    return float(out[0]) if single else out


@dataclass
class ExactPosterior:
    n: int
    atoms: np.ndarray  # (K,) scalar atoms
    log_weights: np.ndarray  # (K^n,) log P_X(X) + H(X)
    log_z: float
    marginals: np.ndarray  # (n,) posterior means
    order: str = "lex"  # digit j of the configuration index selects x_j

    def configuration(self, index: int) -> np.ndarray:
        return _config_block(np.array([index]), self.n, self.atoms)[0]

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_z)


def _config_block(idx: np.ndarray, n: int, atoms: np.ndarray) -> np.ndarray:
    k = atoms.size
    digits = (idx[:, None] // (k ** np.arange(n))[None, :]) % k
    return atoms[digits]


@njit
def _gray_rademacher(data, tup_of, tup_ptr, tuples, n, c, delta, out):
    """Linear part of the energy over all ``2^n`` sign vectors, Gray-code order.

    ``out[g]`` receives the value for the configuration whose bit ``j`` is
    ``x_j = +1``.  Exact recomputation every 4096 steps bounds the
    drift of the running sum.
    """
    total = 1 << n
    x = -np.ones(n)
    p = tuples.shape[1]
    cur = 0.0
    for t in range(tuples.shape[0]):
        prod = 1.0
        for a in range(p):
            prod *= x[tuples[t, a]]
        cur += data[t] * prod
    out[0] = c * cur / delta
    g = 0
    for i in range(1, total):
        k = 0
        while ((i >> k) & 1) == 0:
            k += 1
        g ^= 1 << k
        x[k] = -x[k]
        if i % 4096 == 0:
            cur = 0.0
            for t in range(tuples.shape[0]):
                prod = 1.0
                for a in range(p):
                    prod *= x[tuples[t, a]]
                cur += data[t] * prod
        else:
            d = 0.0
            for q in range(tup_ptr[k], tup_ptr[k + 1]):
                t = tup_of[q]
                prod = 1.0
                for a in range(p):
                    prod *= x[tuples[t, a]]
                d += data[t] * prod
            # tuples through k flipped sign: new - old = 2 * new
            cur += 2.0 * d
        out[g] = c * cur / delta


def _incidence(tup: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    rows = np.repeat(np.arange(tup.shape[0]), tup.shape[1])
    cols = tup.ravel()
    order = np.argsort(cols, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, cols + 1, 1)
    return rows[order].astype(np.int64), np.cumsum(ptr)


def _scalar_support(prior: Prior) -> tuple[np.ndarray, np.ndarray]:
    sup = prior.support()
    if sup is None or prior.r != 1:
        raise NotApplicableError("exact enumeration needs a discrete rank-one prior")
    atoms, w = sup
    keep = w > 0
    return atoms[keep, 0].astype(np.float64), w[keep].astype(np.float64)


def exact_posterior(y: SymmetricTensor, delta: float, prior: Prior, p: int | None = None,
                    backend: str | None = None) -> ExactPosterior:
    """Enumerate all ``K^n`` configurations of a discrete prior."""
    p = y.p if p is None else p
    if p != y.p:
        raise ShapeError("p does not match the tensor order")
    if delta <= 0:
        raise UsageError("delta must be positive")
    n = y.n
    if n < p:
        raise UsageError(f"need n >= p, got n={n}, p={p}")
    atoms, aw = _scalar_support(prior)
    k = atoms.size
    if k**n > MAX_STATES:
        raise CapacityError(f"{k}^{n} configurations exceeds the cap of 2^24")
    total = k**n
    tup = _tuples(n, p)
    c = _coeff(n, p)
    logw = np.empty(total)
    is_pm1 = k == 2 and np.array_equal(np.sort(atoms), [-1.0, 1.0])
    if is_pm1 and resolve_backend(backend) == "numba":
        # quadratic term is the constant -(c^2/2) T / delta for +-1 entries
        tup_of, ptr = _incidence(tup, n)
        _gray_rademacher(y.data, tup_of, ptr, tup.astype(np.int64), n, c, delta, logw)
        # bit j = 1 means x_j = +1; map to digit order (digit = atom index)
        if atoms[0] > atoms[1]:
            logw = logw[(total - 1) ^ np.arange(total)]
        logw -= 0.5 * c * c * tup.shape[0] / delta
        for s in range(0, total, _CHUNK):
            idx = np.arange(s, min(s + _CHUNK, total))
            logw[s : s + idx.size] += _log_prior_block(idx, n, aw)
    else:
        for s in range(0, total, _CHUNK):
            idx = np.arange(s, min(s + _CHUNK, total))
            cfg = _config_block(idx, n, atoms)
            logw[s : s + idx.size] = hamiltonian(cfg, y, delta, p) + _log_prior_block(idx, n, aw)
    log_z = float(logsumexp(logw))
    marg = np.zeros(n)
    for s in range(0, total, _CHUNK):
        idx = np.arange(s, min(s + _CHUNK, total))
        cfg = _config_block(idx, n, atoms)
        marg += np.exp(logw[s : s + idx.size] - log_z) @ cfg
    return ExactPosterior(n, atoms, logw, log_z, marg)


def _log_prior_block(idx: np.ndarray, n: int, aw: np.ndarray) -> np.ndarray:
    k = aw.size
    with np.errstate(divide="ignore"):
        lw = np.log(aw)
    digits = (idx[:, None] // (k ** np.arange(n))[None, :]) % k
    return lw[digits].sum(axis=1)


def log_normalizer(y: SymmetricTensor, delta: float, prior: Prior, backend: str | None = None) -> float:
    """``log Z_N = log sum_X P_X(X) exp(H(X))``."""
    return exact_posterior(y, delta, prior, backend=backend).log_z


@dataclass
class NishimoriReport:
    n: int
    p: int
    delta: float
    trials: int
    replica_overlaps: list  # E<X . X'> per instance
    planted_overlaps: list  # E_{X0 ~ posterior}<X . X0> per instance
    max_discrepancy: float
    mmse_direct: float  # mean over trials of (1/N)||X0 - <X>||^2
    mmse_identity: float  # Sigma_X - mean <X . X0>
    mmse_gap_stderr: float

    def to_dict(self):
        return dict(self.__dict__)


def _trial_seed(seed: int, trial: int) -> int:
    return int(_rng.generator(seed, _rng.ORACLE, trial).integers(0, 2**62))


def nishimori_check(prior: Prior, p: int, delta: float, n: int = 8, trials: int = 20, seed: int = 0,
                    backend: str | None = None) -> NishimoriReport:
    """Replica overlap versus planted overlap, per planted instance.

    Both sides are evaluated on the exact posterior: one as a double sum
    over independent replicas, the other as a sum over a posterior-drawn
    planted signal.
    """
    if trials < 1:
        raise UsageError("need at least one trial")
    spec = ModelSpec(p, n, prior, AWGN(delta))
    sx = float(prior.moments().sigma_x[0, 0])
    rep, pla, direct, ident = [], [], [], []
    for t in range(trials):
        inst = make_instance(spec, _trial_seed(seed, t))
        post = exact_posterior(inst.y, delta, prior, backend=backend)
        w = post.weights()
        m = post.marginals
        # replica side: literal double sum over configuration pairs;
        # planted side: the planted signal drawn from the posterior
        a = 0.0
        b = 0.0
        for s0 in range(0, w.size, _CHUNK):
            i0 = np.arange(s0, min(s0 + _CHUNK, w.size))
            c0 = _config_block(i0, n, post.atoms)
            w0 = w[s0 : s0 + i0.size]
            b += float(w0 @ (c0 @ m))
            if w.size > _PAIR_LIMIT:
                continue
            for s1 in range(0, w.size, _CHUNK):
                i1 = np.arange(s1, min(s1 + _CHUNK, w.size))
                c1 = _config_block(i1, n, post.atoms)
                a += float(w0 @ (c0 @ c1.T) @ w[s1 : s1 + i1.size])
        if w.size > _PAIR_LIMIT:
            a = float(m @ m)  # factorized form; the pair sum is too large
        rep.append(a / n)
        pla.append(b / n)
        x0 = inst.x0[:, 0]
        direct.append(float(np.sum((x0 - m) ** 2) / n))
        ident.append(sx - float(m @ x0) / n)
    disc = float(np.max(np.abs(np.array(rep) - np.array(pla))))
    gaps = np.array(direct) - np.array(ident)
    se = float(gaps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    return NishimoriReport(n, p, delta, trials, rep, pla, disc, float(np.mean(direct)), float(np.mean(ident)), se)


def exact_free_energy(n: int, p: int, prior: Prior, delta: float, mc_trials: int = 1000, seed: int = 0,
                      backend: str | None = None) -> tuple[float, float]:
    """Monte Carlo estimate of ``F_N = E log Z_N / N`` and its standard error."""
    if mc_trials < 2:
        raise UsageError("need at least two trials for an error bar")
    atoms, _ = _scalar_support(prior)
    if atoms.size**n > MAX_STATES:
        raise CapacityError(f"{atoms.size}^{n} configurations exceeds the cap of 2^24")
    spec = ModelSpec(p, n, prior, AWGN(delta))
    vals = np.empty(mc_trials)
    for t in range(mc_trials):
        inst = make_instance(spec, _trial_seed(seed, t))
        vals[t] = log_normalizer(inst.y, delta, prior, backend) / n
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_trials))

