"""Bayes-optimal approximate message passing on a score tensor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import DivergenceError, MissingTruthError, ShapeError, UsageError
from .model import ModelSpec, Prior
from .tensor_core import SymmetricTensor, contract_leave_one, contraction_prefactor

PSD_TOL = 1e-10


@dataclass
class AmpState:
    xhat: np.ndarray  # (n, r)
    xhat_prev: np.ndarray  # (n, r)
    sigma: np.ndarray  # (n, r, r)
    a_mat: np.ndarray  # (r, r)
    b_vecs: np.ndarray  # (n, r)
    iter: int = 0

    @property
    def n(self) -> int:
        return self.xhat.shape[0]

    @property
    def r(self) -> int:
        return self.xhat.shape[1]

    def copy(self) -> "AmpState":
        return AmpState(self.xhat.copy(), self.xhat_prev.copy(), self.sigma.copy(), self.a_mat.copy(),
                        self.b_vecs.copy(), self.iter)


@dataclass
class AmpResult:
    state: AmpState
    converged: bool
    iterations: int
    overlap_trajectory: list = field(default_factory=list)
    mse: float | None = None
    mse_trace: float | None = None
    init: str = "random"

    @property
    def overlap(self) -> np.ndarray | None:
        return self.overlap_trajectory[-1] if self.overlap_trajectory else None

    def to_dict(self) -> dict:
        return {
            "init": self.init,
            "converged": self.converged,
            "iterations": self.iterations,
            "overlap": None if self.overlap is None else self.overlap.tolist(),
            "mse": self.mse,
            "mse_trace": self.mse_trace,
            "overlap_trajectory": [m.tolist() for m in self.overlap_trajectory],
        }


def overlap(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(1/N) sum_j u_j v_j^T``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if v.ndim == 1:
        v = v[:, None]
    return u.T @ v / u.shape[0]


def mse_two_ways(x0: np.ndarray, xhat: np.ndarray) -> tuple[float, float]:
    """``(1/N)||X0 - xhat||^2`` and ``Tr[X0.X0 + xhat.xhat - 2 xhat.X0]``."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64).T).T
    xhat = np.atleast_2d(np.asarray(xhat, dtype=np.float64).T).T
    if x0.shape != xhat.shape:
        raise ShapeError("truth and estimate must have the same shape")
    direct = float(np.sum((x0 - xhat) ** 2) / x0.shape[0])
    via = float(np.trace(overlap(x0, x0) + overlap(xhat, xhat) - overlap(xhat, x0) - overlap(x0, xhat)))
    return direct, via


def _clip_psd(sigma: np.ndarray) -> np.ndarray:
    if sigma.shape[-1] == 1:
        return np.maximum(sigma, 0.0)
    sym = 0.5 * (sigma + np.swapaxes(sigma, -1, -2))
    w, v = np.linalg.eigh(sym)
    if np.all(w >= -PSD_TOL):
        return sym
    w = np.clip(w, 0.0, None)
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


def amp_init(
    mode: str,
    spec: ModelSpec | Prior,
    seed: int = 0,
    n: int | None = None,
    truth: np.ndarray | None = None,
    xhat: np.ndarray | None = None,
    amplitude: float = 1e-3,
) -> AmpState:
    """Initial state: ``random`` (prior mean plus small noise), ``informative`` or ``custom``."""
    if isinstance(spec, ModelSpec):
        prior, n = spec.prior, spec.n
    else:
        prior = spec
        if n is None:
            if truth is not None:
                n = np.asarray(truth).shape[0]
            elif xhat is not None:
                n = np.asarray(xhat).shape[0]
            else:
                raise UsageError("n is required")
    r = prior.r
    mo = prior.moments()
    if mode == "random":
        gen = _rng.generator(seed, _rng.AMP_INIT)
        x = mo.mean[None, :] + amplitude * gen.standard_normal((n, r))
    elif mode == "informative":
        if truth is None:
            raise MissingTruthError("informative initialization needs the planted signal")
        x = np.asarray(truth, dtype=np.float64).reshape(n, r).copy()
    elif mode == "custom":
        if xhat is None:
            raise UsageError("custom initialization needs xhat")
        x = np.asarray(xhat, dtype=np.float64).reshape(n, r).copy()
    else:
        raise UsageError(f"unknown init mode {mode!r}")
    sigma = np.broadcast_to(mo.sigma_x, (n, r, r)).copy()
    if mode == "informative":
        # the truth is known exactly: zero posterior variance keeps the
        # first Onsager term consistent with the estimate
        sigma[:] = 0.0
    return AmpState(x, x.copy(), sigma, np.zeros((r, r)), np.zeros((n, r)), 0)


def _onsager_matrix(state: AmpState, delta: float, p: int) -> np.ndarray:
    """``((p-1)/delta) [mean_j sigma_j o (xhat^t . xhat^{t-1})^{o(p-2)}]``."""
    sbar = state.sigma.mean(axis=0)
    cross = overlap(state.xhat, state.xhat_prev)
    return (p - 1) / delta * sbar * cross ** (p - 2)


def _finish(state: AmpState, field_: np.ndarray, delta: float, prior: Prior, p: int, damping: float) -> AmpState:
    it = state.iter
    b = field_ - state.xhat_prev @ _onsager_matrix(state, delta, p).T
    if not np.all(np.isfinite(b)):
        raise DivergenceError(f"non-finite message at iteration {it + 1}", it + 1)
    a = overlap(state.xhat, state.xhat) ** (p - 1) / delta
    a = 0.5 * (a + a.T)
    mean, cov = prior.fin(a, b)
    mean = np.asarray(mean, dtype=np.float64).reshape(b.shape)
    cov = _clip_psd(np.asarray(cov, dtype=np.float64).reshape(b.shape + (b.shape[1],)))
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise DivergenceError(f"non-finite estimate at iteration {it + 1}", it + 1)
    if damping:
        mean = (1.0 - damping) * mean + damping * state.xhat
    return AmpState(mean, state.xhat, cov, a, b, it + 1)


def _check(states: list[AmpState], s: SymmetricTensor, delta: float, damping: float) -> None:
    if delta <= 0:
        raise UsageError("delta must be positive")
    if not 0.0 <= damping < 1.0:
        raise UsageError("damping must lie in [0, 1)")
    for st in states:
        if st.n != s.n:
            raise ShapeError(f"state has n={st.n}, tensor has n={s.n}")


def amp_step_many(states: list[AmpState], s: SymmetricTensor, delta: float, prior: Prior,
                  damping: float = 0.0, backend: str | None = None) -> list[AmpState]:
    """One synchronous step for several independent states sharing ``s``.

    The Hadamard structure of the contraction makes columns independent, so
    the states are stacked and the tensor is streamed once.
    """
    _check(states, s, delta, damping)
    if not states:
        return []
    r = states[0].r
    stacked = np.hstack([st.xhat for st in states])
    field_all = contract_leave_one(s, stacked, contraction_prefactor(s.n, s.p), backend=backend)
    return [
        _finish(st, field_all[:, k * r : (k + 1) * r], delta, prior, s.p, damping)
        for k, st in enumerate(states)
    ]


def amp_step(state: AmpState, s: SymmetricTensor, delta: float, prior: Prior, damping: float = 0.0,
             backend: str | None = None) -> AmpState:
    """One AMP iteration: field, Onsager correction, then the prior denoiser."""
    return amp_step_many([state], s, delta, prior, damping, backend)[0]


def amp_run_many(
    s: SymmetricTensor,
    delta: float,
    prior: Prior,
    states: list[AmpState],
    truth: np.ndarray | None = None,
    max_iter: int = 1000,
    tol: float = 1e-8,
    damping: float = 0.0,
    labels: list[str] | None = None,
    backend: str | None = None,
) -> list[AmpResult]:
    """Run several initializations together; each stops at its own convergence."""
    labels = labels or ["custom"] * len(states)
    x0 = None if truth is None else np.asarray(truth, dtype=np.float64).reshape(s.n, -1)
    traj = [[overlap(st.xhat, x0)] if x0 is not None else [] for st in states]
    cur = [st.copy() for st in states]
    done = [False] * len(states)
    conv = [False] * len(states)
    for _ in range(max_iter):
        active = [k for k in range(len(cur)) if not done[k]]
        if not active:
            break
        new = amp_step_many([cur[k] for k in active], s, delta, prior, damping, backend)
        for k, st in zip(active, new):
            change = float(np.sum((st.xhat - cur[k].xhat) ** 2) / s.n)
            cur[k] = st
            if x0 is not None:
                traj[k].append(overlap(st.xhat, x0))
            if change < tol:
                done[k] = conv[k] = True
    out = []
    for k, st in enumerate(cur):
        mse = mse_t = None
        if x0 is not None:
            mse, mse_t = mse_two_ways(x0, st.xhat)
        out.append(AmpResult(st, conv[k], st.iter, traj[k], mse, mse_t, labels[k]))
    return out


def amp_run(
    s: SymmetricTensor,
    delta: float,
    prior: Prior,
    init: str | AmpState = "random",
    seed: int = 0,
    truth: np.ndarray | None = None,
    max_iter: int = 1000,
    tol: float = 1e-8,
    damping: float = 0.0,
    amplitude: float = 1e-3,
    backend: str | None = None,
) -> AmpResult:
    """Iterate until ``(1/N)||xhat^{t+1} - xhat^t||^2 < tol`` or ``max_iter``."""
    if isinstance(init, AmpState):
        st, label = init, "custom"
    else:
        st, label = amp_init(init, prior, seed, n=s.n, truth=truth, amplitude=amplitude), init
    return amp_run_many(s, delta, prior, [st], truth, max_iter, tol, damping, [label], backend)[0]


def run_both_inits(s: SymmetricTensor, delta: float, prior: Prior, truth: np.ndarray, seed: int = 0,
                   max_iter: int = 1000, tol: float = 1e-8, damping: float = 0.0,
                   backend: str | None = None) -> tuple[AmpResult, AmpResult]:
    """Uninformative and informative runs on one instance, sharing tensor passes."""
    states = [amp_init("random", prior, seed, n=s.n), amp_init("informative", prior, seed, n=s.n, truth=truth)]
    res = amp_run_many(s, delta, prior, states, truth, max_iter, tol, damping, ["random", "informative"], backend)
    return res[0], res[1]
