"""State evolution for the overlap matrix and its scalar reductions.

Besides the general ``r x r`` recursion this module provides two
one-parameter "line models" used by the free-energy and phase modules:

* :class:`ScalarLine` for rank-one priors, state ``m`` (a scalar overlap);
* :class:`ClusterLine` for the clusters prior restricted to the family
  ``M(b) = (b/r) I + ((1-b)/r^2) J``.

Both expose ``step``, ``phi`` and a parametric description of all fixed
points, ``t -> (state(t), delta(t))``, whose local extrema in ``delta`` are
the spinodals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import NotApplicableError, NumericError, UsageError
from .integrate import GaussHermite, Integrator, MonteCarlo, gaussian_points, is_mc
from .model import Clusters, Gaussian, Prior, ScalarPrior

# ---------------------------------------------------------------------------
# types


@dataclass
class SeState:
    m: np.ndarray
    m_hat: np.ndarray
    iter: int = 0


@dataclass
class SeFixedPoint:
    m_star: np.ndarray
    init_used: str
    mse: float
    iterations: int
    converged: bool
    trajectory: list = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# general matrix recursion


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def hadamard_hat(m: np.ndarray, delta: float, p: int) -> np.ndarray:
    """``M^{o(p-1)} / delta``."""
    return np.asarray(m, dtype=np.float64) ** (p - 1) / delta


@lru_cache(maxsize=64)
def _nodes(prior: Prior, integ: Integrator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint nodes ``(x0, z, w)`` for expectations over ``x0 ~ P_X, Z ~ N(0, I_r)``."""
    r = prior.r
    sup = prior.support()
    if sup is not None:
        atoms, aw = sup
        z, zw = gaussian_points(integ, r, purpose=1)
        keep = aw > 0
        atoms, aw = atoms[keep], aw[keep]
        x0 = np.repeat(atoms, z.shape[0], axis=0)
        zz = np.tile(z, (atoms.shape[0], 1))
        w = np.outer(aw, zw).ravel()
    elif isinstance(prior, Gaussian):
        pts, w = gaussian_points(integ, 2, purpose=2)
        x0 = prior.mu + pts[:, :1]
        zz = pts[:, 1:]
    else:  # pragma: no cover - every catalog prior is handled above
        raise NotApplicableError(f"no quadrature rule for {prior!r}")
    for a in (x0, zz, w):
        a.flags.writeable = False
    return x0, zz, w


def _as_overlap(m, r: int) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.shape != (r, r):
        raise UsageError(f"overlap must be {r}x{r}, got {arr.shape}")
    return arr


def se_step(m, delta: float, p: int, prior: Prior, integ: Integrator | None = None) -> np.ndarray:
    """One step ``M -> E[f_in(M^, M^ x0 + M^^{1/2} Z) x0^T]``."""
    if delta <= 0:
        raise UsageError("delta must be positive")
    integ = integ or _default_integ(prior)
    m = _as_overlap(m, prior.r)
    mh = hadamard_hat(m, delta, p)
    root = _psd_sqrt(mh)
    x0, z, w = _nodes(prior, integ)
    b = x0 @ mh.T + z @ root.T
    mean, _ = prior.fin(mh, b)
    out = (mean * w[:, None]).T @ x0
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite value in state evolution step")
    return (out + out.T) / 2.0


def se_gaussian_step(m: float, delta: float, p: int, mu: float) -> float:
    """Closed-form scalar update for the ``N(mu, 1)`` prior."""
    mp = m ** (p - 1)
    return (delta * mu**2 + mp * (1.0 + mu**2)) / (delta + mp)


def _default_integ(prior: Prior) -> Integrator:
    return GaussHermite() if prior.r == 1 else MonteCarlo()


def eps_init(prior: Prior) -> np.ndarray:
    mo = prior.moments()
    return np.outer(mo.mean, mo.mean) + 1e-8 * mo.sigma_x


def mse_from_overlap(sigma_x, m) -> float:
    """``Tr[Sigma_X - M]``."""
    sx = np.atleast_2d(np.asarray(sigma_x, dtype=np.float64))
    mm = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if sx.shape != mm.shape:
        raise UsageError("sigma_x and m must have the same shape")
    return float(np.trace(sx - mm))


def se_fixed_point(
    delta: float,
    p: int,
    prior: Prior,
    init: str = "eps",
    integ: Integrator | None = None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    record: bool = False,
    ansatz: bool = True,
) -> SeFixedPoint:
    """Iterate the recursion from the eps or informative initialization.

    For the clusters prior the iteration runs on the ``b`` line by default
    (``ansatz=True``); pass ``ansatz=False`` for the full matrix recursion.
    """
    if init not in ("eps", "informative"):
        raise UsageError("init must be 'eps' or 'informative'")
    integ = integ or _default_integ(prior)
    sx = prior.moments().sigma_x
    if isinstance(prior, Clusters) and ansatz:
        line = line_model(prior, p, integ)
        b = 1e-8 if init == "eps" else 1.0
        traj = [line.matrix(b)] if record else []
        conv = False
        it = 0
        for it in range(1, max_iter + 1):
            nb = float(line.step(b, delta))
            if record:
                traj.append(line.matrix(nb))
            done = abs(nb - b) * max(line.d_scale, 1e-300) < tol
            b = nb
            if done:
                conv = True
                break
        mat = line.matrix(b)
        return SeFixedPoint(mat, init, mse_from_overlap(sx, mat), it, conv, traj)

    m = eps_init(prior) if init == "eps" else sx.copy()
    traj = [m.copy()] if record else []
    conv = False
    it = 0
    for it in range(1, max_iter + 1):
        nm = se_step(m, delta, p, prior, integ)
        if record:
            traj.append(nm.copy())
        diff = np.max(np.abs(nm - m))
        m = nm
        if diff < tol:
            conv = True
            break
    return SeFixedPoint(m, init, mse_from_overlap(sx, m), it, conv, traj)


@dataclass(frozen=True)
class LinearizedGrowth:
    p: int
    radius: float
    matrix: np.ndarray | None
    stable_for_all_delta: bool


def linearized_growth(prior: Prior, delta: float, p: int) -> LinearizedGrowth:
    """Linearization of the recursion around ``M = 0`` for zero-mean priors.

    For ``p = 2`` the map ``M -> Sigma_X M Sigma_X / delta`` acting on
    symmetric matrices has spectral radius ``lambda_max(Sigma_X)^2 / delta``.
    For ``p >= 3`` the linear term vanishes.
    """
    mo = prior.moments()
    if np.any(np.abs(mo.mean) > 1e-12):
        raise NotApplicableError("linearization around M = 0 needs a zero-mean prior")
    if p >= 3:
        return LinearizedGrowth(p, 0.0, None, True)
    sx = mo.sigma_x
    r = sx.shape[0]
    # matrix of M -> sx M sx / delta in the vec basis
    op = np.kron(sx, sx) / delta
    lam = np.linalg.eigvalsh(sx)
    radius = float(np.max(np.abs(lam)) ** 2 / delta)
    return LinearizedGrowth(p, radius, op.reshape(r * r, r * r), False)


# ---------------------------------------------------------------------------
# line models


FLAT_LOG_STEP = 1e-9
EXTREMUM_REL = 1e-8


def _prune_extrema(ext: list) -> list:
    """Drop adjacent min/max pairs whose deltas agree to ``EXTREMUM_REL``."""
    out: list = []
    for e in ext:
        if out and out[-1][3] != e[3] and abs(math.log(out[-1][2] / e[2])) < EXTREMUM_REL:
            out.pop()
            continue
        out.append(e)
    return out


class LineModel:
    """Common interface of the one-parameter reductions."""

    p: int
    lo: float  # state at delta = infinity
    hi: float  # perfect-recovery state
    trivial_is_fixed: bool
    d_scale: float = 1.0  # converts a state increment into an overlap-trace increment
    t_range: tuple[float, float] = (1e-6, 1e12)
    curve_points: int = 4000

    def step(self, s, delta): ...
    def phi(self, s, delta): ...
    def curve(self, t) -> tuple[np.ndarray, np.ndarray]: ...
    def trace(self, s): ...
    def matrix(self, s) -> np.ndarray: ...
    def mse(self, s) -> float: ...

    # -- fixed points ------------------------------------------------------

    @property
    def state_tol(self) -> float:
        return 1e-13 * self.hi

    def iterate(self, s0: float, delta: float, tol: float | None = None, max_iter: int = 20_000):
        """Plain fixed-point iteration; returns ``(s, iterations, converged)``."""
        tol = self.state_tol if tol is None else tol
        s = float(s0)
        for it in range(1, max_iter + 1):
            ns = float(self.step(s, delta))
            if not math.isfinite(ns):
                raise NumericError("non-finite state evolution iterate")
            if abs(ns - s) <= tol:
                return ns, it, True
            s = ns
        return s, max_iter, False

    def fixed_point(self, s0: float, delta: float, max_iter: int = 5_000) -> float:
        """Limit of the iteration from ``s0``.

        Iterates first; if that stalls (critical slowing down near a
        spinodal or a continuous transition) the limit is read off the
        parametric fixed-point set: the nearest fixed point in the direction
        of motion, which is where a monotone scalar map must go.
        """
        s, _, ok = self.iterate(s0, delta, max_iter=min(50, max_iter))
        if ok:
            return s
        move = float(self.step(s, delta)) - s
        fps = self.fixed_points_at(delta)
        if move >= 0:
            ahead = [f for f in fps if f >= s - self.state_tol]
            if ahead:
                return min(ahead)
        else:
            behind = [f for f in fps if f <= s + self.state_tol]
            if behind:
                return max(behind)
        # target outside the tabulated curve: keep iterating
        s, _, _ = self.iterate(s, delta, max_iter=max_iter)
        return s

    def eps_fixed_point(self, delta: float) -> float:
        return self.fixed_point(self.eps_start(), delta)

    def eps_start(self) -> float:
        return self.lo + 1e-8 * self.hi

    def inf_fixed_point(self, delta: float) -> float:
        return self.fixed_point(self.hi, delta)

    # -- parametric description --------------------------------------------

    def _curve_cache(self):
        if getattr(self, "_cc", None) is None:
            t = np.geomspace(self.t_range[0], self.t_range[1], self.curve_points)
            s, d = self.curve(t)
            ld = np.log(d)
            diff = np.diff(ld)
            # steps below FLAT_LOG_STEP are treated as flat (quadrature noise)
            sgn = np.sign(np.where(np.abs(diff) < FLAT_LOG_STEP, 0.0, diff))
            # indices of sign flips, skipping flat stretches
            nz = np.nonzero(sgn)[0]
            ext = []
            for a, b in zip(nz, nz[1:]):
                if sgn[a] != sgn[b]:
                    kind = "max" if sgn[a] > 0 else "min"
                    ext.append(self._refine_extremum(t[a], t[b + 1], kind))
            ext = _prune_extrema(ext)
            self._cc = (t, s, d, ext)
        return self._cc

    def _refine_extremum(self, t_lo: float, t_hi: float, kind: str):
        sign = -1.0 if kind == "max" else 1.0

        def f(u):
            _, d = self.curve(np.array([math.exp(u)]))
            return sign * math.log(d[0])

        res = minimize_scalar(f, bounds=(math.log(t_lo), math.log(t_hi)), method="bounded", options={"xatol": 1e-12})
        t = math.exp(res.x)
        s, d = self.curve(np.array([t]))
        return (t, float(s[0]), float(d[0]), kind)

    def spinodals(self) -> list[tuple[float, float, float, str]]:
        """Local extrema ``(t, state, delta, 'min'|'max')`` of the fixed-point curve."""
        return list(self._curve_cache()[3])

    def delta_limit_small_t(self) -> float:
        """``delta(t)`` at the low end of the parametric range."""
        _, d = self.curve(np.array([self.t_range[0]]))
        return float(d[0])

    def fixed_points_at(self, delta: float) -> list[float]:
        """All fixed points at ``delta``, sorted, including the trivial one."""
        t, _, d, ext = self._curve_cache()
        knots = [t[0]] + [e[0] for e in ext] + [t[-1]]
        target = math.log(delta)
        out = []

        def g(u):
            _, dd = self.curve(np.array([math.exp(u)]))
            return math.log(dd[0]) - target

        for a, b in zip(knots, knots[1:]):
            ga, gb = g(math.log(a)), g(math.log(b))
            if ga == 0.0:
                u = math.log(a)
            elif ga * gb > 0:
                continue
            else:
                u = brentq(g, math.log(a), math.log(b), xtol=1e-14, rtol=1e-14)
            s, _ = self.curve(np.array([math.exp(u)]))
            out.append(float(s[0]))
        if self.trivial_is_fixed:
            out.append(self.lo)
        return sorted(set(out))


class ScalarLine(LineModel):
    """Rank-one prior: state ``m``, parameter ``t = m_hat``."""

    def __init__(self, prior: ScalarPrior, p: int, integ: Integrator):
        if prior.r != 1:
            raise UsageError("ScalarLine needs a rank-one prior")
        self.prior, self.p, self.integ = prior, int(p), integ
        mo = prior.moments()
        self.mean = float(mo.mean[0])
        self.sx = float(mo.sigma_x[0, 0])
        self.lo = self.mean**2
        self.hi = self.sx
        self.trivial_is_fixed = self.mean == 0.0
        self.t_range = (1e-6 / self.sx, 1e12 / self.sx)
        x0, z, w = _nodes(prior, integ)
        self._x0, self._z, self._w = x0[:, 0], z[:, 0], w
        self._cc = None
        # the Gaussian prior has exact expectations; skip quadrature
        self._gauss_mu = prior.mu if isinstance(prior, Gaussian) else None

    def _batch(self, mh: np.ndarray, fn) -> np.ndarray:
        mh = np.atleast_1d(np.asarray(mh, dtype=np.float64))
        flat = mh.ravel()
        out = np.empty_like(flat)
        step = max(1, 2_000_000 // self._w.size)
        for i in range(0, flat.size, step):
            h = flat[i : i + step, None]
            b = h * self._x0 + np.sqrt(np.maximum(h, 0.0)) * self._z
            out[i : i + step] = fn(h, b) @ self._w
        return out.reshape(mh.shape)

    def overlap_map(self, mh):
        """``E[f_in(mh, mh x0 + sqrt(mh) Z) x0]``."""
        if self._gauss_mu is not None:
            h = np.asarray(mh, dtype=np.float64)
            mu2 = self._gauss_mu**2
            return (mu2 + h * (1.0 + mu2)) / (1.0 + h)
        return self._batch(mh, lambda h, b: self.prior.fin1(h, b)[0] * self._x0)

    def elogz(self, mh):
        if self._gauss_mu is not None:
            h = np.asarray(mh, dtype=np.float64)
            return 0.5 * ((self._gauss_mu**2 + 1.0) * h - np.log1p(h))
        return self._batch(mh, lambda h, b: self.prior.log_z1(h, b))

    def step(self, s, delta):
        s = np.asarray(s, dtype=np.float64)
        r = np.asarray(self.overlap_map(s ** (self.p - 1) / delta))
        return r.reshape(s.shape) if s.ndim else float(r.reshape(-1)[0])

    def phi(self, s, delta):
        s = np.asarray(s, dtype=np.float64)
        mh = s ** (self.p - 1) / delta
        v = np.asarray(self.elogz(mh) - (self.p - 1) / (2.0 * self.p * delta) * s**self.p)
        return v.reshape(s.shape) if s.ndim else float(v.reshape(-1)[0])

    def curve(self, t):
        t = np.asarray(t, dtype=np.float64)
        s = self.overlap_map(t)
        return s, s ** (self.p - 1) / t

    def trace(self, s):
        return s

    def matrix(self, s):
        return np.array([[float(s)]])

    def mse(self, s):
        return self.sx - float(s)


def _pow_diff(d, o, gap, n: int):
    """``d**n - o**n`` given ``gap = d - o``, free of cancellation."""
    acc = 0.0
    for k in range(n):
        acc = acc + d**k * o ** (n - 1 - k)
    return gap * acc


class ClusterLine(LineModel):
    """Clusters prior on the ``b`` line; parameter ``t = x``."""

    lo = 0.0
    hi = 1.0
    trivial_is_fixed = True
    t_range = (1e-9, 1e8)

    def __init__(self, r: int, p: int, integ: Integrator, max_points: int = 2_100_000):
        self.r, self.p, self.integ = int(r), int(p), integ
        self.d_scale = 1.0 - 1.0 / self.r
        self._cc = None
        k = self.r - 1
        if isinstance(integ, GaussHermite):
            nodes = integ.nodes
            while nodes**k > max_points:
                nodes -= 2
            pts, w = gaussian_points(GaussHermite(nodes), k, purpose=3)
            chol = np.linalg.cholesky(np.eye(k) + np.ones((k, k)))
            self._d = pts @ chol.T
        else:
            z, w = gaussian_points(integ, self.r, purpose=3)
            self._d = z[:, 1:] - z[:, :1]
        self._w = w

    # alpha -> expectations with delta_k = alpha - sqrt(alpha) D_k, k >= 2
    def _neg_delta(self, alpha: float) -> np.ndarray:
        return math.sqrt(alpha) * self._d - alpha

    def _softmax1_excess(self, alpha: float) -> np.ndarray:
        """Per-node ``softmax_1 - 1/r`` without cancellation."""
        u = self._neg_delta(alpha)  # log of e^{u_k - u_1}
        top = np.max(u, axis=1)
        safe = top < 30.0
        out = np.empty(u.shape[0])
        if np.any(safe):
            us = u[safe]
            out[safe] = -np.sum(np.expm1(us), axis=1) / (self.r * (1.0 + np.sum(np.exp(us), axis=1)))
        if np.any(~safe):
            ub = u[~safe]
            mx = top[~safe][:, None]
            e = np.exp(ub - mx)
            em = np.exp(-mx[:, 0])
            out[~safe] = -np.sum(e - em[:, None], axis=1) / (self.r * (em + np.sum(e, axis=1)))
        return out

    def _log_tail(self, alpha: float) -> np.ndarray:
        """Per-node ``log((1 + sum_k e^{u_k - u_1}) / r)`` without cancellation."""
        u = self._neg_delta(alpha)
        top = np.max(u, axis=1)
        safe = top < 30.0
        out = np.empty(u.shape[0])
        if np.any(safe):
            out[safe] = np.log1p(np.sum(np.expm1(u[safe]), axis=1) / self.r)
        if np.any(~safe):
            ub = u[~safe]
            mx = top[~safe][:, None]
            out[~safe] = mx[:, 0] + np.log(np.exp(-mx[:, 0]) + np.sum(np.exp(ub - mx), axis=1)) - math.log(self.r)
        return out

    def mr(self, x):
        """Cluster overlap function ``(r q(x/r) - 1)/(r - 1)``."""
        x = np.asarray(x, dtype=np.float64)
        flat = np.atleast_1d(x).ravel()
        out = np.array([self.r / (self.r - 1) * (self._softmax1_excess(v / self.r) @ self._w) if v > 0 else 0.0 for v in flat])
        out = out.reshape(np.shape(x))
        return out if out.ndim else float(out)

    def mr_with_error(self, x: float) -> tuple[float, float]:
        if x <= 0:
            return 0.0, 0.0
        vals = self.r / (self.r - 1) * self._softmax1_excess(x / self.r)
        est = float(vals @ self._w)
        err = float(vals.std(ddof=1) / math.sqrt(vals.size)) if is_mc(self.integ) else 0.0
        return est, err

    def _g_minus(self, alpha: float) -> float:
        """``E log sum_k exp(alpha e_1 + sqrt(alpha) Z)_k - log r``."""
        if alpha <= 0:
            return 0.0
        return alpha + float(self._log_tail(alpha) @ self._w)

    def parts(self, b, delta):
        r, p = self.r, self.p
        d = b / r + (1.0 - b) / r**2
        o = (1.0 - b) / r**2
        alpha = _pow_diff(d, o, b / r, p - 1) / delta
        beta = o ** (p - 1) / delta
        return d, o, alpha, beta

    def step(self, s, delta):
        s = np.asarray(s, dtype=np.float64)
        _, _, alpha, _ = self.parts(s, delta)
        return self.mr(self.r * alpha)

    def phi(self, s, delta):
        sv = np.atleast_1d(np.asarray(s, dtype=np.float64))
        r, p = self.r, self.p
        out = []
        for b in sv.ravel():
            d, o, alpha, beta = self.parts(b, delta)
            val = self._g_minus(alpha) + (beta - alpha) / 2.0
            val -= (p - 1) / (2.0 * p * delta) * (r * d**p + r * (r - 1) * o**p)
            out.append(val)
        res = np.array(out).reshape(np.shape(s))
        return res if res.ndim else float(res)

    def curve(self, t):
        t = np.asarray(t, dtype=np.float64)
        b = np.atleast_1d(self.mr(t)).reshape(t.shape)
        r, p = self.r, self.p
        d = b / r + (1.0 - b) / r**2
        o = (1.0 - b) / r**2
        return b, r * _pow_diff(d, o, b / r, p - 1) / t

    def trace(self, s):
        return s + (1.0 - s) / self.r

    def matrix(self, s):
        r = self.r
        return (s / r) * np.eye(r) + ((1.0 - s) / r**2) * np.ones((r, r))

    def mse(self, s):
        return (1.0 - float(s)) * (1.0 - 1.0 / self.r)

    def eps_start(self) -> float:
        return 1e-8


@lru_cache(maxsize=64)
def line_model(prior: Prior, p: int, integ: Integrator | None = None) -> LineModel:
    """Cached line model for ``prior`` (rank one or clusters)."""
    integ = integ or GaussHermite()
    if isinstance(prior, Clusters):
        return ClusterLine(prior.n_clusters, p, integ)
    if prior.r == 1:
        return ScalarLine(prior, p, integ)
    raise NotApplicableError(f"no one-parameter reduction for {prior!r}")


# ---------------------------------------------------------------------------
# cluster helpers (public)

_DEFAULT_MC = MonteCarlo()


def cluster_mr(x: float, r: int, mc: Integrator | None = None) -> float:
    """Cluster overlap function ``M_r(x)`` (Monte Carlo by default)."""
    if x < 0:
        raise UsageError("x must be non-negative")
    if r < 2:
        raise UsageError("r must be >= 2")
    line = line_model(Clusters(r), 2, mc or _DEFAULT_MC)
    val = line.mr(float(x))
    if not math.isfinite(val):
        raise NumericError("non-finite cluster overlap estimate")
    return float(val)


def cluster_mr_with_error(x: float, r: int, mc: Integrator | None = None) -> tuple[float, float]:
    """``M_r(x)`` and its Monte Carlo standard error (0 for quadrature)."""
    return line_model(Clusters(r), 2, mc or _DEFAULT_MC).mr_with_error(float(x))


def cluster_se_step(b: float, delta: float, p: int, r: int, mc: Integrator | None = None) -> float:
    """One step of the recursion on the ``b`` line."""
    if not -1e-12 <= b <= 1 + 1e-12:
        raise UsageError("b must lie in [0, 1]")
    return float(line_model(Clusters(r), p, mc or _DEFAULT_MC).step(b, delta))


@dataclass(frozen=True)
class ParametricPoint:
    x: float
    m: float
    delta: float
    stable: bool | None  # None: derivative sign not resolved


def cluster_parametric_curve(x: float, p: int, r: int, mc: Integrator | None = None) -> ParametricPoint:
    """Fixed point ``(m(x), delta(x))`` and its stability from ``sign(d delta/dx)``."""
    if x <= 0:
        raise UsageError("x must be positive")
    integ = mc or _DEFAULT_MC
    line = line_model(Clusters(r), p, integ)
    m, d = line.curve(np.array([x]))
    h = 1e-3 * x
    _, dp = line.curve(np.array([x + h]))
    _, dm = line.curve(np.array([x - h]))
    slope = (dp[0] - dm[0]) / (2 * h)
    stable: bool | None = bool(slope < 0)
    if is_mc(integ):
        # noise of the difference, from the estimator's standard error
        _, err = line.mr_with_error(x)
        scale = abs(d[0]) * (line.p - 1) * err / max(float(m[0]), 1e-300)
        if abs(slope) * 2 * h < 3 * scale * math.sqrt(2):
            stable = None
    elif abs(slope) * 2 * h < 1e-13 * abs(d[0]):
        stable = None
    return ParametricPoint(float(x), float(m[0]), float(d[0]), stable)


def cluster_slope_at_zero(p: int, r: int) -> float:
    """Closed-form ``d delta / dx`` at ``x = 0``."""
    return (p - 1) / (2.0 * r ** (2 * p)) * (-2 * p - r + p * r)


def se_trajectory(delta: float, p: int, prior: Prior, init: str = "eps", integ: Integrator | None = None,
                  tol: float = 1e-10, max_iter: int = 10_000) -> SeFixedPoint:
    """:func:`se_fixed_point` with the full trajectory recorded."""
    return se_fixed_point(delta, p, prior, init, integ, tol, max_iter, record=True)


@dataclass(frozen=True)
class SeBranches:
    delta: float
    stable_low: float
    stable_high: float
    unstable: float | None  # None outside the bistable window


def se_branches(delta: float, p: int, prior: Prior, integ: Integrator | None = None) -> SeBranches:
    """Stable overlaps from both initializations and the unstable one between them.

    Rank one only.  The unstable point is a bisection root of
    ``m -> se_step(m) - m`` strictly inside the two stable values.
    """
    if prior.r != 1:
        raise NotApplicableError("branch extraction is implemented for rank-one priors")
    line = line_model(prior, p, integ)
    lo = float(line.trace(line.eps_fixed_point(delta)))
    hi = float(line.trace(line.inf_fixed_point(delta)))
    gap = hi - lo
    if gap <= 1e-6 * float(prior.moments().sigma_x[0, 0]):
        return SeBranches(delta, lo, hi, None)
    integ = integ or _default_integ(prior)

    def g(m):
        return float(se_step(m, delta, p, prior, integ)[0, 0]) - m

    a, b = lo + 1e-6 * gap, hi - 1e-6 * gap
    if g(a) * g(b) > 0:
        return SeBranches(delta, lo, hi, None)
    return SeBranches(delta, lo, hi, float(brentq(g, a, b, xtol=1e-12)))
