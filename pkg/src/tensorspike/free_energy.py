"""Replica-symmetric potential, its maximization and derived quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NumericError, UnsupportedError, UsageError
from .integrate import GaussHermite, Integrator
from .model import Clusters, Prior
from .state_evolution import _as_overlap, _nodes, _psd_sqrt, hadamard_hat, line_model

TIE_TOL = 1e-12


@dataclass
class FreeEnergyCurve:
    delta: float
    grid: np.ndarray
    phi_grid: np.ndarray
    m_star: float  # state on the line (m for rank one, b for clusters)
    phi_star: float
    candidates: list[tuple[float, float]] = field(default_factory=list)
    M_star: np.ndarray | None = None
    parametrization: str = "m"

    def to_rows(self):
        return [(float(m), float(v)) for m, v in zip(self.grid, self.phi_grid)]


def phi_rs(m, delta: float, p: int, prior: Prior, integ: Integrator | None = None) -> float:
    """``E log Z_X(M^, M^ x0 + M^^{1/2} Z) - (p-1)/(2 p delta) sum M^p``."""
    if delta <= 0:
        raise UsageError("delta must be positive")
    integ = integ or GaussHermite()
    m = _as_overlap(m, prior.r)
    if prior.r == 1:
        if m[0, 0] < 0:
            raise UsageError("scalar overlap must be non-negative")
        return float(line_model(prior, p, integ).phi(m[0, 0], delta))
    mh = hadamard_hat(m, delta, p)
    x0, z, w = _nodes(prior, integ)
    b = x0 @ mh.T + z @ _psd_sqrt(mh).T
    val = float(prior.log_zx(mh, b) @ w) - (p - 1) / (2.0 * p * delta) * float(np.sum(m**p))
    if not math.isfinite(val):
        raise NumericError("non-finite potential")
    return val


def _golden(f, a: float, b: float, tol: float = 1e-10) -> tuple[float, float]:
    """Maximize ``f`` on ``[a, b]`` (bounded Brent, golden fallback)."""
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded", options={"xatol": tol})
    return float(res.x), -float(res.fun)


def maximize_phi_rs(
    delta: float,
    p: int,
    prior: Prior,
    integ: Integrator | None = None,
    grid_points: int | None = None,
) -> FreeEnergyCurve:
    """Global maximizer of the potential on the rank-one or cluster line.

    A dense grid locates the best bracket, bounded Brent refines it, and
    both SE fixed points (eps and informative starts) enter as candidates.
    Near ties (within ``1e-12``) among refined candidates go to the larger
    state.  On the cluster line every stationary point is a fixed point of
    the reduced map, so all of them are candidates and the default grid is
    coarse (101 points).
    """
    if delta <= 0:
        raise UsageError("delta must be positive")
    integ = integ or GaussHermite()
    line = line_model(prior, p, integ)
    cluster = isinstance(prior, Clusters)
    if grid_points is None:
        grid_points = 101 if cluster else 1000
    top = line.hi * (1.0 + 1e-6) if prior.r == 1 else line.hi
    grid = np.linspace(0.0, top, grid_points)
    vals = np.asarray(line.phi(grid, delta), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite potential on the grid")
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    tol = 1e-10 * line.hi
    x_ref, v_ref = _golden(lambda s: float(line.phi(s, delta)), a, b, tol)
    cands = [(x_ref, v_ref)]
    seeds = [line.eps_fixed_point(delta), line.inf_fixed_point(delta)]
    if cluster:
        seeds += line.fixed_points_at(delta)
    for s in seeds:
        s = float(min(max(s, 0.0), top))
        cands.append((s, float(line.phi(s, delta))))
    best = max(v for _, v in cands)
    tied = [c for c in cands if best - c[1] <= TIE_TOL * max(1.0, abs(best))]
    m_star, phi_star = max(tied, key=lambda c: c[0])
    return FreeEnergyCurve(
        delta=delta,
        grid=grid,
        phi_grid=vals,
        m_star=m_star,
        phi_star=phi_star,
        candidates=cands,
        M_star=line.matrix(m_star),
        parametrization="b" if cluster else "m",
    )


def sigma_power_sum(prior: Prior, p: int) -> float:
    """``sum_kl (Sigma_X)_kl^p``."""
    return float(np.sum(prior.moments().sigma_x ** p))


def mutual_information(delta: float, p: int, prior: Prior, integ: Integrator | None = None) -> float:
    """Limit of ``I(X; Y)/N``."""
    sup = maximize_phi_rs(delta, p, prior, integ).phi_star
    return sigma_power_sum(prior, p) / (2.0 * p * delta) - sup


def mmse(delta: float, p: int, prior: Prior, integ: Integrator | None = None) -> float:
    """``Tr[Sigma_X - M*]``."""
    curve = maximize_phi_rs(delta, p, prior, integ)
    return float(np.trace(prior.moments().sigma_x - curve.M_star))


def t_mmse(delta: float, p: int, prior: Prior, integ: Integrator | None = None) -> float:
    """Tensor MMSE ``Sigma_X^p - m*^p`` (rank one only)."""
    if prior.r != 1:
        raise UnsupportedError("the tensor MMSE is defined for rank-one priors")
    sx = float(prior.moments().sigma_x[0, 0])
    m = maximize_phi_rs(delta, p, prior, integ).m_star
    return sx**p - m**p


def free_energy_rs(lam: float, p: int, prior: Prior, integ: Integrator | None = None) -> float:
    """``sup phi`` as a function of ``lambda = 1/delta``."""
    return maximize_phi_rs(1.0 / lam, p, prior, integ).phi_star


@dataclass
class ImmseReport:
    lambdas: np.ndarray
    derivative_fd: np.ndarray
    derivative_theory: np.ndarray
    rel_violation: np.ndarray
    second_differences: np.ndarray
    max_rel_violation: float
    min_second_difference: float
    kinks: list[float]
    violations: list[str] = field(default_factory=list)


def imms_consistency(
    delta_grid,
    p: int,
    prior: Prior,
    integ: Integrator | None = None,
    rel_step: float = 1e-4,
    rel_tol: float = 1e-3,
    convexity_tol: float = 1e-6,
    exclude: tuple[float, ...] = (),
    exclude_width: float = 0.02,
) -> ImmseReport:
    """Check ``d sup phi / d lambda = m*^p/(2p)`` and convexity in ``lambda``.

    The derivative identity is the rank-one I-MMSE relation, written with
    ``Sigma_X^p - T-MMSE = m*^p``.  Grid points within ``exclude_width``
    (relative) of any value in ``exclude`` skip the derivative check; a
    jump between neighbouring theory derivatives is reported as a kink.
    """
    deltas = np.sort(np.asarray(delta_grid, dtype=np.float64))
    if deltas.size < 20:
        raise UsageError("need at least 20 grid points")
    if prior.r != 1:
        raise UnsupportedError("the I-MMSE check is implemented for rank-one priors")
    lams = np.sort(1.0 / deltas)
    fd = np.empty_like(lams)
    th = np.empty_like(lams)
    F = np.empty_like(lams)
    for k, lam in enumerate(lams):
        h = rel_step * lam
        fp = free_energy_rs(lam + h, p, prior, integ)
        fm = free_energy_rs(lam - h, p, prior, integ)
        fd[k] = (fp - fm) / (2 * h)
        cur = maximize_phi_rs(1.0 / lam, p, prior, integ)
        F[k] = cur.phi_star
        th[k] = cur.m_star**p / (2.0 * p)
    rel = np.abs(fd - th) / np.maximum(np.abs(th), 1e-12)
    viol = []
    mask = np.ones_like(lams, dtype=bool)
    for d0 in exclude:
        mask &= np.abs(1.0 / lams - d0) > exclude_width * d0
    for lam, rv, ok in zip(lams, rel, mask):
        if ok and rv > rel_tol:
            viol.append(f"derivative mismatch {rv:.2e} at lambda={lam:.6g}")
    # second differences on a non-uniform grid, normalized by spacing
    sd = np.empty(max(lams.size - 2, 0))
    for k in range(1, lams.size - 1):
        h1, h2 = lams[k] - lams[k - 1], lams[k + 1] - lams[k]
        sd[k - 1] = 2.0 * (h1 * F[k + 1] - (h1 + h2) * F[k] + h2 * F[k - 1]) / (h1 * h2 * (h1 + h2))
    scale = np.maximum(np.abs(F[1:-1]), 1.0)
    for lam, v, sc in zip(lams[1:-1], sd, scale):
        if v < -convexity_tol * sc:
            viol.append(f"convexity violated ({v:.2e}) at lambda={lam:.6g}")
    jumps = np.abs(np.diff(th))
    moving = jumps[jumps > 1e-12]
    # flat stretches (m* = 0) would drag a plain median to zero
    typical = np.median(moving) if moving.size else 0.0
    kinks = [float(1.0 / np.sqrt(lams[k] * lams[k + 1])) for k in range(jumps.size) if jumps[k] > 5 * typical + 1e-9]
    return ImmseReport(
        lambdas=lams,
        derivative_fd=fd,
        derivative_theory=th,
        rel_violation=np.where(mask, rel, np.nan),
        second_differences=sd,
        max_rel_violation=float(np.nanmax(np.where(mask, rel, np.nan))) if mask.any() else float("nan"),
        min_second_difference=float(sd.min()) if sd.size else float("nan"),
        kinks=kinks,
        violations=viol,
    )
