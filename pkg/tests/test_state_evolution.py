import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorspike.errors import NotApplicableError, UsageError
from tensorspike.integrate import GaussHermite, MonteCarlo
from tensorspike.model import Bernoulli, Clusters, Gaussian, Rademacher
from tensorspike.state_evolution import (
    cluster_mr,
    cluster_mr_with_error,
    cluster_parametric_curve,
    cluster_se_step,
    cluster_slope_at_zero,
    eps_init,
    line_model,
    linearized_growth,
    mse_from_overlap,
    se_branches,
    se_fixed_point,
    se_gaussian_step,
    se_step,
    se_trajectory,
)

SCALAR = [Gaussian(0.0), Gaussian(0.2), Rademacher(), Bernoulli(0.1), Bernoulli(0.4)]


def test_zero_mean_trivial_fixed_point():
    for prior in (Gaussian(0.0), Rademacher()):
        assert se_step(0.0, 0.3, 3, prior)[0, 0] == pytest.approx(0.0, abs=1e-14)
    out = se_step(np.zeros((3, 3)) + 1 / 9, 0.1, 3, Clusters(3), MonteCarlo(20_000, 1))
    np.testing.assert_allclose(out, np.full((3, 3), 1 / 9), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(mu=st.floats(0.0, 0.6), frac=st.floats(0.0, 1.0), logd=st.floats(-3.0, 1.0), p=st.integers(2, 5))
def test_gaussian_quadrature_matches_closed_form(mu, frac, logd, p):
    prior = Gaussian(mu)
    m = frac * (1 + mu**2)
    d = 10.0**logd
    got = se_step(m, d, p, prior, GaussHermite(127))[0, 0]
    assert got == pytest.approx(se_gaussian_step(m, d, p, mu), abs=1e-10)


def test_gaussian_step_examples():
    assert se_gaussian_step(0.0, 0.7, 3, 0.2) == pytest.approx(0.04)
    m, d = 0.5, 0.3
    assert se_gaussian_step(m, d, 3, 0.0) == pytest.approx(m**2 / (d + m**2))
    assert se_gaussian_step(0.9, 1e12, 3, 0.2) == pytest.approx(0.04)


def test_large_noise_gives_mean_square():
    for prior in (Bernoulli(0.3), Gaussian(0.4)):
        mean = prior.moments().mean[0]
        assert se_step(0.5 * prior.moments().sigma_x, 1e9, 3, prior)[0, 0] == pytest.approx(mean**2, abs=1e-8)


@pytest.mark.parametrize("prior", [Rademacher(), Bernoulli(0.2), Gaussian(0.3)])
def test_gauss_hermite_vs_monte_carlo(prior):
    m, d = 0.4 * prior.moments().sigma_x[0, 0], 0.2
    gh = se_step(m, d, 3, prior, GaussHermite(127))[0, 0]
    vals = [se_step(m, d, 3, prior, MonteCarlo(200_000, s))[0, 0] for s in range(6)]
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - gh) < 3 * se + 1e-12


@pytest.mark.parametrize("prior", SCALAR)
def test_monotone_step(prior):
    sx = prior.moments().sigma_x[0, 0]
    grid = np.linspace(0, sx, 40)
    vals = [se_step(m, 0.15, 3, prior)[0, 0] for m in grid]
    assert np.all(np.diff(vals) >= -1e-12)


@pytest.mark.parametrize("prior", SCALAR)
@pytest.mark.parametrize("delta", [0.05, 0.2, 0.6])
def test_informative_dominates_eps(prior, delta):
    d = delta * (prior.moments().sigma_x[0, 0] ** 2)
    lo = se_fixed_point(d, 3, prior, "eps").m_star
    hi = se_fixed_point(d, 3, prior, "informative").m_star
    assert np.trace(hi) >= np.trace(lo) - 1e-8


def test_fixed_point_examples():
    fp = se_fixed_point(0.4, 3, Gaussian(0.0), "eps")
    assert fp.m_star[0, 0] == pytest.approx(0.0, abs=1e-7) and fp.mse == pytest.approx(1.0, abs=1e-7)
    fp = se_fixed_point(0.01, 3, Gaussian(0.2), "eps")
    assert fp.m_star[0, 0] > 0.9 * 1.04 and fp.converged
    fp = se_fixed_point(2.0, 2, Rademacher(), "eps")
    assert fp.m_star[0, 0] == pytest.approx(0.0, abs=1e-7)
    np.testing.assert_allclose(eps_init(Gaussian(0.2)), [[0.04 + 1.04e-8]])


def test_trajectory_recorded():
    fp = se_trajectory(0.1, 3, Rademacher(), "informative")
    assert len(fp.trajectory) == fp.iterations + 1
    assert fp.trajectory[0][0, 0] == 1.0
    with pytest.raises(UsageError):
        se_fixed_point(0.1, 3, Rademacher(), "zero")


def test_linearized_growth():
    g = linearized_growth(Rademacher(), 0.5, 2)
    assert g.radius == pytest.approx(2.0)
    assert linearized_growth(Gaussian(0.0), 4.0, 2).radius == pytest.approx(0.25)
    g3 = linearized_growth(Rademacher(), 0.5, 3)
    assert g3.radius == 0.0 and g3.stable_for_all_delta
    with pytest.raises(NotApplicableError):
        linearized_growth(Gaussian(0.2), 0.5, 2)


def test_mse_from_overlap():
    assert mse_from_overlap([[1.0]], [[1.0]]) == 0.0
    assert mse_from_overlap([[1.0]], [[0.0]]) == 1.0
    assert mse_from_overlap([[1.04]], [[0.04]]) == pytest.approx(1.0)


# -- clusters ----------------------------------------------------------------


def test_cluster_mr_limits():
    assert cluster_mr(0.0, 3) == 0.0
    assert cluster_mr(400.0, 3) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("r", [2, 3, 4])
@pytest.mark.parametrize("x", [0.005, 0.01, 0.02])
def test_cluster_mr_taylor(r, x):
    v, err = cluster_mr_with_error(x, r)
    taylor = x / r**2 + x**2 * (r - 4) / (2 * r**4)
    assert abs(v - taylor) <= 3 * err


def test_cluster_step_examples():
    assert cluster_se_step(0.0, 0.05, 3, 3) == 0.0
    b, p, r, d = 1e-4, 3, 3, 0.01
    approx = b * (p - 1) / (d * r ** (2 * p - 2))
    assert cluster_se_step(b, d, p, r, GaussHermite()) == pytest.approx(approx, rel=0.05)


def test_cluster_ansatz_closure():
    r, p, d = 3, 3, 0.03
    prior = Clusters(r)
    line = line_model(prior, p)
    for b in (0.2, 0.6):
        outs = np.array([se_step(line.matrix(b), d, p, prior, MonteCarlo(100_000, s)) for s in range(12)])
        mean = outs.mean(axis=0)
        err = outs.std(axis=0, ddof=1) / math.sqrt(len(outs)) + 1e-12
        bs = np.array([cluster_se_step(b, d, p, r, MonteCarlo(100_000, 100 + s)) for s in range(12)])
        target = line.matrix(bs.mean())
        terr = np.abs(line.matrix(bs.mean() + bs.std(ddof=1) / math.sqrt(bs.size)) - target)
        assert np.all(np.abs(mean - target) <= 3 * np.hypot(err, terr))
        diag = np.diag(mean)
        off = mean[~np.eye(r, dtype=bool)]
        assert np.ptp(diag) <= 6 * err.max() and np.ptp(off) <= 6 * err.max()


def test_cluster_parametric_curve():
    pt = cluster_parametric_curve(2.0, 3, 3)
    again = cluster_se_step(pt.m, pt.delta, 3, 3)
    _, err = cluster_mr_with_error(2.0, 3)
    assert abs(again - pt.m) <= 3 * err + 1e-12
    assert cluster_slope_at_zero(3, 2) < 0
    assert cluster_slope_at_zero(3, 2) == pytest.approx(2 / (2 * 2**6) * (-2))
    small = cluster_parametric_curve(1e-3, 3, 2, GaussHermite())
    assert small.stable is True


def test_se_branches():
    br = se_branches(0.2, 3, Gaussian(0.2))
    assert br.stable_low < br.unstable < br.stable_high
    assert se_step(br.unstable, 0.2, 3, Gaussian(0.2))[0, 0] == pytest.approx(br.unstable, abs=1e-10)
    assert se_branches(0.1, 3, Gaussian(0.2)).unstable is None
    with pytest.raises(NotApplicableError):
        se_branches(0.1, 3, Clusters(3))
