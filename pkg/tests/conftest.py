"""Shared brute-force references used across the test modules."""

from __future__ import annotations

import itertools
import math
import os

import numpy as np
import pytest
from hypothesis import settings

from tensorspike.model import Bernoulli, Clusters, Gaussian, Rademacher

# same examples on every run; HYPOTHESIS_PROFILE=explore draws fresh ones
settings.register_profile("ci", derandomize=True, deadline=None)
settings.register_profile("explore", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def naive_contract(s, x, prefactor=1.0):
    """Loop over every increasing tuple and scatter into each member."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64).T).T
    n, r = x.shape
    out = np.zeros((n, r))
    for rank, tup in enumerate(itertools.combinations(range(n), s.p)):
        # itertools yields lexicographic order; look the entry up by index set
        val = s[tup]
        for pos, i in enumerate(tup):
            rest = tup[:pos] + tup[pos + 1:]
            prod = np.ones(r)
            for j in rest:
                prod = prod * x[j]
            out[i] += val * prod
    return prefactor * out


def naive_amp_step(s, delta, prior, xhat, xhat_prev, sigma):
    """Dense, loop-based transcription of one AMP iteration."""
    n, r = xhat.shape
    p = s.p
    c = math.sqrt(math.factorial(p - 1)) / n ** ((p - 1) / 2)
    field = np.zeros((n, r))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for comb in itertools.combinations(others, p - 1):
            prod = np.ones(r)
            for j in comb:
                prod = prod * xhat[j]
            field[i] += s[(i,) + comb] * prod
    field *= c
    sbar = np.zeros((r, r))
    for j in range(n):
        sbar += sigma[j]
    sbar /= n
    cross = np.zeros((r, r))
    for j in range(n):
        cross += np.outer(xhat[j], xhat_prev[j])
    cross /= n
    ons = (p - 1) / delta * sbar * cross ** (p - 2)
    b = np.array([field[i] - ons @ xhat_prev[i] for i in range(n)])
    self_ov = np.zeros((r, r))
    for j in range(n):
        self_ov += np.outer(xhat[j], xhat[j])
    self_ov /= n
    a = self_ov ** (p - 1) / delta
    means, covs = [], []
    for i in range(n):
        m, cv = prior.fin(a, b[i][None, :])
        means.append(np.asarray(m).reshape(r))
        covs.append(np.asarray(cv).reshape(r, r))
    return np.array(means), np.array(covs), a, b


CATALOG = {
    "gaussian0": Gaussian(0.0),
    "gaussian02": Gaussian(0.2),
    "rademacher": Rademacher(),
    "bernoulli": Bernoulli(0.3),
    "clusters3": Clusters(3),
}


@pytest.fixture(params=sorted(CATALOG))
def catalog_prior(request):
    return CATALOG[request.param]
