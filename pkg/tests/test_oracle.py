import itertools
import math

import numpy as np
import pytest

from tensorspike.errors import CapacityError, NotApplicableError, ShapeError, UsageError
from tensorspike.free_energy import maximize_phi_rs
from tensorspike.model import AWGN, Bernoulli, Gaussian, ModelSpec, Rademacher, make_instance
from tensorspike.oracle import exact_free_energy, exact_posterior, hamiltonian, log_normalizer, nishimori_check
from tensorspike.tensor_core import SymmetricTensor


def loop_hamiltonian(x, y, delta):
    n, p = y.n, y.p
    c = math.sqrt(math.factorial(p - 1)) / n ** ((p - 1) / 2)
    h = 0.0
    for t in itertools.combinations(range(n), p):
        prod = np.prod([x[i] for i in t])
        h += c * y[t] * prod - 0.5 * c * c * prod**2
    return h / delta


def instance(prior, p=3, n=7, delta=0.4, seed=1):
    return make_instance(ModelSpec(p, n, prior, AWGN(delta)), seed)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_hamiltonian_matches_loop(p):
    inst = instance(Gaussian(0.1), p=p, n=6)
    rng = np.random.default_rng(p)
    xs = rng.standard_normal((5, 6))
    got = hamiltonian(xs, inst.y, 0.4)
    for x, g in zip(xs, got):
        assert g == pytest.approx(loop_hamiltonian(x, inst.y, 0.4), rel=1e-12)
    assert isinstance(hamiltonian(xs[0], inst.y, 0.4), float)


def test_hamiltonian_degenerate_inputs():
    y0 = SymmetricTensor.zeros(5, 3)
    x = np.ones(5)
    # Y = 0 leaves only the quadratic term: -C(5,3)/(2 delta) * c^2
    assert hamiltonian(x, y0, 0.5) == pytest.approx(-0.5 * 2 / 25 * 10 / 0.5)
    inst = instance(Rademacher(), n=5)
    assert hamiltonian(np.zeros(5), inst.y, 0.5) == 0.0
    with pytest.raises(ShapeError):
        hamiltonian(np.ones(4), inst.y, 0.5)
    with pytest.raises(UsageError):
        hamiltonian(x, inst.y, 0.0)


@pytest.mark.parametrize("prior", [Rademacher(), Bernoulli(0.3)])
def test_gray_code_matches_plain_enumeration(prior):
    inst = instance(prior, n=10)
    a = exact_posterior(inst.y, 0.4, prior, backend="numba")
    b = exact_posterior(inst.y, 0.4, prior, backend="numpy")
    np.testing.assert_allclose(a.log_weights, b.log_weights, rtol=0, atol=1e-10)
    assert a.log_z == pytest.approx(b.log_z, abs=1e-10)
    np.testing.assert_allclose(a.marginals, b.marginals, atol=1e-12)


def test_posterior_is_brute_force():
    prior = Rademacher()
    inst = instance(prior, n=6)
    post = exact_posterior(inst.y, 0.4, prior)
    logs = []
    for k in range(2**6):
        x = post.configuration(k)
        logs.append(loop_hamiltonian(x, inst.y, 0.4) + 6 * math.log(0.5))
    np.testing.assert_allclose(post.log_weights, logs, atol=1e-10)
    assert post.weights().sum() == pytest.approx(1.0)
    assert log_normalizer(inst.y, 0.4, prior) == pytest.approx(post.log_z)


def test_capacity_and_applicability():
    big = SymmetricTensor.zeros(25, 2)
    with pytest.raises(CapacityError):
        exact_posterior(big, 0.5, Rademacher())
    with pytest.raises(ShapeError):
        exact_posterior(SymmetricTensor.zeros(5, 3), 0.5, Rademacher(), p=2)
    with pytest.raises(NotApplicableError):
        exact_posterior(SymmetricTensor.zeros(5, 3), 0.5, Gaussian(0.0))


def test_small_n_errors():
    with pytest.raises(ShapeError):
        SymmetricTensor.zeros(2, 3)


def test_large_noise_gives_prior_marginals():
    for prior, mean in ((Rademacher(), 0.0), (Bernoulli(0.3), 0.3)):
        inst = instance(prior, n=8)
        post = exact_posterior(inst.y, 1e9, prior)
        np.testing.assert_allclose(post.marginals, mean, atol=1e-6)


def test_near_noiseless_recovers_signal():
    prior = Rademacher()
    inst = make_instance(ModelSpec(3, 10, prior, AWGN(1e-3)), 4)
    post = exact_posterior(inst.y, 1e-3, prior)
    np.testing.assert_array_equal(np.sign(post.marginals), inst.x0[:, 0])


@pytest.mark.parametrize("prior,delta", [(Rademacher(), 0.3), (Bernoulli(0.3), 0.05), (Rademacher(), 2.0)])
def test_nishimori(prior, delta):
    rep = nishimori_check(prior, 3, delta, n=8, trials=10, seed=2)
    assert rep.max_discrepancy < 1e-10
    assert len(rep.replica_overlaps) == 10
    assert rep.to_dict()["trials"] == 10
    with pytest.raises(UsageError):
        nishimori_check(prior, 3, delta, trials=0)


def test_nishimori_mmse_identity_in_expectation():
    rep = nishimori_check(Rademacher(), 3, 0.3, n=8, trials=200, seed=3)
    assert abs(rep.mmse_direct - rep.mmse_identity) < 4 * rep.mmse_gap_stderr + 1e-12


def test_exact_free_energy():
    f, se = exact_free_energy(8, 3, Rademacher(), 1e8, mc_trials=20)
    assert abs(f) < 1e-6 and se < 1e-6
    f6, s6 = exact_free_energy(6, 3, Rademacher(), 0.2, mc_trials=300, seed=1)
    f10, s10 = exact_free_energy(10, 3, Rademacher(), 0.2, mc_trials=300, seed=1)
    target = maximize_phi_rs(0.2, 3, Rademacher()).phi_star
    assert target - f10 < target - f6 + 3 * math.hypot(s6, s10)
    with pytest.raises(UsageError):
        exact_free_energy(6, 3, Rademacher(), 0.2, mc_trials=1)
    with pytest.raises(CapacityError):
        exact_free_energy(30, 3, Rademacher(), 0.2)
