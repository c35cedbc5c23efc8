"""Generative model: priors, output channels and planted instances."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax

from . import rng as _rng
from .errors import DegenerateChannelError, NonNormalizableError, ShapeError, UsageError
from .tensor_core import SymmetricTensor, check_alloc, fill_spike, n_entries

# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class PriorMoments:
    mean: np.ndarray
    sigma_x: np.ndarray


def _log_cosh(y: np.ndarray) -> np.ndarray:
    # log1p(2 sinh^2(y/2)) keeps full relative precision near 0
    a = np.abs(y)
    small = a < 1.0
    out = np.empty_like(a)
    out[small] = np.log1p(2.0 * np.sinh(a[small] / 2.0) ** 2)
    big = ~small
    out[big] = a[big] - math.log(2.0) + np.log1p(np.exp(-2.0 * a[big]))
    return out


def _as_A(A, r: int) -> np.ndarray:
    arr = np.asarray(A, dtype=np.float64)
    if arr.ndim == 0 and r == 1:
        arr = arr.reshape(1, 1)
    if arr.shape != (r, r):
        raise ShapeError(f"A must be {r}x{r}, got shape {arr.shape}")
    return arr


def _as_B(B, r: int) -> np.ndarray:
    arr = np.asarray(B, dtype=np.float64)
    if r == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != r:
        raise ShapeError(f"B must end in a length-{r} axis, got shape {arr.shape}")
    return arr


class Prior(ABC):
    """Separable prior on the rows of the signal matrix."""

    kind: str = ""
    r: int = 1

    @abstractmethod
    def moments(self) -> PriorMoments: ...

    @abstractmethod
    def log_zx(self, A, B) -> np.ndarray:
        """``log E_x exp(B.x - x.A.x/2)`` for a batch of ``B`` rows."""

    @abstractmethod
    def fin(self, A, B) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean ``(..., r)`` and covariance ``(..., r, r)``."""

    @abstractmethod
    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def to_dict(self) -> dict: ...

    def support(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Atoms ``(K, r)`` and weights for discrete priors, else ``None``."""
        return None

    @property
    def zero_mean(self) -> bool:
        return bool(np.all(self.moments().mean == 0.0))

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class ScalarPrior(Prior):
    """Rank-one prior; subclasses implement the scalar kernels."""

    r = 1

    @abstractmethod
    def log_z1(self, a, b): ...

    @abstractmethod
    def fin1(self, a, b) -> tuple[np.ndarray, np.ndarray]: ...

    def log_zx(self, A, B):
        a = _as_A(A, 1)[0, 0]
        b = _as_B(B, 1)[..., 0]
        return self.log_z1(a, b)

    def fin(self, A, B):
        a = _as_A(A, 1)[0, 0]
        b = _as_B(B, 1)[..., 0]
        m, v = self.fin1(a, b)
        return m[..., None], v[..., None, None]


@dataclass(frozen=True, repr=False)
class Gaussian(ScalarPrior):
    mu: float = 0.0
    kind = "gaussian"

    def moments(self):
        return PriorMoments(np.array([self.mu]), np.array([[1.0 + self.mu**2]]))

    def _check(self, a):
        if np.any(1.0 + np.asarray(a) <= 0.0):
            raise NonNormalizableError("Gaussian tilted measure needs 1 + A > 0")

    def log_z1(self, a, b):
        self._check(a)
        b = np.asarray(b, dtype=np.float64)
        return -0.5 * np.log1p(a) + (b + self.mu) ** 2 / (2.0 * (1.0 + a)) - self.mu**2 / 2.0

    def fin1(self, a, b):
        self._check(a)
        b = np.asarray(b, dtype=np.float64)
        mean = (b + self.mu) / (1.0 + a)
        return mean, np.broadcast_to(1.0 / (1.0 + a), mean.shape).copy()

    def sample(self, n, gen):
        return self.mu + gen.standard_normal((n, 1))

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu}


@dataclass(frozen=True, repr=False)
class Rademacher(ScalarPrior):
    kind = "rademacher"

    def moments(self):
        return PriorMoments(np.array([0.0]), np.array([[1.0]]))

    def log_z1(self, a, b):
        return -np.asarray(a) / 2.0 + _log_cosh(np.asarray(b, dtype=np.float64))

    def fin1(self, a, b):
        t = np.tanh(np.asarray(b, dtype=np.float64))
        return t, 1.0 - t * t

    def sample(self, n, gen):
        return np.where(gen.random((n, 1)) < 0.5, -1.0, 1.0)

    def support(self):
        return np.array([[-1.0], [1.0]]), np.array([0.5, 0.5])

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True, repr=False)
class Bernoulli(ScalarPrior):
    rho: float = 0.1
    kind = "bernoulli"

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise UsageError(f"Bernoulli density must lie in (0, 1), got {self.rho}")

    def moments(self):
        return PriorMoments(np.array([self.rho]), np.array([[self.rho]]))

    def log_z1(self, a, b):
        t = np.asarray(b, dtype=np.float64) - np.asarray(a) / 2.0
        with np.errstate(over="ignore"):
            direct = np.log1p(self.rho * np.expm1(np.minimum(t, 30.0)))
        tail = np.logaddexp(math.log1p(-self.rho), math.log(self.rho) + t)
        return np.where(t < 30.0, direct, tail)

    def fin1(self, a, b):
        t = np.asarray(b, dtype=np.float64) - np.asarray(a) / 2.0
        m = expit(t + math.log(self.rho / (1.0 - self.rho)))
        return m, m * (1.0 - m)

    def sample(self, n, gen):
        return (gen.random((n, 1)) < self.rho).astype(np.float64)

    def support(self):
        return np.array([[0.0], [1.0]]), np.array([1.0 - self.rho, self.rho])

    def to_dict(self):
        return {"kind": self.kind, "rho": self.rho}


@dataclass(frozen=True, repr=False)
class Discrete(ScalarPrior):
    """User-supplied scalar prior on finitely many atoms."""

    atoms: tuple[float, ...] = (-1.0, 1.0)
    weights: tuple[float, ...] = (0.5, 0.5)
    kind = "discrete"

    def __post_init__(self):
        if len(self.atoms) != len(self.weights) or not self.atoms:
            raise UsageError("atoms and weights must be non-empty and of equal length")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise UsageError("weights must be non-negative and sum to 1")

    def _xw(self):
        return np.asarray(self.atoms, dtype=np.float64), np.asarray(self.weights, dtype=np.float64)

    def moments(self):
        x, w = self._xw()
        return PriorMoments(np.array([w @ x]), np.array([[w @ x**2]]))

    def _logits(self, a, b):
        x, w = self._xw()
        with np.errstate(divide="ignore"):
            lw = np.log(w)
        b = np.asarray(b, dtype=np.float64)[..., None]
        a = np.asarray(a, dtype=np.float64)[..., None]
        return lw + b * x - a * x**2 / 2.0

    def log_z1(self, a, b):
        return logsumexp(self._logits(a, b), axis=-1)

    def fin1(self, a, b):
        x, _ = self._xw()
        post = softmax(self._logits(a, b), axis=-1)
        m = post @ x
        return m, post @ x**2 - m * m

    def sample(self, n, gen):
        x, w = self._xw()
        return x[gen.choice(len(x), size=n, p=w)][:, None]

    def support(self):
        x, w = self._xw()
        return x[:, None], w

    def to_dict(self):
        return {"kind": self.kind, "atoms": list(self.atoms), "weights": list(self.weights)}


@dataclass(frozen=True, repr=False)
class Clusters(Prior):
    """Uniform one-hot prior over ``r`` categories."""

    n_clusters: int = 3
    kind = "clusters"

    def __post_init__(self):
        if self.n_clusters < 2:
            raise UsageError("clusters prior needs r >= 2")

    @property
    def r(self) -> int:  # type: ignore[override]
        return self.n_clusters

    def moments(self):
        r = self.n_clusters
        return PriorMoments(np.full(r, 1.0 / r), np.eye(r) / r)

    def _u(self, A, B):
        A = _as_A(A, self.r)
        B = _as_B(B, self.r)
        return B - np.diag(A) / 2.0

    def log_zx(self, A, B):
        return logsumexp(self._u(A, B), axis=-1) - math.log(self.r)

    def fin(self, A, B):
        s = np.exp(log_softmax(self._u(A, B), axis=-1))
        cov = -s[..., :, None] * s[..., None, :]
        idx = np.arange(self.r)
        cov[..., idx, idx] += s
        return s, cov

    def sample(self, n, gen):
        return np.eye(self.r)[gen.integers(0, self.r, size=n)]

    def support(self):
        return np.eye(self.r), np.full(self.r, 1.0 / self.r)

    def to_dict(self):
        return {"kind": self.kind, "r": self.n_clusters}


def prior_zx(prior: Prior, A, B) -> np.ndarray:
    """Normalizer ``Z_X(A, B)``."""
    return np.exp(prior.log_zx(A, B))


def prior_fin(prior: Prior, A, B) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the tilted measure."""
    return prior.fin(A, B)


def prior_moments(prior: Prior) -> PriorMoments:
    return prior.moments()


_PRIOR_KEYS = {"mu": float, "rho": float, "r": int}


def parse_prior(text: str | dict) -> Prior:
    """Build a prior from ``"gaussian:mu=0.2"``-style text or a config dict."""
    if isinstance(text, Prior):
        return text
    if isinstance(text, dict):
        cfg = dict(text)
        kind = str(cfg.pop("kind", "")).lower()
    else:
        kind, _, rest = str(text).partition(":")
        kind = kind.strip().lower()
        cfg = {}
        for part in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, val = part.partition("=")
            if not eq:
                raise UsageError(f"bad prior parameter {part!r}; expected key=value")
            key = key.strip()
            if key not in _PRIOR_KEYS:
                raise UsageError(f"unknown prior parameter {key!r}")
            cfg[key] = _PRIOR_KEYS[key](val)
    try:
        if kind == "gaussian":
            return Gaussian(mu=float(cfg.get("mu", 0.0)))
        if kind == "rademacher":
            return Rademacher()
        if kind == "bernoulli":
            return Bernoulli(rho=float(cfg.get("rho", 0.1)))
        if kind == "clusters":
            return Clusters(n_clusters=int(cfg.get("r", 3)))
        if kind == "discrete":
            return Discrete(tuple(cfg["atoms"]), tuple(cfg["weights"]))
    except (TypeError, KeyError) as exc:
        raise UsageError(f"bad prior specification {text!r}: {exc}") from exc
    raise UsageError(f"unknown prior {kind!r}")


# ---------------------------------------------------------------------------
# channels


@dataclass(frozen=True)
class AWGN:
    """Additive white Gaussian noise of variance ``delta``."""

    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise UsageError("noise variance must be non-negative")

    def to_dict(self):
        return {"kind": "awgn", "delta": self.delta}


@dataclass(frozen=True)
class CustomChannel:
    """Componentwise channel given by a log-density and a sampler.

    Attributes:
        logpdf: ``logpdf(y, w)``, vectorized over arrays.
        sampler: ``sampler(w, gen)`` returning one draw per entry of ``w``.
        name: Label written to configs.
    """

    logpdf: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    name: str = "custom"
    fd_step: float = 1e-5
    mc_samples: int = 100_000

    def to_dict(self):
        return {"kind": "custom", "name": self.name}


Channel = AWGN | CustomChannel


@dataclass(frozen=True)
class ModelSpec:
    p: int
    n: int
    prior: Prior
    channel: Channel

    def __post_init__(self):
        if self.p < 2:
            raise UsageError("tensor order p must be >= 2")
        if self.n < self.p:
            raise UsageError("need n >= p")

    @property
    def r(self) -> int:
        return self.prior.r

    def to_dict(self):
        return {"p": self.p, "n": self.n, "r": self.r, "prior": self.prior.to_dict(), "channel": self.channel.to_dict()}


@dataclass
class Instance:
    spec: ModelSpec
    x0: np.ndarray
    y: SymmetricTensor
    seed: int
    meta: dict = field(default_factory=dict)


def sample_signal(prior: Prior, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from the prior, shape ``(n, r)``."""
    return np.ascontiguousarray(prior.sample(int(n), _rng.generator(seed, _rng.SIGNAL)), dtype=np.float64)


def spike_scale(n: int, p: int) -> float:
    return math.sqrt(math.factorial(p - 1)) / n ** ((p - 1) / 2)


def _spike_array(x0: np.ndarray, p: int) -> np.ndarray:
    n = x0.shape[0]
    check_alloc(8 * n_entries(n, p))
    data = np.empty(n_entries(n, p))
    fill_spike(x0, p, spike_scale(n, p), data)
    return data


def spike_tensor(x0: np.ndarray, p: int) -> SymmetricTensor:
    """Noiseless rank-r tensor ``scale * sum_k x0[:,k]^{(x)p}`` on increasing tuples."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 1:
        x0 = x0[:, None]
    return SymmetricTensor(x0.shape[0], p, _spike_array(x0, p), copy=False)


def _apply_channel(data: np.ndarray, channel: Channel, seed: int) -> None:
    """Replace ``w`` by a channel draw ``y``, in place."""
    if isinstance(channel, AWGN):
        if channel.delta > 0:
            _rng.add_normal_blocks(data, math.sqrt(channel.delta), seed, _rng.NOISE)
        return
    total = data.shape[0]
    for b, start in enumerate(range(0, total, _rng.BLOCK)):
        stop = min(start + _rng.BLOCK, total)
        gen = _rng.generator(seed, _rng.NOISE, b)
        data[start:stop] = np.asarray(channel.sampler(data[start:stop].copy(), gen), dtype=np.float64)


def observe(w: SymmetricTensor, channel: Channel, seed: int) -> SymmetricTensor:
    """Pass every entry of ``w`` through the channel.  ``AWGN(0)`` is noiseless."""
    data = w.data.copy()
    _apply_channel(data, channel, seed)
    return SymmetricTensor(w.n, w.p, data, copy=False)


def channel_fisher(channel: Channel, seed: int = 0) -> float:
    """Fisher information of the channel at ``w = 0``."""
    if isinstance(channel, AWGN):
        if channel.delta <= 0:
            raise DegenerateChannelError("noiseless channel has infinite Fisher information")
        return 1.0 / channel.delta
    gen = _rng.generator(seed, _rng.CHANNEL_MC)
    y = np.asarray(channel.sampler(np.zeros(channel.mc_samples), gen), dtype=np.float64)
    s = _custom_score(channel, y)
    fisher = float(np.mean(s * s))
    if not np.isfinite(fisher) or fisher <= 1e-300:
        raise DegenerateChannelError(f"channel {channel.name!r} has zero Fisher information at w = 0")
    return fisher


def _custom_score(channel: CustomChannel, y: np.ndarray) -> np.ndarray:
    h = channel.fd_step
    return (channel.logpdf(y, np.full_like(y, h)) - channel.logpdf(y, np.full_like(y, -h))) / (2.0 * h)


def _score_inplace(data: np.ndarray, channel: Channel) -> None:
    if isinstance(channel, AWGN):
        if channel.delta <= 0:
            raise DegenerateChannelError("noiseless channel has no finite score")
        data /= channel.delta
        return
    for start in range(0, data.shape[0], _rng.BLOCK):
        stop = min(start + _rng.BLOCK, data.shape[0])
        data[start:stop] = _custom_score(channel, data[start:stop])


def score_tensor(y: SymmetricTensor, channel: Channel, seed: int = 0) -> tuple[SymmetricTensor, float]:
    """Fisher score tensor at ``w = 0`` and the effective noise ``1 / Fisher``."""
    delta = 1.0 / channel_fisher(channel, seed)
    data = y.data.copy()
    _score_inplace(data, channel)
    return SymmetricTensor(y.n, y.p, data, copy=False), delta


def make_instance(spec: ModelSpec, seed: int) -> Instance:
    """Planted instance: signal, spike, then channel noise in one buffer."""
    x0 = sample_signal(spec.prior, spec.n, seed)
    data = _spike_array(x0, spec.p)
    _apply_channel(data, spec.channel, seed)
    return Instance(spec, x0, SymmetricTensor(spec.n, spec.p, data, copy=False), seed)


def make_score(spec: ModelSpec, seed: int) -> tuple[np.ndarray, SymmetricTensor, float]:
    """Like :func:`make_instance` followed by :func:`score_tensor`, with a
    single tensor allocation.  Returns ``(x0, s, delta)``."""
    delta = 1.0 / channel_fisher(spec.channel, seed)
    x0 = sample_signal(spec.prior, spec.n, seed)
    data = _spike_array(x0, spec.p)
    _apply_channel(data, spec.channel, seed)
    _score_inplace(data, spec.channel)
    return x0, SymmetricTensor(spec.n, spec.p, data, copy=False), delta
