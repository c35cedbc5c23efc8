"""Gaussian expectations: Gauss-Hermite product rules or seeded Monte Carlo."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rng as _rng
from .errors import UsageError


@dataclass(frozen=True)
class GaussHermite:
    nodes: int = 127

    def to_dict(self):
        return {"kind": "gh", "nodes": self.nodes}


@dataclass(frozen=True)
class MonteCarlo:
    samples: int = 100_000
    seed: int = 0

    def to_dict(self):
        return {"kind": "mc", "samples": self.samples, "seed": self.seed}


Integrator = GaussHermite | MonteCarlo

DEFAULT = GaussHermite()


def parse_integrator(text: str | dict | Integrator | None) -> Integrator:
    """``"gh:127"``, ``"mc:100000"`` (optionally ``"mc:100000:seed"``) or a dict."""
    if text is None:
        return DEFAULT
    if isinstance(text, (GaussHermite, MonteCarlo)):
        return text
    if isinstance(text, dict):
        kind = text.get("kind")
        if kind == "gh":
            return GaussHermite(int(text.get("nodes", 127)))
        if kind == "mc":
            return MonteCarlo(int(text.get("samples", 100_000)), int(text.get("seed", 0)))
        raise UsageError(f"unknown integrator {text!r}")
    parts = str(text).split(":")
    try:
        if parts[0] == "gh":
            return GaussHermite(int(parts[1]) if len(parts) > 1 else 127)
        if parts[0] == "mc":
            return MonteCarlo(
                int(parts[1]) if len(parts) > 1 else 100_000,
                int(parts[2]) if len(parts) > 2 else 0,
            )
    except ValueError as exc:
        raise UsageError(f"bad integrator {text!r}") from exc
    raise UsageError(f"unknown integrator {text!r}")


@lru_cache(maxsize=64)
def _gh_1d(k: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.hermite_e.hermegauss(k)
    w = w / w.sum()
    z.flags.writeable = False
    w.flags.writeable = False
    return z, w


@lru_cache(maxsize=64)
def _points(integ: Integrator, dim: int, purpose: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(integ, GaussHermite):
        z1, w1 = _gh_1d(integ.nodes)
        if integ.nodes**dim > 5_000_000:
            raise UsageError(f"{integ.nodes}^{dim} Gauss-Hermite points is too many; use fewer nodes or MC")
        grids = np.meshgrid(*([z1] * dim), indexing="ij")
        z = np.stack([g.ravel() for g in grids], axis=-1)
        wg = np.meshgrid(*([w1] * dim), indexing="ij")
        w = np.prod(np.stack([g.ravel() for g in wg], axis=-1), axis=-1)
    else:
        gen = _rng.generator(integ.seed, _rng.MC_INTEGRATOR, purpose * 64 + dim)
        z = gen.standard_normal((integ.samples, dim))
        w = np.full(integ.samples, 1.0 / integ.samples)
    z.flags.writeable = False
    w.flags.writeable = False
    return z, w


def gaussian_points(integ: Integrator, dim: int, purpose: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``(K, dim)`` and weights ``(K,)`` for ``E f(Z)``, ``Z ~ N(0, I_dim)``.

    ``purpose`` decorrelates Monte Carlo draws used for different quantities.
    """
    if dim < 1:
        raise UsageError("dimension must be >= 1")
    return _points(integ, int(dim), int(purpose))


def is_mc(integ: Integrator) -> bool:
    return isinstance(integ, MonteCarlo)


def mc_stderr(values: np.ndarray, weights: np.ndarray) -> float:
    """Standard error of a weighted mean with equal weights; 0 for quadrature."""
    values = np.asarray(values)
    n = values.shape[0]
    if n < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(n))
