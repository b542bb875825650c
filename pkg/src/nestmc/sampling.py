"""Seeded random streams and the handful of distributions the test problems use.

Every stream is identified by its ``seed_path``: the master seed followed by
the substream indices taken to reach it. Two streams with equal paths produce
identical output. Streams are backed by the counter-based Philox generator,
keyed through :class:`numpy.random.SeedSequence` so that sibling substreams
never overlap.

Normal variates are produced by inverting the normal CDF on open-interval
uniforms, so each normal draw consumes exactly one uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .errors import InvalidParameter, NotPositiveDefinite

_MASK64 = (1 << 64) - 1
_PIVOT_TOL = 1e-12
# 52 random bits keep (k + 0.5) * 2**-52 exactly representable and inside (0, 1)
_U_BITS = 52
_U_SCALE = 2.0 ** -_U_BITS


class RngStream:
    """A deterministic random stream addressed by its seed path."""

    def __init__(self, seed_path: Sequence[int]):
        if len(seed_path) == 0:
            raise InvalidParameter("seed_path must contain at least the master seed")
        self.seed_path = tuple(int(s) for s in seed_path)
        if any(s < 0 for s in self.seed_path):
            raise InvalidParameter("seed path entries must be nonnegative")
        ss = np.random.SeedSequence(
            entropy=self.seed_path[0], spawn_key=self.seed_path[1:]
        )
        self._gen = np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed_path={list(self.seed_path)})"

    def uniform(self, size=None):
        """Uniforms on the open interval (0, 1)."""
        k = self._gen.integers(0, 1 << _U_BITS, size=size, dtype=np.int64)
        return (k + 0.5) * _U_SCALE

    def normal(self, size=None):
        """Standard normals by inverse CDF."""
        return ndtri(self.uniform(size))


def make_stream(master_seed: int) -> RngStream:
    return RngStream([int(master_seed) & _MASK64])


def substream(parent: RngStream, index: int) -> RngStream:
    """Child stream with ``seed_path = parent.seed_path + (index,)``.

    Depends only on the parent's path, not on how much of the parent has
    been consumed.
    """
    if index < 0:
        raise InvalidParameter("substream index must be nonnegative")
    return RngStream(parent.seed_path + (int(index) & _MASK64,))


def cholesky(cov) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    a = np.array(cov, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidParameter(f"covariance must be a nonempty square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-12, atol=0.0):
        raise InvalidParameter("covariance must be symmetric")
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > _PIVOT_TOL:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3e}; covariance is not positive definite")
        low[j, j] = np.sqrt(pivot)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Constant:
    value: float

    def sample(self, rng: RngStream, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not self.high > self.low:
            raise InvalidParameter("uniform requires high > low")

    def sample(self, rng: RngStream, size=None):
        return self.low + (self.high - self.low) * rng.uniform(size)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidParameter(f"Bernoulli p must lie in [0, 1], got {self.p}")

    def sample(self, rng: RngStream, size=None):
        out = (rng.uniform(size) < self.p).astype(np.int64)
        return int(out) if size is None else out


@dataclass(frozen=True)
class Normal:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise InvalidParameter(f"normal variance must be positive, got {self.var}")

    def sample(self, rng: RngStream, size=None):
        return self.mean + np.sqrt(self.var) * rng.normal(size)


@dataclass(frozen=True)
class LogNormal:
    """exp of a Normal(mean, var) variate; parameters are those of the log."""

    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise InvalidParameter(f"lognormal variance must be positive, got {self.var}")

    def sample(self, rng: RngStream, size=None):
        return np.exp(Normal(self.mean, self.var).sample(rng, size))


@dataclass(frozen=True, eq=False)
class MvnSpec:
    """Multivariate normal with a cached lower Cholesky factor."""

    mean: np.ndarray
    covariance: np.ndarray
    chol_lower: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InvalidParameter(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "chol_lower", cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: RngStream, size=None):
        n = 1 if size is None else int(size)
        z = rng.normal((n, self.dim))
        out = self.mean + z @ self.chol_lower.T
        return out[0] if size is None else out


@dataclass(frozen=True, eq=False)
class MvLogNormal:
    """Componentwise exp of a multivariate normal."""

    normal: MvnSpec

    def sample(self, rng: RngStream, size=None):
        return np.exp(self.normal.sample(rng, size))


def draw(dist, rng: RngStream, size=None):
    """Draw from ``dist``, advancing ``rng``. ``size=None`` gives a single draw."""
    return dist.sample(rng, size)
