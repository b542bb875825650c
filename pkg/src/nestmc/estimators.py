"""Estimators of ``E_Y f(E[X | Y])``.

``sparse_grid_estimate`` and ``simple_estimate`` work from joint samples only.
``nested_mc_estimate`` is the textbook baseline and needs a problem that can
sample ``X`` given ``Y``.

Level sums use :func:`math.fsum`, which is correctly rounded and therefore
independent of block order. This is what makes the finest value and index
levels cancel exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InnerSamplerUnavailable, InvalidParameter
from .partition import SampleBatch, block_mean_tree, build_partitions, log2_exact
from .sampling import RngStream

# Inner draws held in memory at once by the nested estimator, in floats.
_NESTED_CHUNK = 1 << 22


@dataclass(frozen=True)
class OuterFunction:
    """The outer map ``f: R^J -> R``, applied row-wise to an ``(n, J)`` array."""

    j_dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "f"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.j_dim:
            raise DimensionMismatch(f"{self.name} expects (n, {self.j_dim}) input, got {points.shape}")
        out = np.asarray(self.fn(points), dtype=float)
        if out.shape != (points.shape[0],):
            raise DimensionMismatch(f"{self.name} returned shape {out.shape}, expected ({points.shape[0]},)")
        return out

    @classmethod
    def from_scalar(cls, fn: Callable[[np.ndarray], float], j_dim: int, name: str = "f") -> "OuterFunction":
        """Wrap a function of one length-``J`` vector."""
        return cls(j_dim, lambda pts: np.array([fn(row) for row in pts], dtype=float), name)


def max_outer(j_dim: int) -> OuterFunction:
    """Componentwise maximum, the decision rule behind EVSI."""
    return OuterFunction(j_dim, lambda pts: pts.max(axis=1), "max")


@dataclass(frozen=True)
class EstimateRecord:
    value: float
    method: str  # "sparse_grid" | "simple" | "nested_mc"
    m: Optional[int]
    samples_used: int
    f_evals: int
    seed_path: Optional[tuple] = None
    n_outer: Optional[int] = None
    n_inner: Optional[int] = None  # None with nested_mc means exact inner means


@dataclass(frozen=True)
class LevelTerms:
    """Per-level averages over the value blocks (``p``) and index blocks (``q``).

    ``p[d]`` is the level-``d`` term for ``d = 0..m``; ``q[d - 1]`` is the
    level-``d`` term for ``d = 1..m``.
    """

    p: list
    q: list
    f_evals: int

    @property
    def value(self) -> float:
        return math.fsum(self.p + [-v for v in self.q])


def _check(batch: SampleBatch, f: OuterFunction) -> int:
    m = log2_exact(batch.n)
    if f.j_dim != batch.j_dim:
        raise DimensionMismatch(f"f takes J={f.j_dim} but the batch has J={batch.j_dim}")
    return m


def _level_average(f: OuterFunction, means: np.ndarray) -> float:
    # fsum is exact-rounded, dividing by a power of two is exact
    return math.fsum(f(means)) / means.shape[0]


def level_terms(batch: SampleBatch, f: OuterFunction) -> LevelTerms:
    _check(batch, f)
    plan = build_partitions(batch)
    vmeans = block_mean_tree(batch, plan, "value")
    imeans = block_mean_tree(batch, plan, "index")
    p = [_level_average(f, mu) for mu in vmeans]
    q = [_level_average(f, mu) for mu in imeans[1:]]
    evals = sum(mu.shape[0] for mu in vmeans) + sum(mu.shape[0] for mu in imeans[1:])
    return LevelTerms(p=p, q=q, f_evals=evals)


def sparse_grid_estimate(batch: SampleBatch, f: OuterFunction, seed_path=None) -> EstimateRecord:
    """Telescoping combination of all levels: ``P_0 + sum_d (P_d - Q_d)``."""
    m = _check(batch, f)
    terms = level_terms(batch, f)
    return EstimateRecord(
        value=terms.value,
        method="sparse_grid",
        m=m,
        samples_used=batch.n,
        f_evals=terms.f_evals,
        seed_path=seed_path,
    )


def simple_estimate(batch: SampleBatch, f: OuterFunction, seed_path=None) -> EstimateRecord:
    """The single balanced level ``d0 = m // 2`` of the value family."""
    m = _check(batch, f)
    d0 = m // 2
    plan = build_partitions(batch)
    means = block_mean_tree(batch, plan, "value")[d0]
    return EstimateRecord(
        value=_level_average(f, means),
        method="simple",
        m=m,
        samples_used=batch.n,
        f_evals=means.shape[0],
        seed_path=seed_path,
    )


def nested_inner_means(problem, n_outer: int, n_inner: Optional[int], rng: RngStream):
    """Fresh outer draws ``Y_j`` and estimates of ``E[X | Y_j]``.

    With ``n_inner=None`` the problem's exact inner mean is used instead of
    an inner sample average. Returns ``(ys, means)`` of shapes ``(n_outer, K)``
    and ``(n_outer, J)``.
    """
    if n_outer < 1 or (n_inner is not None and n_inner < 1):
        raise InvalidParameter("n_outer and n_inner must be at least 1")
    if n_inner is None:
        if problem.inner_mean is None:
            raise InnerSamplerUnavailable(f"{problem.name} has no closed-form inner mean")
    elif problem.inner_conditional is None:
        raise InnerSamplerUnavailable(f"{problem.name} has no inner conditional sampler")
    ys = problem.sample_joint(n_outer, rng).y
    if n_inner is None:
        return ys, np.asarray(problem.inner_mean(ys), dtype=float)
    out = np.empty((n_outer, problem.j_dim))
    step = max(1, _NESTED_CHUNK // (n_inner * problem.j_dim))
    for start in range(0, n_outer, step):
        draws = problem.inner_conditional(ys[start:start + step], n_inner, rng)
        out[start:start + step] = draws.mean(axis=1)
    return ys, out


def nested_mc_estimate(problem, n_outer: int, n_inner: Optional[int], rng: RngStream) -> EstimateRecord:
    """Plain nested Monte Carlo: outer average of ``f`` at inner sample means.

    ``n_inner=None`` substitutes the problem's closed-form inner mean, which
    reduces the method to ordinary Monte Carlo over ``Y``.
    """
    _, means = nested_inner_means(problem, n_outer, n_inner, rng)
    value = math.fsum(problem.f(means)) / n_outer
    return EstimateRecord(
        value=value,
        method="nested_mc",
        m=None,
        samples_used=n_outer * (1 if n_inner is None else n_inner),
        f_evals=n_outer,
        seed_path=rng.seed_path,
        n_outer=n_outer,
        n_inner=n_inner,
    )
