"""Recursive block families over a batch of joint samples.

A batch of ``N = 2**m`` rows is split ``m`` times. At level ``d`` every block
of level ``d - 1`` is cut in half in two ways:

* the *value* family orders the block by the outer coordinate
  ``k = (d - 1) % K`` (ties broken by row index) and keeps the lower and upper
  halves;
* the *index* family orders the same block by row index alone.

Both families are stored as one row permutation per level, so the blocks of
level ``d`` are the consecutive chunks of ``2**(m - d)`` entries, listed in
lexicographic order of their binary address.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionMismatch, LevelOutOfRange, NotPowerOfTwo

Family = Literal["value", "index"]


def log2_exact(n: int) -> int:
    """Return ``m`` with ``2**m == n`` or raise :class:`NotPowerOfTwo`."""
    n = int(n)
    if n < 1 or n & (n - 1):
        raise NotPowerOfTwo(f"sample count must be a power of two, got {n}")
    return n.bit_length() - 1


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``N`` joint draws; row ``i`` of ``x`` and ``y`` belong together."""

    x: np.ndarray  # (N, J) inner payoff vectors
    y: np.ndarray  # (N, K) outer observations

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or y.ndim != 2:
            raise DimensionMismatch("x and y must be 2-D arrays")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if y.shape[1] < 1:
            raise DimensionMismatch("y needs at least one outer coordinate")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def j_dim(self) -> int:
        return self.x.shape[1]

    @property
    def k_dim(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    m: int
    k_dims: int
    value_perm: np.ndarray  # (m + 1, N)
    index_perm: np.ndarray  # (m + 1, N); row 0 mirrors value_perm[0]

    @property
    def n(self) -> int:
        return 1 << self.m

    def split_dim(self, d: int) -> int:
        """0-based outer coordinate used to form level ``d`` (``d >= 1``)."""
        return (d - 1) % self.k_dims

    def blocks(self, d: int, family: Family = "value") -> np.ndarray:
        """Level-``d`` blocks as a ``(2**d, 2**(m-d))`` array of row indices."""
        self._check_level(d)
        if family == "index" and d == 0:
            raise LevelOutOfRange("the index family starts at level 1")
        perm = self.value_perm if family == "value" else self.index_perm
        return perm[d].reshape(1 << d, 1 << (self.m - d))

    def _check_level(self, d: int) -> None:
        if not 0 <= d <= self.m:
            raise LevelOutOfRange(f"level {d} outside 0..{self.m}")


def build_partitions(batch: SampleBatch) -> PartitionPlan:
    """Build both block families; each level costs one ``O(N log N)`` sort."""
    m = log2_exact(batch.n)
    n, k_dims = batch.n, batch.k_dim
    value = np.empty((m + 1, n), dtype=np.int64)
    index = np.empty((m + 1, n), dtype=np.int64)
    value[0] = index[0] = np.arange(n)
    for d in range(1, m + 1):
        k = (d - 1) % k_dims
        parents = value[d - 1].reshape(1 << (d - 1), 1 << (m - d + 1))
        by_index = np.sort(parents, axis=1)
        index[d] = by_index.ravel()
        # stable sort on pre-sorted indices breaks ties by ascending row index
        order = np.argsort(batch.y[by_index, k], axis=1, kind="stable")
        value[d] = np.take_along_axis(by_index, order, axis=1).ravel()
    value.setflags(write=False)
    index.setflags(write=False)
    return PartitionPlan(m=m, k_dims=k_dims, value_perm=value, index_perm=index)


def block_mean_tree(batch: SampleBatch, plan: PartitionPlan, family: Family = "value"):
    """Mean of ``x`` over every block, level by level.

    Returns a list of length ``m + 1`` whose entry ``d`` has shape ``(2**d, J)``.
    Value-family means are built bottom-up from the leaf rows, each parent
    being the average of its two children. The index family has no level 0,
    so entry 0 is ``None`` for it.
    """
    m = plan.m
    if family == "value":
        means = [None] * (m + 1)
        means[m] = batch.x[plan.value_perm[m]]
        for d in range(m - 1, -1, -1):
            child = means[d + 1]
            means[d] = 0.5 * (child[0::2] + child[1::2])
        return means
    if family == "index":
        means = [None]
        for d in range(1, m + 1):
            rows = batch.x[plan.index_perm[d]].reshape(1 << d, 1 << (m - d), batch.j_dim)
            means.append(rows.mean(axis=1))
        return means
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# width diagnostic


@dataclass(frozen=True)
class WidthDiagnostic:
    d: int
    w_per_dim: np.ndarray  # average per-block range of the rank transform, per dim
    w_bound: float  # 2 / 2**(d/K), proved bound on every w_per_dim entry
    lemma_lhs: float  # average per-block squared diameter
    lemma_rhs: float  # 2K / 2**(d/K)

    @property
    def satisfied(self) -> bool:
        return bool(self.lemma_lhs <= self.lemma_rhs and np.all(self.w_per_dim <= self.w_bound))


def rank_transform(y: np.ndarray) -> np.ndarray:
    """Empirical-CDF map of each column onto [0, 1]; ties share the averaged rank."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n == 1:
        return np.zeros_like(y)
    return (rankdata(y, method="average", axis=0) - 1.0) / (n - 1)


def _sq_diameter(pts: np.ndarray, chunk_elems: int = 1 << 22) -> float:
    """Largest squared Euclidean distance between two rows of ``pts``.

    Exact. Rows that cannot reach the current lower bound even from the far
    corner of the bounding box are discarded before the pairwise pass.
    """
    s = pts.shape[0]
    if s < 2:
        return 0.0
    a = pts[0]
    for _ in range(2):
        dist = ((pts - a) ** 2).sum(axis=1)
        far = int(np.argmax(dist))
        lower = float(dist[far])
        a = pts[far]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    reach = np.maximum((pts - lo) ** 2, (hi - pts) ** 2).sum(axis=1)
    cand = pts[reach >= lower]
    c = cand.shape[0]
    best = lower
    step = max(1, chunk_elems // max(1, c * pts.shape[1]))
    for start in range(0, c, step):
        diff = cand[start:start + step, None, :] - cand[None, :, :]
        best = max(best, float((diff ** 2).sum(axis=2).max()))
    return best


def width_diagnostic(batch: SampleBatch, plan: PartitionPlan, d: int, transformed=None) -> WidthDiagnostic:
    """Block widths at level ``d`` under the rank transform of ``y``.

    ``transformed`` may pass a precomputed :func:`rank_transform` of ``batch.y``.
    """
    plan._check_level(d)
    t = rank_transform(batch.y) if transformed is None else transformed
    k_dims = plan.k_dims
    blocks = t[plan.blocks(d, "value")]  # (2**d, S, K)
    widths = (blocks.max(axis=1) - blocks.min(axis=1)).mean(axis=0)
    if blocks.shape[1] == 1:
        lhs = 0.0
    else:
        lhs = float(np.mean([_sq_diameter(b) for b in blocks]))
    scale = 2.0 ** (d / k_dims)
    return WidthDiagnostic(
        d=d,
        w_per_dim=widths,
        w_bound=2.0 / scale,
        lemma_lhs=lhs,
        lemma_rhs=2.0 * k_dims / scale,
    )
