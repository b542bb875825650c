"""Replicated MSE experiments.

For every (method, depth) cell the harness runs ``r`` independent estimates,
each on its own substream, and scores them against either the problem's exact
value or a nested Monte Carlo reference. Substream indices are hashed from
(method, depth, replication), so adding a cell never changes the draws of
another.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermevander
from scipy.optimize import isotonic_regression

from .errors import DegenerateInput, InvalidParameter, MissingTruth
from .estimators import (
    EstimateRecord,
    nested_inner_means,
    nested_mc_estimate,
    simple_estimate,
    sparse_grid_estimate,
)
from .problems import NestedProblem, Problem1Spec, Problem2Spec, build_problem
from .sampling import RngStream, make_stream, substream

METHODS = ("sparse_grid", "simple", "nested_mc")
_CV_DEGREE = 6


def cell_index(*key) -> int:
    """Stable 64-bit substream index for a tuple of labels."""
    text = "|".join(str(k) for k in key).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def nested_split(m: int) -> tuple:
    """Outer and inner counts for a nested estimate spending ``2**m`` samples."""
    n_inner = 1 << (m // 2)
    return 1 << (m - m // 2), n_inner


def run_method(problem: NestedProblem, method: str, m: int, rng: RngStream) -> EstimateRecord:
    if method == "sparse_grid":
        return sparse_grid_estimate(problem.sample_joint(1 << m, rng), problem.f, rng.seed_path)
    if method == "simple":
        return simple_estimate(problem.sample_joint(1 << m, rng), problem.f, rng.seed_path)
    if method == "nested_mc":
        n_outer, n_inner = nested_split(m)
        rec = nested_mc_estimate(problem, n_outer, n_inner, rng)
        return EstimateRecord(**{**asdict(rec), "m": m})
    raise InvalidParameter(f"unknown method {method!r}; choose from {METHODS}")


# ---------------------------------------------------------------------------
# reference values


@dataclass(frozen=True)
class ReferenceValue:
    value: float
    stderr: float
    budget_outer: int
    budget_inner: Optional[int]
    control_variates: int = 0  # number of zero-mean features regressed out


def _hermite_features(w: np.ndarray, degree: int) -> np.ndarray:
    """Products of probabilists' Hermite polynomials of total degree 1..degree.

    Each column has mean exactly zero when the rows of ``w`` are i.i.d.
    standard normal.
    """
    k = w.shape[1]
    vander = [hermevander(w[:, i], degree) for i in range(k)]
    cols = []
    for powers in np.ndindex(*([degree + 1] * k)):
        if 0 < sum(powers) <= degree:
            col = np.ones(w.shape[0])
            for i, a in enumerate(powers):
                if a:
                    col = col * vander[i][:, a]
            cols.append(col)
    return np.column_stack(cols)


def reference_value(
    problem: NestedProblem,
    budget_outer: int,
    budget_inner: Optional[int],
    rng: RngStream,
    control_variates: bool = True,
) -> ReferenceValue:
    """Nested Monte Carlo reference with its outer-replicate standard error.

    When the problem exposes ``outer_whiten`` (a Gaussian ``Y`` marginal) and
    the budget allows, Hermite polynomials of the whitened observation serve as
    exactly-zero-mean control variates; the estimate is the regression
    intercept. ``budget_inner=None`` uses exact inner means.
    """
    ys, means = nested_inner_means(problem, budget_outer, budget_inner, rng)
    h = problem.f(means)
    n = h.size
    if n == 1:
        return ReferenceValue(float(h[0]), math.inf, budget_outer, budget_inner)
    if control_variates and problem.outer_whiten is not None:
        feats = _hermite_features(problem.outer_whiten(ys), _CV_DEGREE)
        p = feats.shape[1]
        if n >= 20 * (p + 1):
            design = np.column_stack([np.ones(n), feats])
            q, r = np.linalg.qr(design)
            coef = np.linalg.solve(r, q.T @ h)
            resid = h - design @ coef
            s2 = float(resid @ resid) / (n - p - 1)
            row0 = np.linalg.solve(r.T, np.eye(p + 1)[:, 0])  # (R^-T e0), norm^2 = [(X'X)^-1]_00
            stderr = math.sqrt(s2 * float(row0 @ row0))
            return ReferenceValue(float(coef[0]), stderr, budget_outer, budget_inner, p)
    value = math.fsum(h) / n
    stderr = float(np.std(h, ddof=1)) / math.sqrt(n)
    return ReferenceValue(value, stderr, budget_outer, budget_inner)


# ---------------------------------------------------------------------------
# slopes and fits


def convergence_slope(points: Sequence) -> float:
    """Least-squares slope of log2(mse) against log2(N)."""
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 2:
        raise DegenerateInput("need at least two (N, mse) points")
    if any(not (n > 0 and e > 0) for n, e in pts):
        raise DegenerateInput("N and mse must be positive")
    x = np.log2([n for n, _ in pts])
    y = np.log2([e for _, e in pts])
    if np.ptp(x) == 0:
        raise DegenerateInput("all points share one N")
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def monotone_fit(values: Sequence[float], stderrs: Optional[Sequence[float]] = None) -> np.ndarray:
    """Nonincreasing least-squares fit, weighted by inverse variance when given."""
    y = np.asarray(values, dtype=float)
    w = None
    if stderrs is not None:
        se = np.asarray(stderrs, dtype=float)
        w = 1.0 / np.maximum(se, np.finfo(float).tiny) ** 2
    return isotonic_regression(y, weights=w, increasing=False).x


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ReferenceSpec:
    kind: str = "analytic"  # "analytic" | "nested_mc"
    budget_outer: int = 100_000
    budget_inner: Optional[int] = 1000  # None: exact inner means
    control_variates: bool = True

    def __post_init__(self):
        if self.kind not in ("analytic", "nested_mc"):
            raise InvalidParameter(f"reference kind must be 'analytic' or 'nested_mc', got {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: object  # Problem1Spec | Problem2Spec
    methods: tuple = ("sparse_grid", "simple")
    m_values: tuple = tuple(range(8, 17))
    r: int = 100
    master_seed: int = 0
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    threads: int = 1

    def __post_init__(self):
        if self.r < 1:
            raise InvalidParameter("r must be at least 1")
        if not self.m_values or any(int(m) != m or m < 0 for m in self.m_values):
            raise InvalidParameter("m_values must be a nonempty list of nonnegative integers")
        if not self.methods:
            raise InvalidParameter("at least one method is required")
        for method in self.methods:
            if method not in METHODS:
                raise InvalidParameter(f"unknown method {method!r}; choose from {METHODS}")
        if self.threads < 1:
            raise InvalidParameter("threads must be at least 1")


@dataclass
class CellResult:
    method: str
    m: int
    n: int
    estimates: list
    seed_paths: list
    mse: float
    mse_stderr: float
    samples_used: int
    f_evals: int
    wall_time: float


@dataclass
class RunReport:
    problem: str
    scenario: str
    truth_or_reference: float
    reference_stderr: float
    reference: dict
    cells: list
    slopes: dict
    config: dict

    def cell(self, method: str, m: int) -> CellResult:
        for c in self.cells:
            if c.method == method and c.m == m:
                return c
        raise KeyError((method, m))

    def to_dict(self) -> dict:
        return asdict(self)


def mse_summary(estimates: Sequence[float], target: float) -> tuple:
    """(mse, stderr of mse) from replicated estimates against ``target``."""
    sq = np.array([(target - e) ** 2 for e in estimates])
    mse = math.fsum(sq) / sq.size
    stderr = float(np.std(sq, ddof=1)) / math.sqrt(sq.size) if sq.size > 1 else math.inf
    return mse, stderr


def problem_label(spec) -> tuple:
    if isinstance(spec, Problem1Spec):
        return "p1", ""
    if isinstance(spec, Problem2Spec):
        return "p2", spec.scenario
    raise InvalidParameter(f"unknown problem spec {spec!r}")


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    problem = build_problem(cfg.problem)
    master = make_stream(cfg.master_seed)
    ref = cfg.reference
    if ref.kind == "analytic":
        if problem.truth is None:
            raise MissingTruth(f"problem {problem.name} has no analytic value; use a nested_mc reference")
        target, target_se, ref_info = problem.truth, 0.0, {"kind": "analytic"}
    else:
        rs = substream(master, cell_index("reference", ref.budget_outer, ref.budget_inner))
        rv = reference_value(problem, ref.budget_outer, ref.budget_inner, rs, ref.control_variates)
        target, target_se = rv.value, rv.stderr
        ref_info = {"kind": "nested_mc", **asdict(rv)}

    tasks = [(method, m, i) for method in cfg.methods for m in cfg.m_values for i in range(cfg.r)]

    def work(task):
        method, m, i = task
        t0 = time.perf_counter()
        rec = run_method(problem, method, m, substream(master, cell_index(method, m, i)))
        return rec, time.perf_counter() - t0

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    cells = []
    for c, (method, m) in enumerate((mt, mm) for mt in cfg.methods for mm in cfg.m_values):
        chunk = results[c * cfg.r:(c + 1) * cfg.r]
        recs = [rec for rec, _ in chunk]
        estimates = [rec.value for rec in recs]
        mse, mse_se = mse_summary(estimates, target)
        cells.append(CellResult(
            method=method,
            m=m,
            n=1 << m,
            estimates=estimates,
            seed_paths=[list(rec.seed_path) for rec in recs],
            mse=mse,
            mse_stderr=mse_se,
            samples_used=recs[0].samples_used,
            f_evals=recs[0].f_evals,
            wall_time=sum(t for _, t in chunk),
        ))

    slopes = {}
    for method in cfg.methods:
        pts = [(c.n, c.mse) for c in cells if c.method == method]
        try:
            slopes[method] = convergence_slope(pts)
        except DegenerateInput:
            slopes[method] = math.nan

    name, scenario = problem_label(cfg.problem)
    return RunReport(
        problem=name,
        scenario=scenario,
        truth_or_reference=float(target),
        reference_stderr=float(target_se),
        reference=ref_info,
        cells=cells,
        slopes=slopes,
        config=config_to_dict(cfg),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["methods"] = list(cfg.methods)
    out["m_values"] = list(cfg.m_values)
    return out
