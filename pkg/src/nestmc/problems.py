"""Value-of-information test problems.

Both problems estimate the first term of EVSI, ``E_Y max_d E[NB_d | Y]``.

``problem1``
    A binary state ``theta`` observed through ``M`` noisy signed signals.
    Only the signs of the signals are informative, which gives a closed-form
    posterior and an exact value by enumeration.

``problem2``
    The wound-dressing decision model: four dressing types, net benefit
    driven by infection risk and cost, and a three-arm-contrast trial that
    observes the log odds ratios with Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, logit

from .errors import InvalidParameter
from .estimators import OuterFunction, max_outer
from .partition import SampleBatch
from .sampling import Bernoulli, LogNormal, MvnSpec, Normal, RngStream, Uniform, cholesky


@dataclass(frozen=True, eq=False)
class NestedProblem:
    """A generative model for ``E_Y f(E[X | Y])``.

    ``sample_joint(n, rng)`` returns ``n`` i.i.d. joint rows. The optional
    hooks are:

    * ``inner_conditional(y, n, rng)``: ``n`` draws of ``X`` given each row of
      ``y``; a 2-D ``y`` of shape ``(r, K)`` gives ``(r, n, J)``, a single row
      gives ``(n, J)``;
    * ``inner_mean(y)``: exact ``E[X | Y]`` for each row of a 2-D ``y``;
    * ``mean_x``: exact ``E[X]``;
    * ``outer_whiten(y)``: maps rows of ``y`` to i.i.d. standard normal
      coordinates, for problems whose ``Y`` marginal is Gaussian;
    * ``truth``: the exact target value.
    """

    name: str
    j_dim: int
    k_dim: int
    f: OuterFunction
    sample_joint: Callable[[int, RngStream], SampleBatch]
    truth: Optional[float] = None
    inner_conditional: Optional[Callable] = None
    inner_mean: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mean_x: Optional[np.ndarray] = None
    outer_whiten: Optional[Callable[[np.ndarray], np.ndarray]] = None
    scenario: str = ""
    spec: object = None


def _rowwise(sampler):
    """Let a batched ``(r, K) -> (r, n, J)`` sampler also take one ``Y`` row."""

    def wrapped(y, n, rng):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return sampler(y[None, :], n, rng)[0]
        return sampler(y, n, rng)

    return wrapped


# ---------------------------------------------------------------------------
# Problem 1


@dataclass(frozen=True)
class Problem1Spec:
    M: int
    p: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise InvalidParameter(f"M must be a positive integer, got {self.M}")
        if not 0.0 < self.p < 1.0:
            raise InvalidParameter(f"p must lie in (0, 1), got {self.p}")


def problem1_posterior(spec: Problem1Spec, n_positive) -> np.ndarray:
    """P(theta = 1 | Y) given the number of positive signals."""
    n_positive = np.asarray(n_positive, dtype=float)
    return expit((2.0 * n_positive - spec.M) * math.log(spec.p / (1.0 - spec.p)))


def problem1_truth(spec: Problem1Spec) -> float:
    """Exact ``E_Y max(E[theta|Y], 1 - E[theta|Y])`` by enumerating sign counts."""
    M, p = spec.M, spec.p
    terms = [
        math.comb(M, k) * max(p ** k * (1 - p) ** (M - k), p ** (M - k) * (1 - p) ** k)
        for k in range(M + 1)
    ]
    return 0.5 * math.fsum(terms)


def problem1(spec: Problem1Spec) -> NestedProblem:
    M, p = spec.M, spec.p
    theta_dist, sign_dist, mag_dist = Bernoulli(0.5), Bernoulli(p), Uniform(0.0, 1.0)

    def sample_joint(n: int, rng: RngStream) -> SampleBatch:
        theta = theta_dist.sample(rng, n).astype(float)
        b = sign_dist.sample(rng, (n, M))
        u = mag_dist.sample(rng, (n, M))
        y = (2 * b - 1) * u * (2 * theta - 1)[:, None]
        x = np.column_stack([theta, 1.0 - theta])
        return SampleBatch(x, y)

    def inner_mean(y):
        post = problem1_posterior(spec, (np.asarray(y) > 0).sum(axis=1))
        return np.column_stack([post, 1.0 - post])

    def inner_conditional(y, n, rng):
        post = problem1_posterior(spec, (y > 0).sum(axis=1))
        theta = (rng.uniform((y.shape[0], n)) < post[:, None]).astype(float)
        return np.stack([theta, 1.0 - theta], axis=-1)

    return NestedProblem(
        name="p1",
        j_dim=2,
        k_dim=M,
        f=max_outer(2),
        sample_joint=sample_joint,
        truth=problem1_truth(spec),
        inner_conditional=_rowwise(inner_conditional),
        inner_mean=inner_mean,
        mean_x=np.array([0.5, 0.5]),
        spec=spec,
    )


# ---------------------------------------------------------------------------
# Problem 2

SCENARIOS = ("EvSvG", "EvSvGvA")
DRESSINGS = ("E", "S", "G", "A")
ZERO_ARM = 1e-3
_PSSI_CLAMP = 1e-9


@dataclass(frozen=True)
class DressingInputs:
    """Fixed inputs of the wound-dressing decision model; lognormal entries give log-scale moments."""

    wtp: float = 20000.0
    ssi_qaly_loss: float = 0.12
    ssi_cost_logmean: float = 8.972
    ssi_cost_logvar: float = 0.1631 ** 2
    dressing_costs: tuple = (0.0, 5.25, 13.86, 21.39)  # E, S, G, A
    pssi_s_mean: float = 0.1380
    pssi_s_var: float = 0.0018 ** 2
    log_or_mean: tuple = (-0.05, -0.07, -0.18)  # E, G, A relative to S
    log_or_cov: tuple = ((0.07, 0.06, 0.02), (0.06, 0.22, 0.02), (0.02, 0.02, 0.05))


@dataclass(frozen=True)
class Problem2Spec:
    scenario: str = "EvSvG"
    n_participants: float = 1000
    s: float = 3.7
    inputs: DressingInputs = field(default_factory=DressingInputs)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidParameter(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.n_participants > 0:
            raise InvalidParameter("n_participants must be positive")
        if not self.s > 0:
            raise InvalidParameter("s must be positive")

    @property
    def arm_sizes(self) -> tuple:
        """(n_E, n_S, n_G, n_A) as designed; they sum to ``n_participants``."""
        n = float(self.n_participants)
        if self.scenario == "EvSvG":
            return (2 * n / 5, 2 * n / 5, n / 5, 0.0)
        return (n / 4, n / 4, n / 4, n / 4)

    @property
    def effective_arm_sizes(self) -> tuple:
        """Arm sizes with empty arms replaced by a small positive count."""
        return tuple(a if a > 0 else ZERO_ARM for a in self.arm_sizes)


def observation_covariance(spec: Problem2Spec) -> np.ndarray:
    """Covariance of the observed log odds ratios (E, G, A) around the truth."""
    n_e, n_s, n_g, n_a = spec.effective_arm_sizes
    s2 = spec.s ** 2
    cov = np.full((3, 3), s2 / n_s)
    for i, n_d in enumerate((n_e, n_g, n_a)):
        cov[i, i] = s2 * (n_s + n_d) / (n_s * n_d)
    return cov


def pssi_from_odds_ratio(pssi_s, odds_ratio):
    """Risk under a dressing whose odds of infection are ``odds_ratio`` times those of S."""
    odds = odds_ratio * (pssi_s / (1.0 - pssi_s))
    return odds / (1.0 + odds)


def net_benefit(table: DressingInputs, ssi_cost, pssi_s, log_or) -> np.ndarray:
    """Net benefit of (E, S, G, A); trailing axis of ``log_or`` is (E, G, A)."""
    ssi_cost = np.asarray(ssi_cost, dtype=float)
    pssi_s = np.asarray(pssi_s, dtype=float)
    odds_ratio = np.exp(np.asarray(log_or, dtype=float))
    p_other = pssi_from_odds_ratio(pssi_s[..., None], odds_ratio)
    risk = np.stack([p_other[..., 0], pssi_s, p_other[..., 1], p_other[..., 2]], axis=-1)
    loss = (ssi_cost + table.ssi_qaly_loss * table.wtp)[..., None]
    return -(np.asarray(table.dressing_costs) + risk * loss)


def problem2_posterior(spec: Problem2Spec, y) -> MvnSpec:
    """Conjugate Gaussian posterior of the log odds ratios (E, G, A) given ``y``."""
    t = spec.inputs
    prior_mean = np.asarray(t.log_or_mean)
    prior_prec = np.linalg.inv(np.asarray(t.log_or_cov))
    obs_prec = np.linalg.inv(observation_covariance(spec))
    cov = np.linalg.inv(prior_prec + obs_prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior_prec @ prior_mean + obs_prec @ np.asarray(y, dtype=float))
    return MvnSpec(mean, cov)


class _Posterior:
    """Posterior of the log odds ratios for many observations at once."""

    def __init__(self, spec: Problem2Spec):
        base = problem2_posterior(spec, np.zeros(3))
        self.cov = base.covariance
        self.chol = base.chol_lower
        self.offset = base.mean
        obs_prec = np.linalg.inv(observation_covariance(spec))
        self.gain = self.cov @ obs_prec  # mean(y) = offset + gain @ y

    def means(self, y: np.ndarray) -> np.ndarray:
        return self.offset + y @ self.gain.T


def _expected_risk(pssi_mean, pssi_var, log_or_mean, log_or_var, nodes=(8, 32)):
    """E[pssi_from_odds_ratio(P, exp(L))] for independent normal P and L.

    Tensor Gauss-Hermite quadrature; ``log_or_mean`` may be an array and the
    result has its shape.
    """
    zp, wp = np.polynomial.hermite_e.hermegauss(nodes[0])
    zl, wl = np.polynomial.hermite_e.hermegauss(nodes[1])
    wp, wl = wp / wp.sum(), wl / wl.sum()
    pssi = np.clip(pssi_mean + math.sqrt(pssi_var) * zp, _PSSI_CLAMP, 1 - _PSSI_CLAMP)
    lor = np.asarray(log_or_mean, dtype=float)[..., None] + math.sqrt(log_or_var) * zl
    vals = expit(logit(pssi)[:, None] + lor[..., None, :])  # (..., np, nl)
    return np.einsum("...ij,i,j->...", vals, wp, wl)


def problem2(spec: Problem2Spec) -> NestedProblem:
    t = spec.inputs
    ssi_cost_dist = LogNormal(t.ssi_cost_logmean, t.ssi_cost_logvar)
    pssi_dist = Normal(t.pssi_s_mean, t.pssi_s_var)
    prior = MvnSpec(np.asarray(t.log_or_mean), np.asarray(t.log_or_cov))
    obs_chol = cholesky(observation_covariance(spec))
    post = _Posterior(spec)
    loss_mean = math.exp(t.ssi_cost_logmean + t.ssi_cost_logvar / 2) + t.ssi_qaly_loss * t.wtp
    costs = np.asarray(t.dressing_costs)

    def draw_pssi(rng, size):
        return np.clip(pssi_dist.sample(rng, size), _PSSI_CLAMP, 1 - _PSSI_CLAMP)

    def sample_joint(n: int, rng: RngStream) -> SampleBatch:
        ssi_cost = ssi_cost_dist.sample(rng, n)
        pssi_s = draw_pssi(rng, n)
        log_or = prior.sample(rng, n)
        y = log_or + rng.normal((n, 3)) @ obs_chol.T
        return SampleBatch(net_benefit(t, ssi_cost, pssi_s, log_or), y)

    def inner_conditional(y, n, rng):
        r = y.shape[0]
        ssi_cost = ssi_cost_dist.sample(rng, (r, n))
        pssi_s = draw_pssi(rng, (r, n))
        log_or = post.means(y)[:, None, :] + rng.normal((r, n, 3)) @ post.chol.T
        return net_benefit(t, ssi_cost, pssi_s, log_or)

    def expected_nb(log_or_means, log_or_vars):
        # SSIcost is independent of the risks, so E[NB] only needs E[risk]
        risk = [_expected_risk(t.pssi_s_mean, t.pssi_s_var, log_or_means[..., i], log_or_vars[i]) for i in range(3)]
        p_s = np.full(np.shape(risk[0]), t.pssi_s_mean)
        stacked = np.stack([risk[0], p_s, risk[1], risk[2]], axis=-1)
        return -(costs + stacked * loss_mean)

    def inner_mean(y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.empty((y.shape[0], 4))
        step = 4096
        for start in range(0, y.shape[0], step):
            out[start:start + step] = expected_nb(post.means(y[start:start + step]), np.diag(post.cov))
        return out

    mean_x = expected_nb(np.asarray(t.log_or_mean), np.diag(np.asarray(t.log_or_cov)))
    # marginally Y ~ N(prior mean, prior cov + observation cov)
    marg_chol = cholesky(np.asarray(t.log_or_cov) + observation_covariance(spec))

    def outer_whiten(y):
        centred = np.atleast_2d(np.asarray(y, dtype=float)) - np.asarray(t.log_or_mean)
        return solve_triangular(marg_chol, centred.T, lower=True).T

    return NestedProblem(
        name="p2",
        j_dim=4,
        k_dim=3,
        f=max_outer(4),
        sample_joint=sample_joint,
        truth=None,
        inner_conditional=_rowwise(inner_conditional),
        inner_mean=inner_mean,
        mean_x=mean_x,
        outer_whiten=outer_whiten,
        scenario=spec.scenario,
        spec=spec,
    )


def build_problem(spec) -> NestedProblem:
    if isinstance(spec, Problem1Spec):
        return problem1(spec)
    if isinstance(spec, Problem2Spec):
        return problem2(spec)
    raise InvalidParameter(f"unknown problem spec {spec!r}")
