"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np

from nestmc.problems import observation_covariance, problem2_posterior
from nestmc.sampling import make_stream


def naive_blocks(y):
    """Both block families built with Python lists, straight from the definitions.

    Returns ``(value, index)``: ``value[d]`` is the list of level-``d`` value
    blocks (each ordered by the split key) and ``index[d]`` the sorted index
    blocks (``index[0]`` is empty).
    """
    n, k_dims = y.shape
    m = n.bit_length() - 1
    value = [[list(range(n))]]
    index = [[]]
    for d in range(1, m + 1):
        k = (d - 1) % k_dims
        v_level, i_level = [], []
        for parent in value[d - 1]:
            half = len(parent) // 2
            by_key = sorted(parent, key=lambda i: (y[i, k], i))
            by_idx = sorted(parent)
            v_level += [by_key[:half], by_key[half:]]
            i_level += [by_idx[:half], by_idx[half:]]
        value.append(v_level)
        index.append(i_level)
    return value, index


def naive_rank(y):
    """Averaged-tie rank / (N - 1), by counting."""
    n = y.shape[0]
    out = np.zeros_like(y, dtype=float)
    for c in range(y.shape[1]):
        col = y[:, c]
        for i in range(n):
            less = np.sum(col < col[i])
            equal = np.sum(col == col[i])
            out[i, c] = (less + (equal - 1) / 2) / (n - 1)
    return out


def naive_sparse_grid(x, y, f):
    """Value of the sparse-grid estimator evaluated term by term from sets."""
    value, index = naive_blocks(y)
    total = 0.0
    for d, blocks in enumerate(value):
        total += sum(f(x[b].mean(axis=0)) for b in blocks) / 2 ** d
    for d in range(1, len(index)):
        total -= sum(f(x[b].mean(axis=0)) for b in index[d]) / 2 ** d
    return total


def check_plan_invariants(batch, plan):
    """Assert every structural property of a partition plan."""
    n, m = batch.n, plan.m
    assert n == 1 << m
    for d in range(m + 1):
        vb = plan.blocks(d)
        assert vb.shape == (1 << d, 1 << (m - d))
        assert np.array_equal(np.sort(vb.ravel()), np.arange(n))
        if d == 0:
            continue
        ib = plan.blocks(d, "index")
        assert ib.shape == vb.shape
        assert np.array_equal(np.sort(ib.ravel()), np.arange(n))
        k = plan.split_dim(d)
        parents = plan.blocks(d - 1)
        for u, parent in enumerate(parents):
            pset = set(parent.tolist())
            for fam in (vb, ib):
                c0, c1 = set(fam[2 * u].tolist()), set(fam[2 * u + 1].tolist())
                assert not c0 & c1
                assert c0 | c1 == pset
            lo, hi = vb[2 * u], vb[2 * u + 1]
            assert batch.y[lo, k].max() <= batch.y[hi, k].min()
            assert ib[2 * u].max() < ib[2 * u + 1].min()


def problem1_truth_by_states(M, p):
    """Exact target for problem 1 by summing over every sign pattern."""
    total = 0.0
    for pattern in range(1 << M):
        pos = bin(pattern).count("1")
        like1 = p ** pos * (1 - p) ** (M - pos)
        like0 = (1 - p) ** pos * p ** (M - pos)
        total += 0.5 * max(like1, like0)
    return total


def binom_se(p, n):
    return math.sqrt(p * (1 - p) / n)


def conjugacy_round_trip(spec, trials, seed):
    """Draw logOR ~ prior, Y | logOR, logOR' ~ posterior(Y); return logOR' draws."""
    rng = make_stream(seed)
    t = spec.inputs
    prior_mean, prior_cov = np.asarray(t.log_or_mean), np.asarray(t.log_or_cov)
    log_or = prior_mean + rng.normal((trials, 3)) @ np.linalg.cholesky(prior_cov).T
    y = log_or + rng.normal((trials, 3)) @ np.linalg.cholesky(observation_covariance(spec)).T
    post0 = problem2_posterior(spec, np.zeros(3))
    # posterior mean is affine in y; row i is the response to the unit vector e_i
    gain = np.array([problem2_posterior(spec, e).mean - post0.mean for e in np.eye(3)])
    means = post0.mean + y @ gain
    return means + rng.normal((trials, 3)) @ post0.chol_lower.T


def moments_within_3se(draws, mean, cov):
    n = draws.shape[0]
    ok_mean = np.all(np.abs(draws.mean(axis=0) - mean) < 3 * np.sqrt(np.diag(cov) / n))
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / n)
    ok_cov = np.all(np.abs(np.cov(draws.T) - cov) < 3 * se)
    return bool(ok_mean and ok_cov)
