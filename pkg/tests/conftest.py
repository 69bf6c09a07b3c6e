"""Shared fixtures: reference instances with closed-form data, random builders."""

import math

import numpy as np
import pytest

from ergotrans.symbolic import CostTensor, Marginal
from ergotrans.plans import FiniteMemoryPlan, periodic_orbit_measure, uniform_bernoulli_measure
from ergotrans.transfer import MarkovMeasure, stationary_vector, successor_table

# Two-state reference instance: per-x weight matrices [[1,1],[1,1]] and
# [[1,1],[1,2]] on two symbols, depth 2.  The summed transfer matrix is
# [[2,2],[2,3]], whose dominant eigenvalue solves lam^2 - 5 lam + 2 = 0.
REF_LAMBDA = (5.0 + math.sqrt(17.0)) / 2.0
REF_H = np.array([3.0 + math.sqrt(17.0), 5.0 + math.sqrt(17.0)])


@pytest.fixture
def two_state_cost():
    vals = np.zeros((2, 4))
    vals[1, 3] = math.log(2.0)  # word (1,1): index 1 + 2*1 = 3
    return CostTensor(vals, 2, 2)


def make_two_state_cost():
    vals = np.zeros((2, 4))
    vals[1, 3] = math.log(2.0)
    return CostTensor(vals, 2, 2)


def random_cost(rng, num_x, d, m, scale=1.0):
    return CostTensor(scale * rng.normal(size=(num_x, d**m)), d, m)


def random_marginal(rng, n):
    w = rng.uniform(0.2, 1.0, size=n)
    return Marginal(w / w.sum())


def random_markov_measure(rng, d, block_len):
    """Random fully supported block chain (admissible transitions only)."""
    n_blocks = d**block_len
    weights = rng.uniform(0.1, 1.0, size=(n_blocks, d))
    weights = weights / weights.sum(axis=1)[:, None]
    succ = successor_table(d, n_blocks)
    q = np.zeros((n_blocks, n_blocks))
    for a in range(d):
        q[succ[:, a], np.arange(n_blocks)] = weights[:, a]
    return MarkovMeasure(q, stationary_vector(q), d)


def random_plan(rng, num_x, d, m):
    """Generic fully supported finite-memory plan."""
    n_blocks = d ** (m - 1)
    raw = rng.uniform(0.1, 1.0, size=(num_x, d, n_blocks))
    jac = raw / raw.sum(axis=(0, 1))[None, None, :]
    q = np.zeros((n_blocks, n_blocks))
    succ = successor_table(d, n_blocks)
    marg = jac.sum(axis=0)  # (a, b)
    for a in range(d):
        q[succ[:, a], np.arange(n_blocks)] = marg[a, :]
    nu = MarkovMeasure(q, stationary_vector(q), d)
    return FiniteMemoryPlan(jac, nu, m)


def random_normalized_values(rng, num_x, d, m):
    """Random normalized cost values (weights sum to 1 at every block)."""
    n_blocks = d ** (m - 1)
    raw = rng.normal(size=(num_x, n_blocks, d))
    log_norms = np.log(np.exp(raw).sum(axis=(0, 2)))
    ct = raw - log_norms[None, :, None]
    idx = np.arange(d**m)
    values = np.empty((num_x, d**m))
    values[:, idx] = ct[:, idx // d, idx % d]
    return values


def copy_plan():
    """x copies the first symbol; uniform Bernoulli y-marginal (two symbols)."""
    nu = uniform_bernoulli_measure(2, 1)
    jac = np.zeros((2, 2, 2))
    for x in range(2):
        jac[x, x, :] = 0.5
    return FiniteMemoryPlan(jac, nu, 2)


def two_atom_plan():
    """Two atoms: (x=0, 0101...) and (x=1, 1010...), each mass 1/2."""
    nu = periodic_orbit_measure((0, 1), 2, 1)
    jac = np.zeros((2, 2, 2))
    jac[0, 0, 1] = 1.0  # from block (1), prepend 0, first coordinate 0
    jac[1, 1, 0] = 1.0
    # placeholder columns on unsupported blocks would go here; both blocks
    # are supported for this orbit, so nothing to fill
    return FiniteMemoryPlan(jac, nu, 2)


def scalar_entropy(weights):
    w = np.asarray(weights, float)
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())
