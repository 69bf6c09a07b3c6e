"""Transfer operator on block states, dominant eigendata, pressure, Gibbs measure.

A depth-m cost is handled as an order-1 chain on the alphabet of
(m-1)-blocks.  For a block ``b`` (the first m-1 symbols of y) and a
prepended symbol ``a``, the full word is ``a.b`` with canonical index
``a + d*b`` and its own leading block is ``succ(b, a) = (a + d*b) mod d**(m-1)``.

The operator acting on functions of blocks is

    (L u)(b) = sum_x sum_a exp(c(x, a.b)) * u(succ(b, a)).

Stored matrices follow the measure-evolution orientation ``M[b', b]``
(rows index successor states, columns current states), so the operator
above is ``u -> M.T @ u`` and its eigen-measure direction is ``M @ v``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, SpecValidationError
from .symbolic import CostTensor, lift_depth

__all__ = [
    "TransferMatrix",
    "PerronSolution",
    "NormalizedCost",
    "MarkovMeasure",
    "effective_cost",
    "block_count",
    "action_view",
    "successor_table",
    "assemble_transfer",
    "perron_solve",
    "normalize_cost",
    "pressure",
    "gibbs_measure",
    "stationary_vector",
    "nu_cylinder_table",
    "nu_cylinder",
    "markov_entropy_rate",
]

DEFAULT_EIGEN_TOL = 1e-13
MAX_POWER_ITER = 10**6


def effective_cost(cost):
    """Lift depth-1 costs to depth 2 so every solver sees a block chain."""
    return lift_depth(cost, 2) if cost.depth == 1 else cost


def block_count(cost):
    """Number of block states d**(m-1) for an effective (depth >= 2) cost."""
    return cost.alphabet_size ** (cost.depth - 1)


def action_view(cost):
    """Reshape the flat values to ``ct[x, b, a] = c(x, a.b)``.

    Works because the canonical index of ``a.b`` is ``a + d*b``, which is
    exactly the C-order flattening of axes (b, a).
    """
    d = cost.alphabet_size
    n_blocks = block_count(cost)
    return cost.values.reshape(cost.num_x, n_blocks, d)


def successor_table(alphabet_size, n_blocks):
    """``succ[b, a]``: leading block of the word ``a.b``."""
    b = np.arange(n_blocks)[:, None]
    a = np.arange(alphabet_size)[None, :]
    return (a + alphabet_size * b) % n_blocks


@dataclass(frozen=True)
class TransferMatrix:
    """Dense transfer weights on block states.

    ``matrix[b', b] = sum_x exp(c(x, a.b))`` for the unique symbol ``a``
    with ``succ(b, a) = b'`` (zero when no such symbol exists).  ``per_x``
    keeps the x-resolved weights for plan construction;
    ``matrix == per_x.sum(axis=0)``.
    """

    matrix: np.ndarray
    per_x: np.ndarray
    alphabet_size: int
    depth: int

    @property
    def size(self):
        return self.matrix.shape[0]


def assemble_transfer(cost):
    """Assemble the block-state transfer matrix of a finite-memory cost."""
    cost = effective_cost(cost)
    d = cost.alphabet_size
    n_blocks = block_count(cost)
    weights = np.exp(action_view(cost))
    succ = successor_table(d, n_blocks)
    per_x = np.zeros((cost.num_x, n_blocks, n_blocks))
    cols = np.arange(n_blocks)
    for a in range(d):
        per_x[:, succ[:, a], cols] = weights[:, :, a]
    return TransferMatrix(per_x.sum(axis=0), per_x, d, cost.depth)


@dataclass(frozen=True)
class PerronSolution:
    """Dominant eigendata of a transfer matrix.

    ``h`` is the positive eigenfunction of the operator (``M.T h = lam h``),
    gauge-fixed by ``min(h) = 1``.  ``left`` is the eigen-measure direction
    (``M left = lam left``), normalized to sum 1.
    """

    lam: float
    h: np.ndarray
    left: np.ndarray
    residual: float
    gap_estimate: float
    iterations: int


def _power_iterate(op, size, tol, max_iter):
    """Collatz-Wielandt power iteration for a positivity-preserving map."""
    v = np.ones(size)
    gap = 0.0
    prev_diff = None
    for it in range(1, max_iter + 1):
        w = op(v)
        ratios = w / v
        lam = 0.5 * (ratios.min() + ratios.max())
        spread = ratios.max() - ratios.min()
        w_next = w / w.max()
        diff = np.abs(w_next - v / v.max()).max()
        # contraction ratios below the noise floor carry no information
        if prev_diff is not None and prev_diff > 1e-12 and diff > 1e-14:
            gap = diff / prev_diff
        prev_diff = diff
        v = w_next
        # Collatz-Wielandt: lam is bracketed by the ratio spread, and the
        # gauged residual must also clear tol before we stop.
        if spread <= tol * lam and np.abs(op(v) - lam * v).max() <= tol * lam * v.min():
            return lam, v, min(gap, 1.0), it
    raise ConvergenceError(
        f"power iteration did not converge (last spread {spread:.3e})",
        residual=spread / max(lam, 1e-300),
        iterations=max_iter,
    )


def perron_solve(transfer, tol=DEFAULT_EIGEN_TOL, max_iter=MAX_POWER_ITER):
    """Dominant eigenvalue, eigenfunction and eigen-measure by power iteration.

    Parameters
    ----------
    transfer : TransferMatrix or array_like
        Nonnegative primitive matrix in ``matrix[b', b]`` orientation.
    tol : float
        Relative residual tolerance on the eigen-equation.

    Returns
    -------
    PerronSolution
    """
    mat = transfer.matrix if isinstance(transfer, TransferMatrix) else np.asarray(transfer, float)
    size = mat.shape[0]
    lam, v, gap, it_h = _power_iterate(lambda u: mat.T @ u, size, tol, max_iter)
    _, w, _, it_l = _power_iterate(lambda u: mat @ u, size, tol, max_iter)
    h = v / v.min()
    left = w / w.sum()
    residual = float(np.abs(mat.T @ h - lam * h).max() / lam)
    if gap > 1.0 - 1e-8:
        warnings.warn(
            f"estimated subdominant ratio {gap:.12f} is close to 1; "
            "dominant eigendata may be ill-conditioned",
            RuntimeWarning,
            stacklevel=2,
        )
    return PerronSolution(float(lam), h, left, residual, float(gap), it_h + it_l)


def _log_transfer_apply(ct, succ, u):
    """One log-domain application of the operator: LSE over (x, a)."""
    t = ct + u[succ][None, :, :]
    mx = t.max(axis=(0, 2))
    return mx + np.log(np.exp(t - mx[None, :, None]).sum(axis=(0, 2)))


def _scaled_dense_eig(ct, succ, n_blocks):
    """Dominant log-eigendata via a tropically preconditioned dense solve.

    Conjugating by the calibrated subaction and subtracting the maximum
    cycle mean puts every weight in (0, 1], so the reduced matrix has its
    dominant eigenvalue in [1, #X*d] and the dense eigensolve is perfectly
    conditioned regardless of how strongly the cost is scaled.
    """
    from ._tropical import calibrated_subaction, karp_cycle_mean

    weights = ct.max(axis=0)
    mean_frac, cycle = karp_cycle_mean(weights, succ)
    v_cal = calibrated_subaction(weights, succ, mean_frac, cycle)
    mean = float(mean_frac)
    reduced = ct + v_cal[succ][None, :, :] - v_cal[None, :, None] - mean
    mat = np.zeros((n_blocks, n_blocks))
    cols = np.arange(n_blocks)
    for a in range(succ.shape[1]):
        mat[succ[:, a], cols] += np.exp(reduced[:, :, a]).sum(axis=0)
    eigvals, eigvecs = np.linalg.eig(mat.T)
    i = int(np.argmax(eigvals.real))
    h_tilde = eigvecs[:, i].real
    h_tilde = np.abs(h_tilde)
    h_tilde = np.clip(h_tilde, 1e-300, None)
    log_lam = float(np.log(eigvals[i].real) + mean)
    u = np.log(h_tilde) + v_cal
    return log_lam, u - u.min()


def log_perron(cost, tol=DEFAULT_EIGEN_TOL, max_iter=MAX_POWER_ITER, fast_iter=400):
    """Log-domain dominant eigendata: (log lambda, log h, residual, iterations).

    Never exponentiates the cost globally, so arbitrarily scaled costs
    (large inverse temperatures) are safe.  ``log h`` is gauged to
    ``min = 0``.  Log-sum-exp power iteration first; when the chain is
    nearly periodic (contraction ratio close to -1, common for strongly
    scaled costs with a critical 2-cycle) it falls back to a preconditioned
    dense solve, polished and certified by the same log-domain residual.
    """
    cost = effective_cost(cost)
    ct = action_view(cost)
    n_blocks = block_count(cost)
    succ = successor_table(cost.alphabet_size, n_blocks)
    ct_scale = float(np.abs(ct).max())

    def spread_tol(scale_extra):
        # spreads below the float resolution of the quantities involved are
        # unreachable; the tolerance scales with their magnitude
        return max(tol, 4e-15 * max(1.0, ct_scale, scale_extra))

    u = np.zeros(n_blocks)
    it = 0
    for it in range(1, min(fast_iter, max_iter) + 1):
        v = _log_transfer_apply(ct, succ, u)
        diff = v - u
        spread = diff.max() - diff.min()
        log_lam = 0.5 * (diff.max() + diff.min())
        u = v - v.min()
        if spread <= spread_tol(max(float(np.abs(v).max()), abs(log_lam))):
            return float(log_lam), u, float(spread), it

    # fallback: preconditioned dense eigensolve, then certify in log domain
    log_lam, u = _scaled_dense_eig(ct, succ, n_blocks)
    best = None
    for polish in range(60):
        v = _log_transfer_apply(ct, succ, u)
        diff = v - u
        spread = float(diff.max() - diff.min())
        log_lam = 0.5 * (diff.max() + diff.min())
        if best is None or spread < best[2]:
            best = (float(log_lam), u.copy(), spread, it + polish + 1)
        u = v - v.min()
        if spread <= spread_tol(max(float(np.abs(v).max()), abs(log_lam))):
            return float(log_lam), u, spread, it + polish + 1
    log_lam, u, spread, iters = best
    scale = max(1.0, ct_scale, float(np.abs(u).max()), abs(log_lam))
    if spread <= max(tol, 3e-14 * scale):
        return log_lam, u, spread, iters
    raise ConvergenceError(
        f"log-domain eigensolve did not certify (residual spread {spread:.3e})",
        residual=spread,
        iterations=iters,
    )


def pressure(cost, tol=DEFAULT_EIGEN_TOL):
    """Topological pressure of a finite-memory cost: log of the dominant eigenvalue."""
    log_lam, _, _, _ = log_perron(cost, tol=tol)
    return log_lam


@dataclass(frozen=True)
class NormalizedCost:
    """Cost whose weights sum to one over all (x, preimage) pairs at every block.

    ``log_lambda`` and ``log_h`` record the eigendata used to normalize
    (both zero for costs that are normalized by construction).
    """

    cost: CostTensor
    log_lambda: float
    log_h: np.ndarray

    def __post_init__(self):
        ct = action_view(self.cost)
        sums = np.exp(ct).sum(axis=(0, 2))
        scale = max(1.0, float(np.abs(self.cost.values).max()), abs(self.log_lambda))
        tol = 1e-12 * scale
        err = float(np.abs(sums - 1.0).max())
        if err > tol:
            raise SpecValidationError(
                f"normalization defect {err:.3e} exceeds tolerance {tol:.3e}"
            )

    @property
    def alphabet_size(self):
        return self.cost.alphabet_size

    @property
    def depth(self):
        return self.cost.depth


def normalize_cost(cost, sol=None, tol=DEFAULT_EIGEN_TOL):
    """Normalize a cost with its dominant eigendata.

    ``cbar(x, a.b) = c(x, a.b) + log h(succ(b, a)) - log h(b) - log lambda``.
    When ``sol`` is omitted the eigenproblem is solved in log domain, which
    keeps the operation safe for strongly scaled costs.
    """
    cost = effective_cost(cost)
    if sol is None:
        log_lam, u, _, _ = log_perron(cost, tol=tol)
    else:
        if sol.residual > 1e-8:
            raise SpecValidationError(
                f"eigendata residual {sol.residual:.3e} too large to normalize against"
            )
        log_lam = float(np.log(sol.lam))
        u = np.log(sol.h)
    ct = action_view(cost)
    succ = successor_table(cost.alphabet_size, block_count(cost))
    cbar = ct + u[succ][None, :, :] - u[None, :, None] - log_lam
    flat = cbar.reshape(cost.num_x, cost.word_count)
    return NormalizedCost(CostTensor(flat, cost.alphabet_size, cost.depth), log_lam, u)


@dataclass(frozen=True)
class MarkovMeasure:
    """Shift-invariant block-Markov measure on the sequence space.

    ``q[b', b]`` is the probability of prepending the symbol that leads
    from block ``b`` to block ``b'`` (column-stochastic on supported
    columns); ``p`` is a stationary vector (``q @ p = p``).  Deterministic
    0/1 columns encode measures supported on periodic orbits; column
    entries on unsupported states are conventional placeholders.
    """

    q: np.ndarray
    p: np.ndarray
    alphabet_size: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        n = p.size
        if q.shape != (n, n):
            raise SpecValidationError(f"q has shape {q.shape}, expected ({n}, {n})")
        if (p < -1e-15).any():
            raise SpecValidationError("stationary vector has negative entries")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > 1e-12:
            raise SpecValidationError(f"stationary vector sums to {p.sum()!r}")
        p = p / p.sum()
        support = p > 0.0
        col_defect = np.abs(q[:, support].sum(axis=0) - 1.0)
        if col_defect.size and col_defect.max() > 1e-12:
            raise SpecValidationError(
                f"column sums deviate from 1 by {col_defect.max():.3e} on supported states"
            )
        if np.abs(q @ p - p).max() > 1e-12:
            raise SpecValidationError("stationary vector fails q @ p = p at 1e-12")
        q = q.copy()
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "support", support)

    @property
    def n_blocks(self):
        return self.p.size

    @property
    def block_len(self):
        n, d, k = self.n_blocks, self.alphabet_size, 0
        while d**k < n:
            k += 1
        return k


def stationary_vector(q, tol=1e-12, refine_iter=10000):
    """Stationary vector of a column-stochastic matrix via a bordered solve."""
    n = q.shape[0]
    a = np.vstack([q - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    p, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    if np.abs(q @ p - p).max() > tol:
        for it in range(refine_iter):
            p_next = q @ p
            p_next = p_next / p_next.sum()
            if np.abs(p_next - p).max() <= 0.1 * tol:
                p = p_next
                break
            p = p_next
        if np.abs(q @ p - p).max() > tol:
            raise ConvergenceError(
                "stationary vector iteration did not converge",
                residual=float(np.abs(q @ p - p).max()),
                iterations=refine_iter,
            )
    return p


def gibbs_measure(normalized):
    """Invariant measure of the normalized operator's dual (the block chain).

    ``q[b', b] = sum_x exp(cbar(x, a.b))`` and ``p`` is its stationary
    vector; for a normalized cost the chain is column-stochastic, so the
    dual fixed point is exactly the stationary block-Markov measure.
    """
    cost = normalized.cost
    d = cost.alphabet_size
    n_blocks = block_count(cost)
    weights = np.exp(action_view(cost)).sum(axis=0)
    weights = weights / weights.sum(axis=1)[:, None]
    succ = successor_table(d, n_blocks)
    q = np.zeros((n_blocks, n_blocks))
    cols = np.arange(n_blocks)
    for a in range(d):
        q[succ[:, a], cols] = weights[:, a]
    p = stationary_vector(q)
    return MarkovMeasure(q, p, d)


def nu_cylinder_table(measure, length):
    """Masses of all cylinders of a given length, indexed canonically."""
    d = measure.alphabet_size
    n_blocks = measure.n_blocks
    block_len = measure.block_len
    if length == 0:
        return np.array([1.0])
    if length <= block_len:
        step = d**length
        return measure.p.reshape(-1, step).sum(axis=0)
    table = measure.p
    for n in range(block_len + 1, length + 1):
        idx = np.arange(d**n)
        table = measure.q[idx % n_blocks, (idx // d) % n_blocks] * table[idx // d]
    return table


def nu_cylinder(measure, word):
    """Mass of a single cylinder [w0 ... w_{n-1}]."""
    d = measure.alphabet_size
    n_blocks = measure.n_blocks
    block_len = measure.block_len
    n = len(word)
    idx = 0
    for k, s in enumerate(word):
        idx += int(s) * d**k
    if n <= block_len:
        step = d**n
        return float(measure.p.reshape(-1, step).sum(axis=0)[idx]) if n else 1.0
    mass = measure.p[(idx // d ** (n - block_len)) % n_blocks]
    for k in range(n - block_len):
        mass *= measure.q[(idx // d**k) % n_blocks, (idx // d ** (k + 1)) % n_blocks]
    return float(mass)


def markov_entropy_rate(measure):
    """Kolmogorov entropy of the block-Markov measure, in nats."""
    q = measure.q
    terms = np.where(q > 0.0, q * np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    return float(-(terms.sum(axis=0) * measure.p).sum())
