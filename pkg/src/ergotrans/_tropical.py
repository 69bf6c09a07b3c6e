"""Exact max-plus primitives on raw block-transition data.

All cycle-mean arithmetic runs in Fraction space: double-precision floats
are dyadic rationals, so sums, differences and means of weights are exact
and the computed maximum cycle mean is the true maximum over the float
inputs, bit for bit.  Shared by the spectral preconditioner and the
zero-temperature solvers.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import ConvergenceError


def karp_cycle_mean(weights, succ):
    """Maximum cycle mean and one critical cycle, exactly.

    Parameters
    ----------
    weights : (n, d) array
        Edge weight from state ``b`` under symbol ``a``.
    succ : (n, d) int array
        Successor state of ``b`` under ``a``.

    Returns
    -------
    (Fraction, list[int])
        The maximum cycle mean and a cycle attaining it (rotated to start
        at its smallest state).
    """
    n, d = weights.shape
    w_frac = [[Fraction(float(weights[b, a])) for a in range(d)] for b in range(n)]

    dist = [[None] * n for _ in range(n + 1)]
    parent = [[None] * n for _ in range(n + 1)]
    dist[0][0] = Fraction(0)
    for k in range(1, n + 1):
        row, prow, prev = dist[k], parent[k], dist[k - 1]
        for b in range(n):
            base = prev[b]
            if base is None:
                continue
            for a in range(d):
                t = int(succ[b, a])
                cand = base + w_frac[b][a]
                if row[t] is None or cand > row[t]:
                    row[t] = cand
                    prow[t] = b
    best = None
    best_v = None
    for v in range(n):
        if dist[n][v] is None:
            continue
        inner = None
        for k in range(n):
            if dist[k][v] is None:
                continue
            mean = (dist[n][v] - dist[k][v]) / (n - k)
            if inner is None or mean < inner:
                inner = mean
        if inner is not None and (best is None or inner > best):
            best, best_v = inner, v
    if best is None:
        raise ConvergenceError("cycle-mean search found no closed walk", iterations=n)

    # any cycle on the optimal n-edge walk to the maximizing vertex is critical
    walk = [best_v]
    for k in range(n, 0, -1):
        walk.append(parent[k][walk[-1]])
    walk.reverse()
    seen = {}
    cycle = None
    for pos, v in enumerate(walk):
        if v in seen:
            cycle = walk[seen[v]:pos]
            break
        seen[v] = pos
    rotate = cycle.index(min(cycle))
    cycle = cycle[rotate:] + cycle[:rotate]
    return best, cycle


def calibrated_subaction(weights, succ, mean_frac, cycle):
    """Exact fixed point of the reduced Bellman operator, gauged max 0.

    Longest-walk values toward a vertex of the critical cycle; stabilizes
    within the iteration cap exactly when no reduced cycle is positive,
    i.e. when ``mean_frac`` is the true maximum cycle mean.
    """
    n, d = weights.shape
    red = [[Fraction(float(weights[b, a])) - mean_frac for a in range(d)]
           for b in range(n)]
    target = cycle[0]
    values = [None] * n
    values[target] = Fraction(0)
    cap = 2 * n + 4
    for _ in range(cap):
        changed = False
        new = list(values)
        for b in range(n):
            best = Fraction(0) if b == target else None
            for a in range(d):
                t = int(succ[b, a])
                if values[t] is None:
                    continue
                cand = red[b][a] + values[t]
                if best is None or cand > best:
                    best = cand
            if best is not None and (new[b] is None or best > new[b]):
                new[b] = best
                changed = True
        values = new
        if not changed:
            break
    else:
        raise ConvergenceError(
            "subaction value iteration did not stabilize; "
            "the supplied mean is below the maximum cycle mean",
            iterations=cap,
        )
    if any(v is None for v in values):
        raise ConvergenceError("subaction iteration left unreachable states",
                               iterations=cap)
    v = np.array([float(x) for x in values])
    return v - v.max()
