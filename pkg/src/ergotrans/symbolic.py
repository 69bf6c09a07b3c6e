"""Alphabets, words, finite-memory cost tensors and problem documents.

Conventions used by every module in this package:

* symbols are 0-based integers in ``{0, ..., d-1}``,
* a word ``(y0, ..., y_{k-1})`` is encoded little-endian with ``y0`` least
  significant: ``index = y0 + y1*d + ... + y_{k-1} * d**(k-1)``,
* costs are stored in log scale; the weight attached to ``(x, w)`` is
  ``exp(c(x, w))``.

The little-endian choice makes sequence operations integer arithmetic:
dropping the first symbol of a word is ``index // d`` and prepending a
symbol is ``a + d * index``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SpecValidationError

__all__ = [
    "CostTensor",
    "Marginal",
    "ProblemSpec",
    "encode_word",
    "decode_word",
    "evaluate_cost",
    "lift_depth",
    "build_problem",
    "load_problem",
]


def encode_word(symbols, alphabet_size):
    """Canonical little-endian index of a word over {0, ..., d-1}."""
    index = 0
    for k, s in enumerate(symbols):
        s = int(s)
        if not 0 <= s < alphabet_size:
            raise SpecValidationError(
                f"symbol {s} at position {k} outside alphabet of size {alphabet_size}"
            )
        index += s * alphabet_size**k
    return index


def decode_word(index, length, alphabet_size):
    """Inverse of :func:`encode_word` on ``{0, ..., d**length - 1}``."""
    index = int(index)
    if not 0 <= index < alphabet_size**length:
        raise SpecValidationError(
            f"word index {index} outside range for length {length}, alphabet {alphabet_size}"
        )
    out = []
    for _ in range(length):
        out.append(index % alphabet_size)
        index //= alphabet_size
    return tuple(out)


@dataclass(frozen=True)
class CostTensor:
    """Locally constant cost ``c(x, w)`` on ``X x A**depth``, log scale.

    ``values[x, i]`` holds ``c(x, w)`` for the word ``w`` with canonical
    index ``i``.  Every entry must be finite: that is what encodes the
    locally-constant (finite Lipschitz) hypothesis.
    """

    values: np.ndarray
    alphabet_size: int
    depth: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if self.alphabet_size < 1:
            raise SpecValidationError("alphabet_size must be >= 1")
        if self.depth < 1:
            raise SpecValidationError("depth must be >= 1")
        expected = self.alphabet_size**self.depth
        if vals.ndim != 2 or vals.shape[1] != expected:
            raise SpecValidationError(
                f"cost tensor has shape {vals.shape}, expected (num_x, {expected})"
            )
        bad = ~np.isfinite(vals)
        if bad.any():
            x, w = np.argwhere(bad)[0]
            raise SpecValidationError(
                f"non-finite cost entry at x={x}, word_index={w}"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def num_x(self):
        return self.values.shape[0]

    @property
    def word_count(self):
        return self.values.shape[1]


def evaluate_cost(cost, x, word):
    """Evaluate ``c(x, y)`` on any word at least as long as the depth."""
    if len(word) < cost.depth:
        raise SpecValidationError(
            f"word of length {len(word)} shorter than cost depth {cost.depth}"
        )
    idx = encode_word(word[: cost.depth], cost.alphabet_size)
    return float(cost.values[x, idx])


def lift_depth(cost, m_target):
    """Re-index a cost at a larger depth without changing any evaluation.

    The lifted tensor reads ``m_target`` coordinates but ignores the extra
    ones; since the encoding is little-endian this is a plain tile along
    the word axis.
    """
    if m_target < cost.depth:
        raise SpecValidationError(
            f"cannot lift depth {cost.depth} cost down to {m_target}"
        )
    if m_target == cost.depth:
        return cost
    reps = cost.alphabet_size ** (m_target - cost.depth)
    vals = np.tile(cost.values, (1, reps))
    return CostTensor(vals, cost.alphabet_size, m_target)


@dataclass(frozen=True)
class Marginal:
    """Fully supported probability vector on X (weights in (0, 1], sum 1)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise SpecValidationError("marginal must be a non-empty vector")
        for i, v in enumerate(w):
            if v == 0.0:
                raise SpecValidationError(f"zero marginal mass at x={i}")
            if not np.isfinite(v) or v < 0.0:
                raise SpecValidationError(f"invalid marginal mass at x={i}")
        total = w.sum()
        if abs(total - 1.0) > 1e-12:
            raise SpecValidationError(
                f"marginal weights sum to {total!r}, expected 1"
            )
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.weights.size

    def entropy(self):
        """Shannon entropy -sum(mu log mu) in nats."""
        w = self.weights
        return float(-(w * np.log(w)).sum())


@dataclass(frozen=True)
class ProblemSpec:
    """Validated problem instance: dimensions, cost, optional mu and beta grid."""

    num_x: int
    alphabet_size: int
    depth: int
    cost: CostTensor
    mu: Marginal | None = None
    beta_grid: tuple[float, ...] | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_x < 1:
            raise SpecValidationError("num_x must be >= 1")
        if self.alphabet_size < 1:
            raise SpecValidationError("alphabet_size must be >= 1")
        if self.depth < 1:
            raise SpecValidationError("depth must be >= 1")
        if self.cost.num_x != self.num_x:
            raise SpecValidationError(
                f"cost has {self.cost.num_x} x-rows, spec declares num_x={self.num_x}"
            )
        if self.cost.alphabet_size != self.alphabet_size or self.cost.depth != self.depth:
            raise SpecValidationError("cost tensor dimensions disagree with spec fields")
        if self.mu is not None and self.mu.size != self.num_x:
            raise SpecValidationError(
                f"mu has {self.mu.size} entries, expected num_x={self.num_x}"
            )
        if self.beta_grid is not None:
            for b in self.beta_grid:
                if not (np.isfinite(b) and b > 0):
                    raise SpecValidationError(f"beta grid entry {b!r} is not a positive real")


_REQUIRED_FIELDS = ("num_x", "alphabet_size", "depth", "cost")


def build_problem(raw_spec):
    """Parse and validate a problem document.

    Parameters
    ----------
    raw_spec : str or dict
        JSON text (or an already parsed key-value tree) with fields
        ``num_x``, ``alphabet_size``, ``depth``, ``cost`` (flat array in
        canonical index order, x-major, log scale), optional ``mu`` and
        optional ``beta_grid``.

    Returns
    -------
    ProblemSpec
    """
    if isinstance(raw_spec, (str, bytes)):
        try:
            doc = json.loads(raw_spec)
        except json.JSONDecodeError as exc:
            raise SpecValidationError(f"spec document does not parse: {exc}") from exc
    else:
        doc = raw_spec
    if not isinstance(doc, dict):
        raise SpecValidationError("spec document must be a key-value tree")

    for name in _REQUIRED_FIELDS:
        if name not in doc:
            raise SpecValidationError(f"missing required field '{name}'")

    try:
        num_x = int(doc["num_x"])
        d = int(doc["alphabet_size"])
        m = int(doc["depth"])
    except (TypeError, ValueError) as exc:
        raise SpecValidationError(f"dimension fields must be integers: {exc}") from exc
    if num_x < 1 or d < 1 or m < 1:
        raise SpecValidationError("num_x, alphabet_size and depth must all be >= 1")

    flat = np.asarray(doc["cost"], dtype=float).ravel()
    n_words = d**m
    if flat.size != num_x * n_words:
        raise SpecValidationError(
            f"cost has {flat.size} entries, expected num_x * alphabet_size**depth = {num_x * n_words}"
        )
    cost = CostTensor(flat.reshape(num_x, n_words), d, m)

    mu = None
    if doc.get("mu") is not None:
        mu_w = np.asarray(doc["mu"], dtype=float)
        if mu_w.size != num_x:
            raise SpecValidationError(
                f"mu has {mu_w.size} entries, expected num_x={num_x}"
            )
        mu = Marginal(mu_w)

    beta_grid = None
    if doc.get("beta_grid") is not None:
        beta_grid = tuple(float(b) for b in doc["beta_grid"])

    extras = {k: v for k, v in doc.items() if k not in set(_REQUIRED_FIELDS) | {"mu", "beta_grid"}}
    return ProblemSpec(num_x, d, m, cost, mu, beta_grid, extras)


def load_problem(path):
    """Read a problem document from disk. Returns (spec, raw_bytes)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    return build_problem(raw.decode("utf-8")), raw
