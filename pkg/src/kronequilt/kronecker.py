"""Stochastic Kronecker product graphs with 2x2 initiators.

Node ``i`` (1-based) owns the bit vector of ``i - 1`` written with ``d``
bits, most significant bit first. Level ``k`` of the chain therefore decides
which half of the index range the node falls in at the ``k``-th recursive
split, and ``P[i, j]`` is the product over levels of ``theta_k[b_k(i), b_k(j)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import ResourceGuardError
from .graph import EdgeList

#: Largest level count the recursive sampler accepts; edge keys are packed
#: into a single int64 as ``row * 2**d + col``.
MAX_SAMPLER_LEVELS = 31

#: Level count above which ``expected_edge_sum`` accumulates in log space.
LOG_DOMAIN_LEVELS = 30

#: Levels fused into one categorical draw by the descent.
_LEVELS_PER_DRAW = 6

_ROW_CHUNK_CELLS = 1 << 22


class RetryBudgetExceeded(RuntimeError):
    """Duplicate rejection ran longer than the configured budget."""


@dataclass(frozen=True)
class InitiatorMatrix:
    theta00: float
    theta01: float
    theta10: float
    theta11: float

    def __post_init__(self):
        values = (self.theta00, self.theta01, self.theta10, self.theta11)
        for v in values:
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"initiator entries must lie in [0, 1], got {values}")
        if not any(v > 0 for v in values):
            raise ValueError("initiator matrix needs at least one positive entry")

    @classmethod
    def from_array(cls, a) -> "InitiatorMatrix":
        a = np.asarray(a, dtype=float)
        if a.shape == (4,):
            a = a.reshape(2, 2)
        if a.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {a.shape}")
        return cls(float(a[0, 0]), float(a[0, 1]), float(a[1, 0]), float(a[1, 1]))

    def as_array(self) -> np.ndarray:
        return np.array([[self.theta00, self.theta01], [self.theta10, self.theta11]])

    @property
    def total(self) -> float:
        return self.theta00 + self.theta01 + self.theta10 + self.theta11

    @property
    def square_total(self) -> float:
        return self.theta00**2 + self.theta01**2 + self.theta10**2 + self.theta11**2

    def transpose(self) -> "InitiatorMatrix":
        return InitiatorMatrix(self.theta00, self.theta10, self.theta01, self.theta11)


THETA1 = InitiatorMatrix(0.15, 0.7, 0.7, 0.85)
THETA2 = InitiatorMatrix(0.35, 0.52, 0.52, 0.95)
PRESETS = {"theta1": THETA1, "theta2": THETA2}


@dataclass(frozen=True)
class InitiatorChain:
    """Ordered per-level initiators; describes a graph on exactly ``2**d`` nodes."""

    matrices: tuple[InitiatorMatrix, ...]

    def __post_init__(self):
        matrices = tuple(self.matrices)
        if not matrices:
            raise ValueError("chain needs at least one level")
        for m in matrices:
            if not isinstance(m, InitiatorMatrix):
                raise TypeError(f"expected InitiatorMatrix, got {type(m).__name__}")
        object.__setattr__(self, "matrices", matrices)

    @classmethod
    def repeated(cls, matrix: InitiatorMatrix, d: int) -> "InitiatorChain":
        if d < 1:
            raise ValueError(f"level count must be positive, got {d}")
        return cls((matrix,) * d)

    @property
    def d(self) -> int:
        return len(self.matrices)

    @property
    def n(self) -> int:
        return 1 << self.d

    @cached_property
    def thetas(self) -> np.ndarray:
        """``(d, 2, 2)`` array of level matrices."""
        out = np.stack([m.as_array() for m in self.matrices])
        out.setflags(write=False)
        return out

    def support_size(self) -> int:
        """Number of cells with non-zero edge probability."""
        return math.prod(int(np.count_nonzero(t)) for t in self.thetas)

    def dense(self) -> np.ndarray:
        """Explicit ``2**d x 2**d`` Kronecker product (small ``d`` only)."""
        out = np.ones((1, 1))
        for t in self.thetas:
            out = np.kron(out, t)
        return out


def config_probability(thetas: np.ndarray, x, y) -> np.ndarray:
    """Vectorised ``P`` between 0-based configurations ``x`` and ``y``."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    d = thetas.shape[0]
    out = np.ones(np.broadcast(x, y).shape)
    for k in range(d):
        shift = d - 1 - k
        out = out * thetas[k, (x >> shift) & 1, (y >> shift) & 1]
    return out


def kpgm_edge_probability(chain: InitiatorChain, i: int, j: int) -> float:
    """Probability of edge ``(i, j)`` for 1-based node ids."""
    n = chain.n
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"node ids must lie in [1, {n}], got ({i}, {j})")
    return float(config_probability(chain.thetas, i - 1, j - 1))


def expected_edge_sum(chain: InitiatorChain) -> tuple[float, float]:
    """Return ``(m, v)``: the sum of all ``P[i, j]`` and of all ``P[i, j]**2``."""
    totals = [m.total for m in chain.matrices]
    squares = [m.square_total for m in chain.matrices]
    if chain.d <= LOG_DOMAIN_LEVELS:
        return math.prod(totals), math.prod(squares)
    return _log_product(totals), _log_product(squares)


def _log_product(values) -> float:
    if any(v == 0 for v in values):
        return 0.0
    return math.exp(math.fsum(math.log(v) for v in values))


def sample_edge_count(m: float, v: float, rng: np.random.Generator, limit: int | None = None) -> int:
    """Draw the edge count from ``Normal(m, m - v)``.

    The draw is rounded half-to-even and clamped to ``[0, limit]``; with zero
    variance the rounded mean is returned without touching ``rng``.
    """
    var = m - v
    if var <= 0:
        x = float(m)
    else:
        x = float(rng.normal(m, math.sqrt(var)))
    count = max(0, int(np.rint(x)))
    if limit is not None:
        count = min(count, limit)
    return count


@dataclass(frozen=True)
class _DescentTable:
    """Alias table for one fused group of ``levels`` consecutive levels.

    Outcome ``o`` is the cell ``(o >> levels, o & (2**levels - 1))`` of the
    group's ``2**levels x 2**levels`` Kronecker block.
    """

    accept: np.ndarray
    alias: np.ndarray
    weights: np.ndarray  # unnormalised product of the group's entries per outcome
    levels: int


def _alias_table(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Vose's construction.
    k = probs.size
    scaled = probs * (k / probs.sum())
    accept = np.ones(k)
    alias = np.arange(k)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        accept[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    # Leftovers are 1 up to rounding; zero-weight outcomes must never be kept.
    accept[probs == 0] = 0.0
    return accept, alias


def _descent_tables(thetas: np.ndarray) -> list[_DescentTable]:
    # Consecutive levels are fused into one categorical over the cells of
    # their Kronecker block; the law of the descent is unchanged, it just
    # uses fewer draws.
    tables = []
    d = thetas.shape[0]
    for start in range(0, d, _LEVELS_PER_DRAW):
        group = thetas[start : start + _LEVELS_PER_DRAW]
        block = np.ones((1, 1))
        for t in group:
            block = np.kron(block, t)
        weights = block.ravel()
        accept, alias = _alias_table(weights)
        tables.append(_DescentTable(accept, alias, weights, group.shape[0]))
    return tables


@lru_cache(maxsize=128)
def _chain_tables(chain: InitiatorChain) -> list[_DescentTable]:
    return _descent_tables(chain.thetas)


def descend(chain: InitiatorChain, count: int, rng: np.random.Generator, with_probability: bool = False):
    """Run ``count`` independent recursive quadrisections.

    Returns 0-based ``(rows, cols)``; each pair lands on cell ``(i, j)`` with
    probability ``P[i, j] / m``. With ``with_probability`` the cell
    probabilities ``P[rows, cols]`` are returned as a third array.
    """
    rows = np.zeros(count, dtype=np.int64)
    cols = np.zeros(count, dtype=np.int64)
    prob = np.ones(count) if with_probability else None
    for table in _chain_tables(chain):
        k = table.accept.size
        u = rng.random(count) * k
        idx = u.astype(np.int64)
        np.minimum(idx, k - 1, out=idx)
        idx = np.where(u - idx < table.accept[idx], idx, table.alias[idx])
        rows <<= table.levels
        cols <<= table.levels
        rows |= idx >> table.levels
        cols |= idx & ((1 << table.levels) - 1)
        if with_probability:
            prob *= table.weights[idx]
    if with_probability:
        return rows, cols, prob
    return rows, cols


def kpgm_sample(chain: InitiatorChain, rng: np.random.Generator, retry_factor: float = 1000.0) -> EdgeList:
    """Sample a graph with the recursive-descent algorithm.

    The edge count ``X`` comes from :func:`sample_edge_count`, clamped to the
    number of cells with non-zero probability. Descents are drawn as one
    i.i.d. stream and the first ``X`` distinct cells are kept, which is the
    same as rejecting each repeated edge and drawing again. More than
    ``retry_factor * X`` consecutive rejections raise
    :class:`RetryBudgetExceeded`.
    """
    d = chain.d
    if d > MAX_SAMPLER_LEVELS:
        raise ValueError(f"recursive sampler supports d <= {MAX_SAMPLER_LEVELS}, got {d}")
    m, v = expected_edge_sum(chain)
    target = sample_edge_count(m, v, rng, limit=chain.support_size())
    if target == 0:
        return EdgeList.empty(chain.n)
    keys = _distinct_descents(chain, target, rng, retry_factor)
    return EdgeList(chain.n, np.column_stack((keys >> d, keys & (chain.n - 1))) + 1)


def _distinct_descents(chain, target, rng, retry_factor) -> np.ndarray:
    d = chain.d
    budget = retry_factor * target
    stream = []
    drawn = 0
    deficit = target
    while True:
        batch = deficit + deficit // 8 + 8
        rows, cols = descend(chain, batch, rng)
        stream.append((rows << d) | cols)
        drawn += batch
        keys = stream[0] if len(stream) == 1 else np.concatenate(stream)
        _, first = np.unique(keys, return_index=True)
        first.sort()
        if first.size >= target:
            first = first[:target]
            gaps = np.diff(first, prepend=-1) - 1
            if gaps.size and gaps.max() > budget:
                raise RetryBudgetExceeded(
                    f"{int(gaps.max())} consecutive duplicate edges (budget {budget:g}, X={target})"
                )
            return keys[first]
        gaps = np.diff(first, append=drawn, prepend=-1) - 1
        if gaps.max() > budget:
            raise RetryBudgetExceeded(
                f"{int(gaps.max())} consecutive duplicate edges (budget {budget:g}, X={target})"
            )
        stream = [keys]
        deficit = target - first.size


@dataclass(frozen=True)
class _Thinning:
    certain: np.ndarray  # packed keys of cells with P == 1
    rate: float  # proposal intensity multiplier c
    max_uncertain: float


@lru_cache(maxsize=128)
def _thinning(chain: InitiatorChain) -> _Thinning:
    thetas = chain.thetas
    d = chain.d
    tops = thetas.reshape(d, 4).max(axis=1)
    below = np.where(thetas.reshape(d, 4) < 1.0, thetas.reshape(d, 4), -1.0).max(axis=1)
    best = 0.0
    for k in range(d):
        if below[k] > 0:
            rest = math.prod(float(t) for j, t in enumerate(tops) if j != k)
            best = max(best, float(below[k]) * rest)
    certain = np.zeros(1, dtype=np.int64)
    for t in thetas:
        ones = np.flatnonzero(t.ravel() == 1.0)
        if ones.size == 0:
            certain = np.empty(0, dtype=np.int64)
            break
        # Interleave one more row bit and one more column bit per level.
        a, b = ones >> 1, ones & 1
        rows, cols = certain >> 32, certain & 0xFFFFFFFF
        rows = ((rows[:, None] << 1) | a[None, :]).ravel()
        cols = ((cols[:, None] << 1) | b[None, :]).ravel()
        certain = (rows << 32) | cols
    certain = np.sort((certain >> 32 << d) | (certain & 0xFFFFFFFF))
    rate = -math.log1p(-best) / best if best > 0 else 0.0
    return _Thinning(certain=certain, rate=rate, max_uncertain=best)


def kpgm_sample_exact(chain: InitiatorChain, rng: np.random.Generator) -> EdgeList:
    """Sample every cell as an independent ``Bernoulli(P[i, j])`` in expected
    ``O(d * m)`` time.

    A Poisson number of descents with mean ``c * m`` is thinned so that the
    accepted points on cell ``(i, j)`` are ``Poisson(-log(1 - P[i, j]))``; the
    cell is an edge when at least one point is accepted. ``c`` is the largest
    ratio ``-log(1 - p) / p`` over cells with ``p < 1``; cells with ``p == 1``
    are always emitted and never proposed.
    """
    d = chain.d
    if d > MAX_SAMPLER_LEVELS:
        raise ValueError(f"recursive sampler supports d <= {MAX_SAMPLER_LEVELS}, got {d}")
    thin = _thinning(chain)
    keys = thin.certain
    if thin.rate > 0:
        m, _ = expected_edge_sum(chain)
        count = int(rng.poisson(thin.rate * m))
        rows, cols, p = descend(chain, count, rng, with_probability=True)
        live = p < 1.0
        u = rng.random(count)
        accept = live & (u * (thin.rate * p) < -np.log1p(-np.where(live, p, 0.0)))
        hits = (rows[accept] << d) | cols[accept]
        keys = np.unique(np.concatenate((keys, hits)))
    if keys.size == 0:
        return EdgeList.empty(chain.n)
    return EdgeList(chain.n, np.column_stack((keys >> d, keys & (chain.n - 1))) + 1)


def naive_kpgm_sample(chain: InitiatorChain, rng: np.random.Generator, max_levels: int = 14) -> EdgeList:
    """One Bernoulli trial per cell; quadratic, exact reference sampler."""
    if chain.d > max_levels:
        raise ResourceGuardError(f"naive sampler refuses d={chain.d} > {max_levels}")
    configs = np.arange(chain.n, dtype=np.int64)
    return bernoulli_grid(chain.thetas, configs, configs, rng)


def _row_probabilities(thetas: np.ndarray, row_configs: np.ndarray) -> np.ndarray:
    # Each row of P is a Kronecker product of one row from every level.
    out = np.ones((row_configs.size, 1))
    d = thetas.shape[0]
    for k in range(d):
        picked = thetas[k][(row_configs >> (d - 1 - k)) & 1]
        out = (out[:, :, None] * picked[:, None, :]).reshape(row_configs.size, -1)
    return out


def bernoulli_grid(thetas: np.ndarray, row_configs, col_configs, rng: np.random.Generator) -> EdgeList:
    """Independent Bernoulli trial for every (row, col) pair, rows chunked.

    ``row_configs`` and ``col_configs`` are 0-based configurations of the
    nodes ``1..n`` (rows and columns index the same node set). Cells are
    visited in row-major order.
    """
    row_configs = np.asarray(row_configs, dtype=np.int64)
    col_configs = np.asarray(col_configs, dtype=np.int64)
    n_rows, n_cols = row_configs.size, col_configs.size
    d = thetas.shape[0]
    use_rows = (1 << d) <= 4 * max(n_cols, 1)
    chunk = max(1, _ROW_CHUNK_CELLS // max(n_cols, 1))
    sources, targets = [], []
    for start in range(0, n_rows, chunk):
        rc = row_configs[start : start + chunk]
        if use_rows:
            probs = _row_probabilities(thetas, rc)[:, col_configs]
        else:
            probs = config_probability(thetas, rc[:, None], col_configs[None, :])
        hit_r, hit_c = np.nonzero(rng.random(probs.shape) < probs)
        sources.append(hit_r + start)
        targets.append(hit_c)
    if not sources:
        return EdgeList.empty(n_rows)
    edges = np.column_stack((np.concatenate(sources), np.concatenate(targets))) + 1
    return EdgeList(max(n_rows, n_cols), edges)
