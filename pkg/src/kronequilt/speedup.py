"""Fast path for skewed attribute probabilities.

Configurations that occur more than ``bprime`` times are pulled out into
heavy groups. Every block of the adjacency matrix that touches a heavy group
has a constant edge probability along the heavy side, so it is sampled by
geometric skipping instead of quilting. The remaining nodes ``W`` have at
most ``bprime`` nodes per configuration and are quilted with at most
``bprime**2`` Kronecker samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import EdgeList
from .kronecker import InitiatorChain, config_probability, expected_edge_sum
from .magm import AttributeAssignment, MagmModel, _assemble, _check_compatible, quilt_sample
from .rng import derived_generator, draw_root

# Batch sizing for skip_runs: gaps per run and round, and a cap on the
# (runs x gaps) array drawn in one round.
_GAPS_PER_ROUND = 16
_MAX_GAPS_PER_ROUND = 4096
_MAX_ROUND_CELLS = 1 << 22


@dataclass(frozen=True)
class HeavyGroup:
    config: int
    members: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SpeedupPlan:
    bprime: int
    w_nodes: np.ndarray = field(repr=False)
    heavy_groups: tuple[HeavyGroup, ...]
    predicted_cost: float

    @property
    def R(self) -> int:
        return len(self.heavy_groups)

    def summary(self) -> str:
        """One machine-readable line."""
        return (
            f"plan bprime={self.bprime} w={self.w_nodes.size} "
            f"R={self.R} predicted_cost={self.predicted_cost:.6g}"
        )


def threshold_cost(n: int, d: int, bprime: int, w_size: int, R: int, expected_edges: float) -> float:
    """``bprime**2 * log(n) * |E| + (|W| + d) * R + d * R**2`` with unit constants."""
    return bprime**2 * math.log(n) * expected_edges + (w_size + d) * R + d * R**2


def select_threshold(
    attrs: AttributeAssignment,
    chain: InitiatorChain,
    *,
    expected_edges: float | None = None,
    bprime: int | None = None,
) -> SpeedupPlan:
    """Choose ``bprime`` minimising :func:`threshold_cost`.

    The candidates are 1 and every occurrence count present; between two
    consecutive counts ``W`` and ``R`` do not change while the quilting term
    grows, so no other value can win. Ties go to the smaller threshold.
    ``expected_edges`` defaults to the Kronecker total ``m``; ``bprime``
    skips the search.
    """
    if expected_edges is None:
        expected_edges, _ = expected_edge_sum(chain)
    configs, inverse, counts = np.unique(attrs.lambdas, return_inverse=True, return_counts=True)
    n, d = attrs.n, attrs.d

    def cost(c):
        heavy = counts > c
        return threshold_cost(n, d, c, int(counts[~heavy].sum()), int(heavy.sum()), expected_edges)

    if bprime is None:
        candidates = np.union1d([1], counts)
        costs = [cost(int(c)) for c in candidates]
        bprime = int(candidates[int(np.argmin(costs))])
    elif bprime < 1:
        raise ValueError(f"bprime must be positive, got {bprime}")
    heavy = counts > bprime
    node_heavy = heavy[inverse]
    w_nodes = np.flatnonzero(~node_heavy) + 1
    by_config = np.argsort(inverse, kind="stable")
    starts = np.cumsum(counts) - counts
    groups = [
        HeavyGroup(int(configs[idx]), by_config[starts[idx] : starts[idx] + counts[idx]] + 1)
        for idx in np.flatnonzero(heavy)
    ]
    return SpeedupPlan(bprime, w_nodes, tuple(groups), cost(bprime))


def _gaps(p, size, rng: np.random.Generator, cap: int) -> np.ndarray:
    # 1 + floor(log(U) / log(1 - p)), U uniform on (0, 1].
    u = 1.0 - rng.random(size)
    with np.errstate(divide="ignore"):
        raw = np.floor(np.log(u) / np.log1p(-p))
    return 1 + np.minimum(raw, cap).astype(np.int64)


def uniform_block_sample(rows, cols, p: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(``p``) trial for every cell of ``rows x cols`` by geometric skipping.

    A cursor walks the cells in row-major order and jumps straight from one
    success to the next. Returns a ``(k, 2)`` array of ``(row node, col node)``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    total = rows.size * cols.size
    if total == 0 or p == 0.0:
        return np.empty((0, 2), dtype=np.int64)
    if p == 1.0:
        cells = np.arange(total)
    else:
        mean = total * p
        chunks = []
        cursor = -1
        while cursor < total:
            batch = int(mean + 4 * math.sqrt(mean) + 16)
            pos = cursor + np.cumsum(_gaps(p, batch, rng, total))
            chunks.append(pos)
            cursor = int(pos[-1])
        cells = np.concatenate(chunks)
        cells = cells[cells < total]
    return np.column_stack((rows[cells // cols.size], cols[cells % cols.size]))


def skip_runs(lengths, probs, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Geometric skipping over many runs at once.

    Run ``r`` has ``lengths[r]`` cells, each an independent
    Bernoulli(``probs[r]``) trial. Returns ``(run, position)`` of the
    successes, ordered by run and then position.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    probs = np.asarray(probs, dtype=float)
    out_run, out_pos = [], []
    full = np.flatnonzero((probs >= 1.0) & (lengths > 0))
    if full.size:
        flat_start = np.cumsum(lengths[full]) - lengths[full]
        total = int(lengths[full].sum())
        out_run.append(np.repeat(full, lengths[full]))
        out_pos.append(np.arange(total) - np.repeat(flat_start, lengths[full]))
    active = np.flatnonzero((probs > 0.0) & (probs < 1.0) & (lengths > 0))
    cursor = np.full(active.size, -1, dtype=np.int64)
    cap = int(lengths.max()) if lengths.size else 0
    while active.size:
        p = probs[active]
        length = lengths[active]
        expected = float(np.mean(p * (length - 1 - cursor)))
        per_run = int(min(_MAX_GAPS_PER_ROUND, max(_GAPS_PER_ROUND, 2 * expected + 4, 1)))
        per_run = max(1, min(per_run, _MAX_ROUND_CELLS // active.size))
        gaps = _gaps(p[:, None], (active.size, per_run), rng, cap)
        pos = cursor[:, None] + np.cumsum(gaps, axis=1)
        inside = pos < length[:, None]
        r, c = np.nonzero(inside)
        out_run.append(active[r])
        out_pos.append(pos[r, c])
        still = inside[:, -1]
        cursor = pos[still, -1]
        active = active[still]
    if not out_run:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    run = np.concatenate(out_run)
    pos = np.concatenate(out_pos)
    order = np.lexsort((pos, run))
    return run[order], pos[order]


def fast_magm_sample(
    model: MagmModel,
    attrs: AttributeAssignment,
    rng: np.random.Generator,
    *,
    plan: SpeedupPlan | None = None,
    bprime: int | None = None,
    expected_edges: float | None = None,
    workers: int = 1,
    kpgm: str = "exact",
) -> EdgeList:
    """MAGM sample that quilts only the rare configurations.

    The graph is assembled from four kinds of blocks, each from its own
    derived stream: the quilted ``W x W`` subgraph, heavy x heavy blocks
    (one probability per group pair, skipped over the block's cells), and
    the ``W x heavy`` and ``heavy x W`` strips, skipped per (node, group) run.
    """
    _check_compatible(model, attrs)
    if plan is None:
        plan = select_threshold(attrs, model.chain, expected_edges=expected_edges, bprime=bprime)
    root = draw_root(rng)
    thetas = model.chain.thetas
    parts = []

    w = plan.w_nodes
    if w.size:
        sub_model = MagmModel(model.chain, model.mus, int(w.size))
        g = quilt_sample(sub_model, attrs.subset(w), derived_generator(root, 0), workers=workers, kpgm=kpgm)
        parts.append((w[g.sources - 1], w[g.targets - 1]))

    groups = plan.heavy_groups
    if not groups:
        return _assemble(attrs.n, parts)
    heavy_configs = np.array([g.config for g in groups], dtype=np.int64)
    sizes = np.array([g.members.size for g in groups], dtype=np.int64)
    flat = np.concatenate([g.members for g in groups])
    offsets = np.cumsum(sizes) - sizes

    # Every ordered pair of heavy groups is one run over its row-major cells.
    rr = np.repeat(np.arange(len(groups)), len(groups))
    ss = np.tile(np.arange(len(groups)), len(groups))
    probs = config_probability(thetas, heavy_configs[rr], heavy_configs[ss])
    run, pos = skip_runs(sizes[rr] * sizes[ss], probs, derived_generator(root, 1))
    r, s = rr[run], ss[run]
    parts.append((flat[offsets[r] + pos // sizes[s]], flat[offsets[s] + pos % sizes[s]]))

    if w.size:
        w_configs = attrs.lambdas[w - 1]
        # One run per (W node, group); the heavy side is the run's cells.
        node_idx = np.repeat(np.arange(w.size), len(groups))
        group_idx = np.tile(np.arange(len(groups)), w.size)
        for tag, probs in (
            (2, config_probability(thetas, w_configs[node_idx], heavy_configs[group_idx])),
            (3, config_probability(thetas, heavy_configs[group_idx], w_configs[node_idx])),
        ):
            run, pos = skip_runs(sizes[group_idx], probs, derived_generator(root, tag))
            heavy_nodes = flat[offsets[group_idx[run]] + pos]
            w_side = w[node_idx[run]]
            parts.append((w_side, heavy_nodes) if tag == 2 else (heavy_nodes, w_side))
    return _assemble(attrs.n, parts)
