"""Multiplicative attribute graphs and the quilting sampler.

Node ``i`` carries ``d`` Bernoulli attributes packed into an integer
configuration ``lambda_i`` (attribute 1 is the most significant bit, the same
convention the Kronecker module uses for node indices). The edge probability
between nodes ``i`` and ``j`` is the Kronecker probability between cells
``lambda_i`` and ``lambda_j``, so a MAGM graph can be stitched together from
Kronecker samples once nodes sharing a configuration are put in different
blocks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceGuardError
from .graph import EdgeList, _parse_header
from .kronecker import (
    InitiatorChain,
    InitiatorMatrix,
    RetryBudgetExceeded,
    bernoulli_grid,
    config_probability,
    kpgm_sample,
    kpgm_sample_exact,
)
from .rng import derived_generator, draw_root

KPGM_SAMPLERS = {"exact": kpgm_sample_exact, "rejection": kpgm_sample}


@dataclass(frozen=True)
class MagmModel:
    chain: InitiatorChain
    mus: tuple[float, ...]
    n: int

    def __post_init__(self):
        mus = tuple(float(m) for m in self.mus)
        if len(mus) != self.chain.d:
            raise ValueError(f"need {self.chain.d} attribute probabilities, got {len(mus)}")
        if any(not (0.0 <= m <= 1.0) for m in mus):
            raise ValueError(f"attribute probabilities must lie in [0, 1], got {mus}")
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        object.__setattr__(self, "mus", mus)

    @classmethod
    def uniform(cls, theta: InitiatorMatrix, mu: float, n: int, d: int | None = None) -> "MagmModel":
        """Same initiator and attribute probability at every level; ``d`` defaults to ``ceil(log2 n)``."""
        if d is None:
            d = max(1, math.ceil(math.log2(n)))
        return cls(InitiatorChain.repeated(theta, d), (mu,) * d, n)

    @property
    def d(self) -> int:
        return self.chain.d


@dataclass(frozen=True)
class AttributeAssignment:
    n: int
    d: int
    lambdas: np.ndarray = field(repr=False)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.int64).ravel()
        if lam.size != self.n:
            raise ValueError(f"expected {self.n} configurations, got {lam.size}")
        if lam.size and (lam.min() < 0 or lam.max() >= (1 << self.d)):
            raise ValueError(f"configurations must lie in [0, 2**{self.d})")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    def bits(self) -> np.ndarray:
        """``(n, d)`` 0/1 matrix; column ``k`` is attribute ``k + 1``."""
        shifts = np.arange(self.d - 1, -1, -1, dtype=np.int64)
        return ((self.lambdas[:, None] >> shifts) & 1).astype(np.uint8)

    def subset(self, nodes) -> "AttributeAssignment":
        """Assignment restricted to the given 1-based nodes, renumbered ``1..len``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        return AttributeAssignment(nodes.size, self.d, self.lambdas[nodes - 1])


@dataclass(frozen=True)
class NodePartition:
    """Blocks ``D_1..D_B``; ``sets[c - 1]`` lists the 1-based members of ``D_c``
    in increasing order and ``multiplicity[i - 1]`` is ``|Z_i|``."""

    B: int
    sets: tuple[np.ndarray, ...]
    multiplicity: np.ndarray


def sample_attributes(model: MagmModel, rng: np.random.Generator) -> AttributeAssignment:
    mus = np.asarray(model.mus)
    bits = rng.random((model.n, model.d)) < mus
    shifts = np.arange(model.d - 1, -1, -1, dtype=np.int64)
    lambdas = (bits.astype(np.int64) << shifts).sum(axis=1)
    return AttributeAssignment(model.n, model.d, lambdas)


def magm_edge_probability(model: MagmModel, attrs: AttributeAssignment, i: int, j: int) -> float:
    if not (1 <= i <= attrs.n and 1 <= j <= attrs.n):
        raise IndexError(f"node ids must lie in [1, {attrs.n}], got ({i}, {j})")
    return float(config_probability(model.chain.thetas, attrs.lambdas[i - 1], attrs.lambdas[j - 1]))


def edge_probability_matrix(model: MagmModel, attrs: AttributeAssignment) -> np.ndarray:
    """Dense ``n x n`` matrix ``Q``; small ``n`` only."""
    lam = attrs.lambdas
    return config_probability(model.chain.thetas, lam[:, None], lam[None, :])


def expected_magm_edges(model: MagmModel) -> float:
    """Expected edge count with attributes still random: ordered pairs of
    distinct nodes plus self-loops."""
    off, diag = 1.0, 1.0
    for t, mu in zip(model.chain.thetas, model.mus):
        w = np.array([1.0 - mu, mu])
        off *= float(w @ t @ w)
        diag *= float(w @ np.diag(t))
    n = model.n
    return n * (n - 1) * off + n * diag


def build_partition(attrs: AttributeAssignment) -> NodePartition:
    """Put the ``c``-th occurrence (by node id) of every configuration in ``D_c``."""
    lam = attrs.lambdas
    n = lam.size
    if n == 0:
        return NodePartition(0, (), np.empty(0, dtype=np.int64))
    order = np.argsort(lam, kind="stable")
    ranked = lam[order]
    starts = np.flatnonzero(np.r_[True, ranked[1:] != ranked[:-1]])
    run_start = np.repeat(starts, np.diff(np.r_[starts, n]))
    multiplicity = np.empty(n, dtype=np.int64)
    multiplicity[order] = np.arange(n) - run_start + 1
    B = int(multiplicity.max())
    by_block = np.argsort(multiplicity, kind="stable")
    bounds = np.cumsum(np.bincount(multiplicity, minlength=B + 1)[1:])[:-1]
    sets = tuple(part + 1 for part in np.split(by_block, bounds))
    return NodePartition(B, sets, multiplicity)


def max_multiplicity(lambdas) -> int:
    """Largest number of nodes sharing one configuration."""
    _, counts = np.unique(np.asarray(lambdas), return_counts=True)
    return int(counts.max()) if counts.size else 0


class _BlockIndex:
    """Configuration -> node lookup for one partition block.

    Lookups go through a dense table of ``2**d`` slots, built on demand and
    dropped afterwards, when that is not much larger than ``n``; otherwise
    through binary search on the sorted configurations.
    """

    def __init__(self, nodes: np.ndarray, lambdas: np.ndarray, d: int):
        configs = lambdas[nodes - 1]
        order = np.argsort(configs)
        self.configs = configs[order]
        self.nodes = nodes[order]
        self.dense = (1 << d) <= 4 * lambdas.size
        self.size = 1 << d

    def lookup(self, configs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(found, node)``; ``node`` is meaningful where ``found``."""
        if self.dense:
            table = np.zeros(self.size, dtype=np.int64)
            table[self.configs] = self.nodes
            node = table[configs]
            return node > 0, node
        pos = np.searchsorted(self.configs, configs)
        np.minimum(pos, self.configs.size - 1, out=pos)
        found = self.configs[pos] == configs
        return found, self.nodes[pos]


def quilt_sample(
    model: MagmModel,
    attrs: AttributeAssignment,
    rng: np.random.Generator,
    *,
    workers: int = 1,
    kpgm: str = "exact",
    retry_factor: float = 1000.0,
) -> EdgeList:
    """Sample a MAGM graph by quilting ``B**2`` Kronecker samples.

    For each ordered block pair ``(k, l)`` a full Kronecker graph on
    ``2**d`` cells is drawn and every edge ``(x, y)`` with a node of
    configuration ``x`` in ``D_k`` and one of configuration ``y`` in ``D_l``
    becomes an edge between those nodes.

    Block ``(k, l)`` uses a generator derived from one root draw of ``rng``
    and the key ``(k, l)``, so ``workers`` never changes the output. ``kpgm``
    picks the block sampler: ``"exact"`` (independent Bernoulli cells) or
    ``"rejection"`` (Normal edge count with duplicate rejection).
    """
    _check_compatible(model, attrs)
    sampler = _kpgm_sampler(kpgm, retry_factor)
    partition = build_partition(attrs)
    root = draw_root(rng)
    if partition.B == 0:
        return EdgeList.empty(attrs.n)
    index = [_BlockIndex(nodes, attrs.lambdas, attrs.d) for nodes in partition.sets]
    blocks = [(k, l) for k in range(partition.B) for l in range(partition.B)]

    def run(block):
        k, l = block
        try:
            g = sampler(model.chain, derived_generator(root, k, l))
        except RetryBudgetExceeded as exc:
            raise RetryBudgetExceeded(f"block ({k + 1}, {l + 1}): {exc}") from exc
        src_ok, src = index[k].lookup(g.sources - 1)
        dst_ok, dst = index[l].lookup(g.targets - 1)
        keep = src_ok & dst_ok
        return src[keep], dst[keep]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return _assemble(attrs.n, parts)


def _assemble(n: int, parts) -> EdgeList:
    parts = [p for p in parts if p[0].size]
    if not parts:
        return EdgeList.empty(n)
    src = np.concatenate([p[0] for p in parts])
    dst = np.concatenate([p[1] for p in parts])
    return EdgeList(n, np.column_stack((src, dst)))


def _kpgm_sampler(name: str, retry_factor: float):
    if name not in KPGM_SAMPLERS:
        raise ValueError(f"unknown Kronecker sampler {name!r}; choose from {sorted(KPGM_SAMPLERS)}")
    if name == "rejection":
        return lambda chain, rng: kpgm_sample(chain, rng, retry_factor=retry_factor)
    return KPGM_SAMPLERS[name]


def _check_compatible(model: MagmModel, attrs: AttributeAssignment) -> None:
    if attrs.d != model.d:
        raise ValueError(f"assignment has d={attrs.d}, model has d={model.d}")


def naive_magm_sample(
    model: MagmModel, attrs: AttributeAssignment, rng: np.random.Generator, max_nodes: int = 1 << 14
) -> EdgeList:
    """One Bernoulli trial per ordered node pair."""
    _check_compatible(model, attrs)
    if attrs.n > max_nodes:
        raise ResourceGuardError(f"naive sampler refuses n={attrs.n} > {max_nodes}")
    return bernoulli_grid(model.chain.thetas, attrs.lambdas, attrs.lambdas, rng)


# -- file formats -----------------------------------------------------------


def write_attributes(attrs: AttributeAssignment, dest) -> None:
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="\n") as fh:
            write_attributes(attrs, fh)
        return
    dest.write(f"# n={attrs.n} d={attrs.d}\n")
    for value in attrs.lambdas.tolist():
        dest.write(f"{value}\n")


def read_attributes(src) -> AttributeAssignment:
    if isinstance(src, (str, os.PathLike)):
        with open(src) as fh:
            return read_attributes(fh)
    fields = _parse_header(src.readline(), ("n", "d"))
    values = [int(line) for line in src if line.strip() and not line.startswith("#")]
    return AttributeAssignment(fields["n"], fields["d"], np.array(values, dtype=np.int64))


def parse_model_config(text: str) -> MagmModel:
    """Parse the flat ``key = value`` model format.

    Keys: ``d``, ``n``, ``theta.ab`` or per-level ``theta.k.ab`` (levels
    1-based, ``ab`` in ``00 01 10 11``), and ``mu`` or per-level ``mu.k``.
    Per-level keys override shared ones.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        values[key.strip()] = value.strip()
    try:
        d, n = int(values.pop("d")), int(values.pop("n"))
    except KeyError as exc:
        raise ValueError(f"model config missing {exc.args[0]!r}") from None
    cells = ("00", "01", "10", "11")
    matrices, mus = [], []
    for k in range(1, d + 1):
        entries = []
        for ab in cells:
            key = f"theta.{k}.{ab}" if f"theta.{k}.{ab}" in values else f"theta.{ab}"
            if key not in values:
                raise ValueError(f"model config has no value for theta.{k}.{ab}")
            entries.append(float(values[key]))
        matrices.append(InitiatorMatrix(*entries))
        key = f"mu.{k}" if f"mu.{k}" in values else "mu"
        if key not in values:
            raise ValueError(f"model config has no value for mu.{k}")
        mus.append(float(values[key]))
    known = {"mu"} | {f"theta.{ab}" for ab in cells}
    known |= {f"mu.{k}" for k in range(1, d + 1)}
    known |= {f"theta.{k}.{ab}" for k in range(1, d + 1) for ab in cells}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown model config keys: {', '.join(unknown)}")
    return MagmModel(InitiatorChain(tuple(matrices)), tuple(mus), n)


def format_model_config(model: MagmModel) -> str:
    lines = [f"d = {model.d}", f"n = {model.n}"]
    for k, (m, mu) in enumerate(zip(model.chain.matrices, model.mus), 1):
        for ab, v in zip(("00", "01", "10", "11"), (m.theta00, m.theta01, m.theta10, m.theta11)):
            lines.append(f"theta.{k}.{ab} = {v!r}")
        lines.append(f"mu.{k} = {mu!r}")
    return "\n".join(lines) + "\n"


def load_model_config(path) -> MagmModel:
    with open(path) as fh:
        return parse_model_config(fh.read())
