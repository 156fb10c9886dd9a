"""Graph statistics and partition-size bounds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .graph import EdgeList
from .magm import MagmModel, max_multiplicity, sample_attributes

PARTITION_FIELDS = ("n", "d", "mu", "trial", "B")
GRAPH_FIELDS = ("n", "d", "mu", "trial", "edges", "scc_fraction")


def largest_scc_fraction(graph: EdgeList) -> float:
    """Share of nodes in the largest strongly connected component."""
    if graph.n == 0:
        return 0.0
    ones = np.ones(len(graph), dtype=np.int8)
    adj = csr_matrix((ones, (graph.sources - 1, graph.targets - 1)), shape=(graph.n, graph.n))
    _, labels = connected_components(adj, directed=True, connection="strong")
    return float(np.bincount(labels).max()) / graph.n


@dataclass(frozen=True)
class DegreeDistribution:
    out_degrees: np.ndarray
    in_degrees: np.ndarray

    @property
    def out_histogram(self) -> np.ndarray:
        """``out_histogram[k]`` is the number of nodes with out-degree ``k``."""
        return np.bincount(self.out_degrees)

    @property
    def in_histogram(self) -> np.ndarray:
        return np.bincount(self.in_degrees)


def degree_distribution(graph: EdgeList) -> DegreeDistribution:
    out_deg = np.bincount(graph.sources - 1, minlength=graph.n)
    in_deg = np.bincount(graph.targets - 1, minlength=graph.n)
    return DegreeDistribution(out_deg, in_deg)


def measure_partition_size(model: MagmModel, rng: np.random.Generator, trials: int) -> np.ndarray:
    """Partition size ``B`` of ``trials`` independent attribute draws."""
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    return np.array([max_multiplicity(sample_attributes(model, rng).lambdas) for _ in range(trials)])


def log_partition_bound(n: float) -> float:
    """Natural log of ``n**2 / (e * log2(n)**log2(n))``."""
    if n < 4:
        raise ValueError(f"bound needs n >= 4, got {n}")
    L = math.log2(n)
    return 2 * math.log(n) - 1 - L * math.log(L)


def partition_bound(n: float) -> float:
    """Upper bound on ``P(B > log2 n)`` for balanced attributes and ``n = 2**d``."""
    return math.exp(log_partition_bound(n))


def log_poisson_chernoff(lam: float, x: float) -> float:
    """Natural log of ``exp(-lam) * (e * lam)**x / x**x``."""
    if lam < 0 or x < 0:
        raise ValueError(f"need lam >= 0 and x >= 0, got lam={lam}, x={x}")
    if x == 0:
        return -lam
    if lam == 0:
        return -math.inf
    return -lam + x * (1 + math.log(lam)) - x * math.log(x)


def poisson_chernoff(lam: float, x: float) -> float:
    """Chernoff bound on ``P(X >= x)`` for ``X ~ Poisson(lam)``."""
    return math.exp(log_poisson_chernoff(lam, x))


def oversized_partition_bound(n: float, d: int, t: int) -> float:
    """Union bound on ``P(B > 2**(t + 1) * log2 n)`` when ``n > 2**d``.

    Each configuration count is treated as ``Poisson(n / 2**d)``; the
    threshold exponent ``t`` is taken as given rather than derived from
    ``n`` and ``d``.
    """
    if n < 2:
        raise ValueError(f"bound needs n >= 2, got {n}")
    x = 2 ** (t + 1) * math.log2(n)
    return math.exp(math.log(n) + log_poisson_chernoff(n / 2**d, x))


def write_csv(rows, fields, dest) -> None:
    """Write dict rows with a fixed header to an open text stream."""
    writer = csv.DictWriter(dest, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
