"""Directed edge lists and their text serialization.

The on-disk format is shared by every sampler::

    # nodes=<n> edges=<k>
    <source>\t<target>
    ...

Node ids are 1-based and lines are LF-terminated.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EdgeList:
    """A directed graph on nodes ``1..n`` stored as a ``(k, 2)`` int64 array.

    Pairs are distinct; self-loops are allowed.
    """

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"node count must be non-negative, got {self.n}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def empty(cls, n: int) -> "EdgeList":
        return cls(n, np.empty((0, 2), dtype=np.int64))

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "EdgeList":
        return cls(n, np.array(list(pairs), dtype=np.int64).reshape(-1, 2))

    def __len__(self) -> int:
        return self.edges.shape[0]

    @property
    def sources(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def targets(self) -> np.ndarray:
        return self.edges[:, 1]

    def validate(self) -> None:
        """Raise ``ValueError`` if ids fall outside ``[1, n]`` or a pair repeats."""
        if len(self) == 0:
            return
        if self.edges.min() < 1 or self.edges.max() > self.n:
            raise ValueError("edge endpoint outside [1, n]")
        keys = (self.sources - 1) * self.n + (self.targets - 1)
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate edge")

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix; meant for small graphs only."""
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        a[self.sources - 1, self.targets - 1] = 1
        return a

    def pair_set(self) -> set[tuple[int, int]]:
        return set(map(tuple, self.edges.tolist()))

    def to_text(self) -> str:
        buf = io.StringIO()
        write_edgelist(self, buf)
        return buf.getvalue()


def write_edgelist(graph: EdgeList, dest) -> None:
    """Write *graph* to a path or an open text stream."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="\n") as fh:
            write_edgelist(graph, fh)
        return
    dest.write(f"# nodes={graph.n} edges={len(graph)}\n")
    if len(graph):
        np.savetxt(dest, graph.edges, fmt="%d", delimiter="\t", newline="\n")


def read_edgelist(src) -> EdgeList:
    """Parse the edge-list text format from a path or an open text stream."""
    if isinstance(src, (str, os.PathLike)):
        with open(src) as fh:
            return read_edgelist(fh)
    header = src.readline()
    fields = _parse_header(header, ("nodes", "edges"))
    n, k = fields["nodes"], fields["edges"]
    pairs = []
    for line in src:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        s, t = line.split("\t")
        pairs.append((int(s), int(t)))
    if len(pairs) != k:
        raise ValueError(f"header announces {k} edges, found {len(pairs)}")
    graph = EdgeList.from_pairs(n, pairs)
    graph.validate()
    return graph


def _parse_header(line: str, keys) -> dict[str, int]:
    if not line.startswith("#"):
        raise ValueError(f"missing header line: {line!r}")
    out = {}
    for token in line[1:].split():
        key, _, value = token.partition("=")
        out[key] = int(value)
    missing = [k for k in keys if k not in out]
    if missing:
        raise ValueError(f"header missing {', '.join(missing)}: {line!r}")
    return out
