"""Regular (and nearly regular) neighbourhood graphs.

Vertices of lattice graphs are indexed row-major.  Neighbourhood orders
follow the usual image-analysis convention: order ``q`` contains every
offset whose squared length is among the ``q`` smallest values
``1, 2, 4, 5, 8``, giving degrees 4, 8, 12, 20 and 24.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, InputError

TOPOLOGIES = ("circular-chain", "lattice2d-free", "lattice2d-torus")

_ORDER_RADIUS2 = {1: 1, 2: 2, 3: 4, 4: 5, 5: 8}
_ORDER_NAMES = {"first": 1, "second": 2, "third": 3, "fourth": 4, "fifth": 5}


def neighbourhood_offsets(order: int) -> list[tuple[int, int]]:
    """Half of the symmetric offset mask for a lattice neighbourhood order.

    Only offsets ``(dr, dc)`` that are lexicographically positive are
    returned, so each undirected edge is produced exactly once.
    """
    if order not in _ORDER_RADIUS2:
        raise ConfigurationError(f"unsupported neighbourhood order {order!r}")
    r2 = _ORDER_RADIUS2[order]
    reach = int(np.floor(np.sqrt(r2)))
    out = []
    for dr in range(0, reach + 1):
        for dc in range(-reach, reach + 1):
            if dr == 0 and dc <= 0:
                continue
            if dr * dr + dc * dc <= r2:
                out.append((dr, dc))
    return out


def order_degree(order: int) -> int:
    return 2 * len(neighbourhood_offsets(order))


def parse_order(value) -> int:
    if isinstance(value, str):
        key = value.strip().lower()
        if key in _ORDER_NAMES:
            return _ORDER_NAMES[key]
        try:
            value = int(key)
        except ValueError:
            raise ConfigurationError(f"unknown neighbourhood order {value!r}") from None
    if value not in _ORDER_RADIUS2:
        raise ConfigurationError(f"unsupported neighbourhood order {value!r}")
    return int(value)


@dataclass(frozen=True)
class GraphSpec:
    topology: str
    rows: int
    cols: int = 1
    order: int = 1

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigurationError(f"unknown topology {self.topology!r}")
        object.__setattr__(self, "order", parse_order(self.order))
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigurationError("rows and cols must be positive")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def k(self) -> int:
        if self.topology == "circular-chain":
            return 2
        return order_degree(self.order)

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSpec":
        return cls(
            topology=d["topology"],
            rows=int(d["rows"]),
            cols=int(d.get("cols", 1)),
            order=d.get("order", 1),
        )

    @classmethod
    def from_json(cls, text: str) -> "GraphSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"topology": self.topology, "rows": self.rows, "cols": self.cols, "order": self.order}


class Graph:
    """Immutable undirected simple graph stored as CSR adjacency.

    Attributes
    ----------
    n : int
        Number of vertices.
    k_nominal : int
        Degree the graph would have if it were exactly regular.
    edges : (m, 2) int array
        Each undirected edge once, with ``i < j``.
    indptr, indices : int arrays
        CSR adjacency; the neighbours of ``i`` are
        ``indices[indptr[i]:indptr[i + 1]]``.
    """

    def __init__(self, n: int, edges, k_nominal: int | None = None, spec: GraphSpec | None = None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if n < 1:
            raise ConfigurationError("graph needs at least one vertex")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ConfigurationError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ConfigurationError("self-loops are not allowed")
            edges = np.sort(edges, axis=1)
            key = edges[:, 0] * n + edges[:, 1]
            if np.unique(key).size != key.size:
                raise ConfigurationError("duplicate edges")
            edges = edges[np.argsort(key, kind="stable")]
        self.n = int(n)
        self.edges = edges
        self.edges.setflags(write=False)
        self.m = int(edges.shape[0])
        self.spec = spec

        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((dst, src))
        self.indices = dst[order].astype(np.int64)
        self.degrees = np.bincount(src, minlength=self.n).astype(np.int64)
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.degrees, out=self.indptr[1:])
        for arr in (self.indices, self.degrees, self.indptr):
            arr.setflags(write=False)
        self.k_nominal = int(k_nominal if k_nominal is not None else (self.degrees.max() if self.n else 0))

    def __repr__(self):
        return f"Graph(n={self.n}, k_nominal={self.k_nominal}, m={self.m})"

    @classmethod
    def from_edges(cls, n: int, edges, k_nominal: int | None = None) -> "Graph":
        return cls(n, edges, k_nominal=k_nominal)

    def neighbours(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    @cached_property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbours(i).tolist() for i in range(self.n)]

    @property
    def m_nominal(self) -> float:
        return self.n * self.k_nominal / 2

    @property
    def is_regular(self) -> bool:
        return bool(np.all(self.degrees == self.k_nominal))

    def match_statistics(self, x) -> tuple[int, int, int, int]:
        """Return ``(active, matches, nonmatches, spin)`` for a binary state."""
        x = _as_state(x, self.n)
        xi = x[self.edges[:, 0]]
        xj = x[self.edges[:, 1]]
        active = int(x.sum())
        spin = int(np.count_nonzero(xi & xj))
        nonmatches = int(np.count_nonzero(xi != xj))
        return active, self.m - nonmatches, nonmatches, spin


def _as_state(x, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (n,):
        raise InputError(f"state has shape {x.shape}, expected ({n},)")
    if not np.all((x == 0) | (x == 1)):
        raise InputError("state entries must be 0 or 1")
    return x.astype(np.int8)


def circulant(n: int, offsets) -> Graph:
    """Circulant graph joining ``i`` to ``i +/- d (mod n)`` for each offset ``d``."""
    offsets = sorted(set(int(d) for d in offsets))
    if any(d <= 0 or 2 * d >= n for d in offsets):
        raise ConfigurationError("circulant offsets must satisfy 0 < d < n/2")
    i = np.arange(n)
    edges = np.concatenate([np.stack([i, (i + d) % n], axis=1) for d in offsets])
    return Graph(n, edges, k_nominal=2 * len(offsets))


def build(spec: GraphSpec) -> Graph:
    """Construct the graph described by ``spec``."""
    if spec.topology == "circular-chain":
        n = spec.n
        if n < 3:
            raise ConfigurationError("circular chain needs n >= 3")
        i = np.arange(n)
        return Graph(n, np.stack([i, (i + 1) % n], axis=1), k_nominal=2, spec=spec)

    rows, cols = spec.rows, spec.cols
    if rows < 2 or cols < 2:
        raise ConfigurationError("lattices need rows, cols >= 2")
    offsets = neighbourhood_offsets(spec.order)
    reach_r = max(abs(dr) for dr, _ in offsets)
    reach_c = max(abs(dc) for _, dc in offsets)
    torus = spec.topology == "lattice2d-torus"
    if torus and (rows <= 2 * reach_r or cols <= 2 * reach_c):
        raise ConfigurationError(
            f"{rows}x{cols} torus is too small for order {spec.order}: edges would repeat"
        )
    r, c = np.divmod(np.arange(rows * cols), cols)
    chunks = []
    for dr, dc in offsets:
        r2, c2 = r + dr, c + dc
        if torus:
            r2, c2 = r2 % rows, c2 % cols
            keep = np.ones_like(r, dtype=bool)
        else:
            keep = (r2 >= 0) & (r2 < rows) & (c2 >= 0) & (c2 < cols)
        src = (r * cols + c)[keep]
        dst = (r2 * cols + c2)[keep]
        chunks.append(np.stack([src, dst], axis=1))
    return Graph(rows * cols, np.concatenate(chunks), k_nominal=order_degree(spec.order), spec=spec)
