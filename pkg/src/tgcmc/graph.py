"""Dynamic-graph sequences and per-rating-level adjacency with normalization.

An edge set is an [n x 3] int array of (user_idx, item_idx, level_idx) rows
in time order. Sequences slice the training edges into count-based windows;
adjacency structures hold the per-level neighbor relation in both directions
together with the message normalization constants.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .autodiff import EdgeSum


class SequenceMode(enum.Enum):
    STATIC = "static"
    DISJOINT = "disjoint"
    INCREMENTAL = "incremental"


def chunk_edges(edges: np.ndarray, t: int):
    """Slice time-ordered edges into t contiguous chunks of near-equal size.

    The first (n mod t) chunks get ceil(n/t) edges, the rest floor(n/t).
    """
    n = edges.shape[0]
    if t < 1:
        raise ValueError("chunk count must be positive")
    if n < t:
        raise ValueError(f"cannot split {n} edges into {t} chunks")
    small, extra = divmod(n, t)
    chunks = []
    start = 0
    for k in range(t):
        size = small + (1 if k < extra else 0)
        chunks.append(edges[start:start + size])
        start += size
    return chunks


@dataclass(frozen=True)
class MatrixSequence:
    """The T-step edge-set sequence feeding the per-step encoders."""

    steps: list
    mode: SequenceMode

    @property
    def t(self) -> int:
        return len(self.steps)

    @property
    def final_step(self) -> np.ndarray:
        return self.steps[-1]


def build_sequence(chunks, mode: SequenceMode) -> MatrixSequence:
    """Disjoint keeps the chunks; incremental takes prefix unions of them."""
    chunks = list(chunks)
    if not chunks:
        raise ValueError("no chunks")
    if mode is SequenceMode.STATIC:
        if len(chunks) != 1:
            raise ValueError("static mode requires exactly one chunk")
        steps = [chunks[0]]
    elif mode is SequenceMode.DISJOINT:
        steps = chunks
    elif mode is SequenceMode.INCREMENTAL:
        steps = [np.concatenate(chunks[:k + 1], axis=0) for k in range(len(chunks))]
    else:
        raise ValueError(f"unknown mode {mode}")
    return MatrixSequence(steps=steps, mode=mode)


def sequence_from_dataset(edges: np.ndarray, mode: SequenceMode, t: int) -> MatrixSequence:
    if mode is SequenceMode.STATIC:
        if t != 1:
            raise ValueError("static mode implies T = 1")
        return build_sequence([edges], mode)
    return build_sequence(chunk_edges(edges, t), mode)


@dataclass
class AdjacencyStructure:
    """Per-level neighbor relation plus normalization constants for one edge set.

    user_aggregators[r] sums item features into user rows; item_aggregators[r]
    is the reverse direction. Both carry 1/c weights baked in. Degrees are
    counted across all rating levels.
    """

    n_users: int
    n_items: int
    n_levels: int
    scheme: str
    edges: np.ndarray
    user_degree: np.ndarray
    item_degree: np.ndarray
    user_aggregators: list = field(repr=False)
    item_aggregators: list = field(repr=False)

    def norm_constant(self, user: int, item: int) -> float:
        """c for the (user, item) edge as seen by the user-side receiver."""
        if self.scheme == "left":
            return float(self.user_degree[user])
        return float(np.sqrt(self.user_degree[user] * self.item_degree[item]))

    def user_neighbors(self, level: int, user: int) -> np.ndarray:
        e = self.edges
        return e[(e[:, 2] == level) & (e[:, 0] == user), 1]

    def item_neighbors(self, level: int, item: int) -> np.ndarray:
        e = self.edges
        return e[(e[:, 2] == level) & (e[:, 1] == item), 0]

    def rebuild_edge_set(self) -> set:
        """Reconstruct {(u, i, r)} from the per-level neighbor lists."""
        out = set()
        for r in range(self.n_levels):
            for u in range(self.n_users):
                for i in self.user_neighbors(r, u):
                    out.add((u, int(i), r))
        return out


def build_adjacency(edges: np.ndarray, n_users: int, n_items: int,
                    n_levels: int, scheme: str) -> AdjacencyStructure:
    edges = np.asarray(edges, dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 3:
        raise ValueError("edges must be an [n x 3] array")
    if scheme not in ("left", "symmetric"):
        raise ValueError(f"unknown normalization scheme {scheme!r}")
    u, i, lvl = edges[:, 0], edges[:, 1], edges[:, 2]
    if edges.size:
        if u.min() < 0 or u.max() >= n_users:
            raise IndexError("user index out of range")
        if i.min() < 0 or i.max() >= n_items:
            raise IndexError("item index out of range")
        if lvl.min() < 0 or lvl.max() >= n_levels:
            raise IndexError("rating level index out of range")
    pair_ids = u * n_items + i
    if np.unique(pair_ids).size != pair_ids.size:
        raise ValueError("duplicate (user, item) edge")

    user_degree = np.bincount(u, minlength=n_users).astype(np.float64)
    item_degree = np.bincount(i, minlength=n_items).astype(np.float64)

    if scheme == "left":
        w_user_side = 1.0 / user_degree[u]
        w_item_side = 1.0 / item_degree[i]
    else:
        sym = 1.0 / np.sqrt(user_degree[u] * item_degree[i])
        w_user_side = sym
        w_item_side = sym

    user_aggs, item_aggs = [], []
    for r in range(n_levels):
        m = lvl == r
        user_aggs.append(EdgeSum(n_users, n_items, u[m], i[m], w_user_side[m]))
        item_aggs.append(EdgeSum(n_items, n_users, i[m], u[m], w_item_side[m]))

    return AdjacencyStructure(
        n_users=n_users,
        n_items=n_items,
        n_levels=n_levels,
        scheme=scheme,
        edges=edges,
        user_degree=user_degree,
        item_degree=item_degree,
        user_aggregators=user_aggs,
        item_aggregators=item_aggs,
    )


def sequence_adjacencies(seq: MatrixSequence, n_users: int, n_items: int,
                         n_levels: int, scheme: str):
    """One adjacency per step; per-step degrees (each step is its own graph)."""
    return [build_adjacency(s, n_users, n_items, n_levels, scheme) for s in seq.steps]


def step_edge_counts(seq: MatrixSequence) -> list:
    return [int(s.shape[0]) for s in seq.steps]
