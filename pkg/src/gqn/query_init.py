"""Graph query construction: attention-guided node sampling plus feature-space kNN.

A graph query owns a learnable global vector that scores every BEV cell; the
top-N cells become its nodes and each node gets directed edges to its K
nearest neighbors in state-feature space.

Top-N selection is discrete, so selected node states are multiplied by m_bev
times their attention weight before any downstream use. That keeps a live
gradient path from every downstream loss back to the global vector (and the
grid features), and leaves magnitudes near 1 under a uniform attention map.
Nearest-neighbor structure itself is built on the raw, unscaled features.

All tie-breaks are by lower BEV index (selection) or lower node slot (kNN),
which makes query construction a pure function of the pair *set*: reordering
the flattened grid changes nothing, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, gather_rows, matvec, scale_rows, softmax
from .errors import ConfigError, InvalidInputError, ShapeError
from .scene import FlatPairs

Array = np.ndarray


@dataclass(frozen=True)
class QuerySetSpec:
    """One set of queries sharing a sampling ratio and neighbor count."""

    queries: int
    ratio: float
    k: int

    def __post_init__(self):
        if self.queries < 1:
            raise ConfigError(f"set needs at least one query, got {self.queries}")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError(f"sampling ratio {self.ratio} outside (0, 1]")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")

    def n_nodes(self, m_bev: int) -> int:
        """round(ratio * m_bev), clamped to [1, m_bev - 1] so k < n stays satisfiable."""
        return min(max(int(round(self.ratio * m_bev)), 1), max(m_bev - 1, 1))


@dataclass
class SelectedNodes:
    bev_indices: Array  # (n,) distinct cell indices
    positions: Array    # (n, d) positional encodings, fixed
    states_raw: Array   # (n, d) unscaled features, used for kNN
    alpha: Tensor       # (n,) selection weights of the chosen cells
    states: Tensor      # (n, d) features scaled by m_bev * alpha


@dataclass
class GraphQuery:
    """One instantiated query: global-vector scores, sampled nodes, kNN edges."""

    set_index: int
    query_index: int
    n_nodes: int
    k: int
    bev_indices: Array
    positions: Array
    states_raw: Array
    alpha: Tensor
    states: Tensor
    edge_src: Array  # (n*k,) source slots, grouped by source
    edge_dst: Array  # (n*k,) target slots, nearest first within a group


def attention_scores(u: Tensor, states: Tensor) -> Tensor:
    """Softmax-normalized compatibility of the global vector with every cell."""
    if states.data.ndim != 2 or states.data.shape[0] == 0:
        raise InvalidInputError("attention_scores needs a non-empty (m, d) grid")
    if u.data.shape != (states.data.shape[1],):
        raise ShapeError(f"global vector shape {u.data.shape} vs feature width {states.data.shape[1]}")
    return softmax(matvec(states, u))


def select_nodes(alpha: Tensor, states: Tensor, flat: FlatPairs, n: int) -> SelectedNodes:
    """Pick the n highest-weight cells; ties go to the lower BEV index."""
    m = alpha.data.shape[0]
    if not 1 <= n <= m:
        raise ConfigError(f"node count {n} outside [1, {m}]")
    if states.data.shape[0] != m or len(flat.bev_indices) != m:
        raise ShapeError("alpha, states and flattened pairs disagree on cell count")
    order = np.lexsort((flat.bev_indices, -alpha.data))
    pick = order[:n]
    alpha_sel = gather_rows(alpha, pick)
    scaled = scale_rows(gather_rows(states, pick), alpha_sel * float(m))
    return SelectedNodes(
        bev_indices=flat.bev_indices[pick].copy(),
        positions=flat.positions[pick].copy(),
        states_raw=flat.states[pick].copy(),
        alpha=alpha_sel,
        states=scaled,
    )


def build_knn_edges(features: Array, k: int) -> tuple[Array, Array]:
    """Directed edges from each node to its k nearest neighbors (self excluded).

    Distances are exact pairwise Euclidean in feature space, computed from
    explicit differences so duplicate vectors tie at exactly zero; ties break
    to the lower node slot. Returns (src, dst) arrays grouped by source slot,
    nearest neighbor first.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f"features must be (n, d), got {features.shape}")
    n = features.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"k={k} must satisfy 1 <= k < n={n}")
    dst = np.empty((n, k), dtype=np.intp)
    slots = np.arange(n, dtype=np.intp)
    d = features.shape[1]
    block = max(1, min(n, int(2 ** 23 // max(1, n * d))))  # ~64MB (block, n, d) diff tile
    for r0 in range(0, n, block):
        r1 = min(n, r0 + block)
        diff = features[r0:r1, None, :] - features[None, :, :]
        d2 = np.einsum("bnd,bnd->bn", diff, diff)
        d2[np.arange(r1 - r0), np.arange(r0, r1)] = np.inf  # no self-edges
        order = np.lexsort((np.broadcast_to(slots, d2.shape), d2), axis=1)
        dst[r0:r1] = order[:, :k]
    src = np.repeat(slots, k)
    return src, dst.reshape(-1)


def init_graph_query(u: Tensor, states: Tensor, flat: FlatPairs,
                     set_index: int, query_index: int, spec: QuerySetSpec) -> GraphQuery:
    """Full query initialization: scores, top-N sampling, kNN edge construction."""
    n = spec.n_nodes(flat.m_bev)
    if spec.k >= n:
        raise ConfigError(
            f"set {set_index}: k={spec.k} >= n={n} sampled nodes (ratio {spec.ratio} of {flat.m_bev})")
    alpha = attention_scores(u, states)
    sel = select_nodes(alpha, states, flat, n)
    src, dst = build_knn_edges(sel.states_raw, spec.k)
    return GraphQuery(
        set_index=set_index,
        query_index=query_index,
        n_nodes=n,
        k=spec.k,
        bev_indices=sel.bev_indices,
        positions=sel.positions,
        states_raw=sel.states_raw,
        alpha=sel.alpha,
        states=sel.states,
        edge_src=src,
        edge_dst=dst,
    )
