"""Analytic op-count model for graph construction and processing.

Compares per-query graphs (a fraction of the grid, small k) against one
full-scene graph (every cell, k=20) under a unit-cost model: one unit per
pairwise distance during construction, one per edge operation during
processing. Constant factors cancel in the reduction ratios, which is what
the model reports.

Peak cost means the single most expensive graph: the largest query graph on
one side, the full-scene graph on the other. Node counts use the *exact*
rational ratio * m_bev (ratios are read as decimal literals), so the headline
processing reduction, 1 - (max ratio*k) / k_full, is computed exactly; the
rounded integer counts the live pipeline uses are reported alongside.

Construction is counted in two modes and both are reported: ``naive`` exact
pairwise search at n*(n-1)/2 distance evaluations, and ``indexed`` at
n*log2(n) + n*k for an index-assisted build. The indexed mode is counted
only; the pipeline always runs the exact search at desk scale.

FLOP estimates are closed-form integer sums over the pipeline's stages
(scoring, edge features, edge attention, node updates, pooling, context
attention, projection, skip/gate MLPs), counting 2 FLOPs per multiply-add.
They depend only on the configuration and grid size, never on grid content.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .autodiff import MlpSpec
from .errors import ConfigError
from .pipeline import GqnConfig
from .query_init import build_knn_edges

FULL_GRAPH_K = 20

Count = int | Fraction

_MODES = ("naive", "indexed")


def exact_nodes(ratio: float, m_bev: int) -> Fraction:
    """ratio * m_bev as an exact rational, reading the ratio as its decimal literal."""
    return Fraction(str(ratio)) * m_bev


def processing_cost(n: Count, k: int) -> Count:
    """Edge operations for one graph: n * k."""
    if k < 1 or n <= k:
        raise ConfigError(f"processing_cost needs n > k >= 1, got n={n}, k={k}")
    return n * k


def construction_cost(n: Count, k: int, mode: str) -> Count | float:
    """Distance evaluations to build one graph's kNN edges.

    naive: n*(n-1)/2 exact pairwise; indexed: n*log2(n) + n*k.
    """
    if mode not in _MODES:
        raise ConfigError(f"construction mode {mode!r} not in {_MODES}")
    if k < 1 or n <= k:
        raise ConfigError(f"construction_cost needs n > k >= 1, got n={n}, k={k}")
    if mode == "naive":
        return n * (n - 1) / Fraction(2)
    return float(n) * float(np.log2(float(n))) + float(n * k)


@dataclass(frozen=True)
class SetCost:
    """Unit costs for a single query graph of one set."""

    ratio: float
    k: int
    n_exact: Fraction
    n_rounded: int
    processing: Fraction
    construction_naive: Fraction
    construction_indexed: float

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "k": self.k,
            "n_exact": str(self.n_exact),
            "n": float(self.n_exact),
            "n_rounded": self.n_rounded,
            "processing": float(self.processing),
            "construction_naive": float(self.construction_naive),
            "construction_indexed": self.construction_indexed,
        }


@dataclass(frozen=True)
class CostReport:
    m_bev: int
    full_k: int
    sets: tuple[SetCost, ...]
    full_processing: int
    full_construction_naive: Fraction
    full_construction_indexed: float
    peak_processing: Fraction
    peak_construction_naive: Fraction
    peak_construction_indexed: float
    processing_reduction_pct: float
    construction_naive_reduction_pct: float
    construction_indexed_reduction_pct: float
    flops: int

    def to_dict(self) -> dict:
        return {
            "m_bev": self.m_bev,
            "full_k": self.full_k,
            "sets": [s.to_dict() for s in self.sets],
            "full_processing": self.full_processing,
            "full_construction_naive": float(self.full_construction_naive),
            "full_construction_indexed": self.full_construction_indexed,
            "peak_processing": float(self.peak_processing),
            "peak_construction_naive": float(self.peak_construction_naive),
            "peak_construction_indexed": self.peak_construction_indexed,
            "processing_reduction_pct": self.processing_reduction_pct,
            "processing_reduction_exact": str(_reduction(self.peak_processing,
                                                         Fraction(self.full_processing)) * 100),
            "construction_naive_reduction_pct": self.construction_naive_reduction_pct,
            "construction_indexed_reduction_pct": self.construction_indexed_reduction_pct,
            "flops": self.flops,
        }


def _reduction(peak: Fraction, full: Fraction) -> Fraction:
    return 1 - peak / full


def compare_full_vs_queries(config: GqnConfig, m_bev: int, full_k: int = FULL_GRAPH_K) -> CostReport:
    """All counts and reductions for the configured sets against one full graph."""
    if m_bev <= full_k:
        raise ConfigError(f"m_bev={m_bev} must exceed the full-graph k={full_k}")
    sets = []
    for i, s in enumerate(config.sets):
        n = exact_nodes(s.ratio, m_bev)
        if n <= s.k:
            raise ConfigError(f"set {i}: exact n={n} <= k={s.k} at m_bev={m_bev}")
        sets.append(SetCost(
            ratio=s.ratio,
            k=s.k,
            n_exact=n,
            n_rounded=s.n_nodes(m_bev),
            processing=Fraction(processing_cost(n, s.k)),
            construction_naive=Fraction(construction_cost(n, s.k, "naive")),
            construction_indexed=construction_cost(n, s.k, "indexed"),
        ))
    full_proc = processing_cost(m_bev, full_k)
    full_naive = Fraction(construction_cost(m_bev, full_k, "naive"))
    full_indexed = construction_cost(m_bev, full_k, "indexed")
    peak_proc = max(s.processing for s in sets)
    peak_naive = max(s.construction_naive for s in sets)
    peak_indexed = max(s.construction_indexed for s in sets)
    return CostReport(
        m_bev=m_bev,
        full_k=full_k,
        sets=tuple(sets),
        full_processing=full_proc,
        full_construction_naive=full_naive,
        full_construction_indexed=full_indexed,
        peak_processing=peak_proc,
        peak_construction_naive=peak_naive,
        peak_construction_indexed=peak_indexed,
        processing_reduction_pct=float(_reduction(peak_proc, Fraction(full_proc)) * 100),
        construction_naive_reduction_pct=float(_reduction(peak_naive, full_naive) * 100),
        construction_indexed_reduction_pct=float((1 - peak_indexed / full_indexed) * 100),
        flops=flop_estimate(config, m_bev),
    )


def _linear_flops(rows: int, w_in: int, w_out: int, bias: bool = True) -> int:
    return rows * (2 * w_in * w_out + (w_out if bias else 0))


def _mlp_flops(rows: int, spec: MlpSpec) -> int:
    total = 0
    for i in range(spec.n_layers):
        total += _linear_flops(rows, spec.widths[i], spec.widths[i + 1], spec.biases[i])
        if spec.activations[i] == "relu":
            total += rows * spec.widths[i + 1]
    return total


def flop_estimate(config: GqnConfig, m_bev: int, d: int | None = None) -> int:
    """Closed-form FLOPs for one pipeline pass; a function of config and grid size only.

    Per query: scoring 2*m_bev*d plus a softmax, selection weighting, then
    per-edge terms (relative positions, edge MLP, score projections and dots,
    per-node softmax, weighted aggregation) that are all linear in n*k, then
    per-node terms (node and context MLPs, pooling, projection adds). Shared:
    context attention steps over all tau summaries, per-cell mean
    normalization, and the skip and gate MLPs over every cell.
    """
    d = config.d if d is None else d
    tau = config.tau
    total = 0
    for s in config.sets:
        n = s.n_nodes(m_bev)
        edges = n * s.k
        per_query = 2 * m_bev * d + 4 * m_bev            # scores + softmax
        per_query += 2 * n * d + n                       # selection weighting
        per_query += edges * d                           # relative positions
        per_query += _mlp_flops(edges, config.edge_mlp_spec)
        per_query += _mlp_flops(edges, config.edge_q_spec)
        per_query += _mlp_flops(edges, config.edge_k_spec)
        per_query += 2 * edges * d + 4 * edges           # score dots + per-node softmax
        per_query += 2 * edges * d                       # attention-weighted aggregation
        per_query += _mlp_flops(n, config.node_mlp_spec)
        per_query += n * d                               # max pooling
        per_query += _mlp_flops(n, config.context_mlp_spec)
        per_query += n * d                               # scatter adds
        total += s.queries * per_query
    per_step = (3 * _linear_flops(tau, d, d)             # q/k/v projections
                + 2 * (2 * tau * tau * d)                # score and mixing matmuls
                + 4 * tau * tau                          # row softmax
                + tau * d)                               # residual add
    total += config.context_steps * per_step
    total += config.num_sets * m_bev * d                 # per-cell mean normalization
    total += _mlp_flops(m_bev, config.mlp1_spec)
    total += _mlp_flops(m_bev, config.mlp2_spec) + m_bev * (8 + 4 * d)  # gate softmax + blend
    return total


def run_benchmark(config: GqnConfig, m_bev_sweep: list[int], modes: list[str] | None = None,
                  full_k: int = FULL_GRAPH_K, exec_node_cap: int = 2048,
                  seed: int = 0) -> list[dict]:
    """Analytic counts per (m_bev, mode) row, plus measured kNN wall time.

    Wall times execute the actual exact-pairwise kNN on random features and are
    reported only in naive mode for graphs of at most ``exec_node_cap`` nodes
    (the indexed build is counted, not implemented); skipped timings are None.
    """
    modes = list(_MODES) if modes is None else modes
    for mode in modes:
        if mode not in _MODES:
            raise ConfigError(f"unknown benchmark mode {mode!r}")
    if not m_bev_sweep:
        raise ConfigError("empty m_bev sweep")
    rng = np.random.Generator(np.random.Philox(key=seed))
    rows = []
    for m_bev in m_bev_sweep:
        report = compare_full_vs_queries(config, m_bev, full_k)
        peak_set = max(report.sets, key=lambda s: s.processing)
        for mode in modes:
            if mode == "naive":
                full_count = float(report.full_construction_naive)
                peak_count = float(report.peak_construction_naive)
                reduction = report.construction_naive_reduction_pct
            else:
                full_count = report.full_construction_indexed
                peak_count = report.peak_construction_indexed
                reduction = report.construction_indexed_reduction_pct
            wall_full = wall_peak = None
            if mode == "naive":
                if m_bev <= exec_node_cap:
                    wall_full = _time_knn(rng, m_bev, full_k, config.d)
                if peak_set.n_rounded <= exec_node_cap:
                    wall_peak = _time_knn(rng, peak_set.n_rounded, peak_set.k, config.d)
            rows.append({
                "m_bev": m_bev,
                "mode": mode,
                "full_count": full_count,
                "peak_query_count": peak_count,
                "reduction_pct": reduction,
                "processing_reduction_pct": report.processing_reduction_pct,
                "wall_full_s": wall_full,
                "wall_peak_s": wall_peak,
            })
    return rows


def _time_knn(rng: np.random.Generator, n: int, k: int, d: int) -> float:
    features = rng.standard_normal((n, d))
    start = time.perf_counter()
    build_knn_edges(features, k)
    return time.perf_counter() - start
