"""Inter-query context pooling.

Each query is condensed to a graph-level summary by elementwise max over its
updated node states; summaries of all queries exchange information through
repeated residual self-attention (shared weights across steps, zero steps is
the identity); the updated summary is then concatenated onto every node of
its query and mixed back in by an MLP.
"""

from __future__ import annotations

from .autodiff import (MlpSpec, ParamStore, Tensor, broadcast_row, concat_cols, max_rows,
                       mlp_forward, self_attention_layer)
from .errors import ConfigError, ContractError, ShapeError


def pool_query(nodes: Tensor) -> Tensor:
    """Elementwise max over a query's (n, d) node states -> (d,) summary."""
    if nodes.data.ndim != 2 or nodes.data.shape[0] == 0:
        raise ContractError(f"pool_query needs at least one node, got shape {nodes.data.shape}")
    return max_rows(nodes)


def context_exchange(summaries: Tensor, steps: int, params: ParamStore,
                     name: str = "ctx_attn") -> Tensor:
    """Apply ``steps`` shared-weight self-attention layers over (tau, d) summaries."""
    if steps < 0:
        raise ConfigError(f"context steps must be >= 0, got {steps}")
    out = summaries
    for _ in range(steps):
        out = self_attention_layer(out, params, name)
    return out


def infuse_context(nodes: Tensor, summary: Tensor, params: ParamStore, spec: MlpSpec,
                   name: str = "context_mlp") -> Tensor:
    """Mix one query's updated summary into each of its nodes: MLP(node || summary)."""
    if nodes.data.ndim != 2 or summary.data.shape != (nodes.data.shape[1],):
        raise ShapeError(f"nodes {nodes.data.shape} vs summary {summary.data.shape}")
    if spec.widths[0] != 2 * nodes.data.shape[1]:
        raise ShapeError(f"context MLP expects input width {spec.widths[0]}")
    tiled = broadcast_row(summary, nodes.data.shape[0])
    return mlp_forward(spec, params, name, concat_cols([nodes, tiled]))
