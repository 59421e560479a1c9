"""Multi-set query orchestration over a flattened BEV grid.

Runs every query of every set through initialization, the edge-attention
update and context pooling, projects each set's node states back onto the BEV
grid by contributor-count mean, concatenates set maps along channels, and
applies the skip MLP (mlp1) over [input state || set maps || positional
encoding]. When a global-pathway map is supplied, the skip output is blended
with it via per-pixel softmax weights from mlp2. Updated per-query summary vectors are
exposed so an external detection head could consume them.

Alignment contract: every map in ``GqnOutput`` has one row per *input pair*,
in the caller's pair order. Because all internal reductions are functions of
the pair set (see the sampling and autodiff modules), feeding a permuted pair
list yields the same maps, permuted the same way, bit for bit. Fixed seeds
give bit-identical outputs regardless of the thread count used for the
per-query stage.

The skip MLP's input is laid out as (state d) || (S set maps, S*d) || (encoding
d); with the default three sets that is the 5*d-wide fusion input. The mean in
the BEV projection divides by the number of contributing (query, node) pairs
per cell, not by the set's query count, so sparsely covered cells are not
diluted toward zero.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import (MlpSpec, ParamStore, Tensor, add, as_tensor, backward, column,
                       concat_cols, gather_rows, matmul, mean_all, mlp_forward, mul,
                       register_attention, reshape, row_softmax, scale_rows, scatter_mean,
                       stack_rows, sub, take_row)
from .deep_context import context_exchange, infuse_context, pool_query
from .edge_focus import edge_focus_update
from .errors import ConfigError, InvalidInputError, ShapeError
from .query_init import GraphQuery, QuerySetSpec, init_graph_query
from .scene import FlatPairs, SceneSpec, flatten_grid, generate_scene, sinusoidal_encoding

Array = np.ndarray

DEFAULT_SETS = (QuerySetSpec(32, 0.10, 4), QuerySetSpec(32, 0.20, 8), QuerySetSpec(32, 0.30, 12))


@dataclass(frozen=True)
class GqnConfig:
    d: int = 64
    context_steps: int = 6
    sets: tuple[QuerySetSpec, ...] = DEFAULT_SETS
    freq_base: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"feature width d={self.d} must be >= 1")
        if self.context_steps < 0:
            raise ConfigError(f"context_steps must be >= 0, got {self.context_steps}")
        if not self.sets:
            raise ConfigError("need at least one query set")
        ratios = [s.ratio for s in self.sets]
        if any(b <= a for a, b in zip(ratios, ratios[1:])):
            raise ConfigError(f"set sampling ratios must be strictly ascending, got {ratios}")

    @property
    def num_sets(self) -> int:
        return len(self.sets)

    @property
    def tau(self) -> int:
        return sum(s.queries for s in self.sets)

    # MLP shapes, parameterized by d. With d=64 and three sets these are the
    # 128->64->64 edge/node/context stacks, the 320->128->64 skip MLP and the
    # 128->64->2 fusion-gate MLP.
    @property
    def edge_mlp_spec(self) -> MlpSpec:
        return MlpSpec.relu_stack((2 * self.d, self.d, self.d))

    @property
    def node_mlp_spec(self) -> MlpSpec:
        return MlpSpec.relu_stack((2 * self.d, self.d, self.d))

    @property
    def context_mlp_spec(self) -> MlpSpec:
        return MlpSpec.relu_stack((2 * self.d, self.d, self.d))

    @property
    def edge_q_spec(self) -> MlpSpec:
        return MlpSpec.linear(self.d, self.d)

    @property
    def edge_k_spec(self) -> MlpSpec:
        return MlpSpec.linear(self.d, self.d)

    @property
    def mlp1_spec(self) -> MlpSpec:
        return MlpSpec.relu_stack(((self.num_sets + 2) * self.d, 2 * self.d, self.d))

    @property
    def mlp2_spec(self) -> MlpSpec:
        return MlpSpec.relu_stack((2 * self.d, self.d, 2))


@dataclass
class GqnOutput:
    set_maps: tuple[Tensor, ...]   # one (pairs, d) map per set
    concat_map: Tensor             # (pairs, num_sets * d), channels in set order
    skip_map: Tensor               # (pairs, d)
    fused_map: Tensor | None       # (pairs, d) when a global-pathway map was supplied
    global_vectors: Tensor         # (tau, d) context-updated query summaries
    queries: tuple[GraphQuery, ...]


def init_params(config: GqnConfig, m_bev: int) -> ParamStore:
    """Register every parameter group the pipeline uses, seeded deterministically.

    Fails fast if any set's k is not below its sampled node count on a grid of
    ``m_bev`` cells.
    """
    for i, s in enumerate(config.sets):
        n = s.n_nodes(m_bev)
        if s.k >= n:
            raise ConfigError(f"set {i}: k={s.k} >= n={n} nodes (ratio {s.ratio} of {m_bev} cells)")
    params = ParamStore(seed=config.seed)
    for q in range(config.tau):
        params.register(f"query_global/{q}", (config.d,), fans=(config.d, config.d))
    params.register_mlp("edge_mlp", config.edge_mlp_spec)
    params.register_mlp("node_mlp", config.node_mlp_spec)
    params.register_mlp("edge_q", config.edge_q_spec)
    params.register_mlp("edge_k", config.edge_k_spec)
    params.register_mlp("context_mlp", config.context_mlp_spec)
    register_attention(params, "ctx_attn", config.d)
    params.register_mlp("mlp1", config.mlp1_spec)
    params.register_mlp("mlp2", config.mlp2_spec)
    return params


def project_to_bev(contributions: Sequence[tuple[Array, Tensor]], m_bev: int) -> Tensor:
    """Scatter node states of one set's queries onto the grid, averaging per cell.

    ``contributions`` holds (bev index array, (n, d) states) per query; cells
    without contributors stay zero. Returns a (m_bev, d) map in cell order.
    """
    return scatter_mean(contributions, m_bev)


def concat_sets(set_maps: Sequence[Tensor]) -> Tensor:
    """Concatenate per-set maps along channels, set index ascending."""
    rows = {m.data.shape[0] for m in set_maps}
    if len(rows) != 1:
        raise ShapeError(f"set maps disagree on cell count: {sorted(rows)}")
    return concat_cols(list(set_maps))


def skip_fuse(states: Tensor, concat_map: Tensor, enc: Tensor, params: ParamStore,
              spec: MlpSpec) -> Tensor:
    """Per-cell skip MLP over [input state || concatenated set maps || encoding]."""
    width = states.data.shape[1] + concat_map.data.shape[1] + enc.data.shape[1]
    if spec.widths[0] != width:
        raise ShapeError(f"skip MLP expects width {spec.widths[0]}, composed input is {width}")
    return mlp_forward(spec, params, "mlp1", concat_cols([states, concat_map, enc]))


def fusion_weights(graph_map: Tensor, global_map: Tensor, params: ParamStore,
                   spec: MlpSpec) -> Tensor:
    """Per-cell softmax weights (m, 2) for blending graph and global pathways."""
    if graph_map.data.shape != global_map.data.shape:
        raise ShapeError(f"pathway maps disagree: {graph_map.data.shape} vs {global_map.data.shape}")
    logits = mlp_forward(spec, params, "mlp2", concat_cols([graph_map, global_map]))
    return row_softmax(logits)


def soft_fusion(graph_map: Tensor, global_map: Tensor, params: ParamStore,
                spec: MlpSpec) -> Tensor:
    """Blend the two pathways per cell: w0 * graph + w1 * global, weights summing to 1."""
    w = fusion_weights(graph_map, global_map, params, spec)
    return add(scale_rows(graph_map, column(w, 0)), scale_rows(global_map, column(w, 1)))


def run_gqn(flat: FlatPairs, config: GqnConfig, params: ParamStore,
            global_map: Tensor | Array | None = None, threads: int = 1) -> GqnOutput:
    """Run every query set end to end over a flattened grid.

    ``global_map`` is the stand-in for a global reasoning pathway, aligned with
    the input pair order; without it the fused map is None. ``threads`` sizes
    the pool for the per-query stage; results are identical for any value.
    """
    states = Tensor(flat.states)
    enc = Tensor(flat.positions)

    jobs = []
    q_index = 0
    for set_index, spec in enumerate(config.sets):
        for _ in range(spec.queries):
            jobs.append((set_index, q_index, spec, params[f"query_global/{q_index}"]))
            q_index += 1

    def stage_one(job):
        set_index, q_index, spec, u = job
        query = init_graph_query(u, states, flat, set_index, q_index, spec)
        nodes = edge_focus_update(query, params, config.edge_mlp_spec, config.node_mlp_spec,
                                  config.edge_q_spec, config.edge_k_spec)
        return query, nodes, pool_query(nodes)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            staged = list(pool.map(stage_one, jobs))
    else:
        staged = [stage_one(job) for job in jobs]

    summaries = context_exchange(stack_rows([g for _, _, g in staged]),
                                 config.context_steps, params)

    set_maps = []
    q_index = 0
    for spec in config.sets:
        contributions = []
        for _ in range(spec.queries):
            query, nodes, _ = staged[q_index]
            mixed = infuse_context(nodes, take_row(summaries, q_index), params,
                                   config.context_mlp_spec)
            contributions.append((query.bev_indices, mixed))
            q_index += 1
        cell_map = project_to_bev(contributions, flat.m_bev)
        set_maps.append(gather_rows(cell_map, flat.bev_indices))  # back to pair order

    concat_map = concat_sets(set_maps)
    skip_map = skip_fuse(states, concat_map, enc, params, config.mlp1_spec)
    fused = None
    if global_map is not None:
        fused = soft_fusion(skip_map, as_tensor(global_map), params, config.mlp2_spec)

    return GqnOutput(
        set_maps=tuple(set_maps),
        concat_map=concat_map,
        skip_map=skip_map,
        fused_map=fused,
        global_vectors=summaries,
        queries=tuple(q for q, _, _ in staged),
    )


# ----------------------------------------------------------------------------
# desk-scale training demo


@dataclass
class TrainResult:
    losses: list[float]      # loss before any update, then after each step
    diverged: bool


def register_readout(params: ParamStore, d: int) -> None:
    """One-channel linear readout used by the training demo's mask regression."""
    params.register("readout/W", (d, 1), fans=(d, 1))
    params.register("readout/b", (1,), init="zeros")


def mask_loss(flat: FlatPairs, config: GqnConfig, params: ParamStore, mask: Array) -> Tensor:
    """Mean squared error of the skip-map readout against a per-pair 0/1 mask."""
    out = run_gqn(flat, config, params)
    pred = add(reshape(matmul(out.skip_map, params["readout/W"]), (flat.m_bev,)),
               params["readout/b"])
    err = sub(pred, Tensor(mask))
    return mean_all(mul(err, err))


def toy_train(scene_spec: SceneSpec, config: GqnConfig, steps: int,
              learning_rate: float) -> TrainResult:
    """Gradient-descend all parameters on a synthetic scene's object mask.

    Returns the loss curve (steps + 1 entries). A non-finite loss stops the
    run and flags it as diverged instead of raising.
    """
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    if scene_spec.d != config.d:
        raise ConfigError(f"scene d={scene_spec.d} != pipeline d={config.d}")
    grid, truth = generate_scene(scene_spec)
    enc = sinusoidal_encoding(scene_spec.height, scene_spec.width, scene_spec.d,
                              config.freq_base)
    flat = flatten_grid(grid, enc)
    params = init_params(config, flat.m_bev)
    register_readout(params, config.d)

    losses: list[float] = []

    def step_loss() -> Tensor | None:
        # Numeric blowups after a finite start are divergence, not a bug:
        # report them as a failed run instead of crashing.
        try:
            return mask_loss(flat, config, params, truth.mask)
        except InvalidInputError:
            if not losses:
                raise
            return None

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            loss = step_loss()
            if loss is None or not np.isfinite(loss.item()):
                return TrainResult(losses, diverged=True)
            losses.append(loss.item())
            backward(loss, params)
            for _, t in params.items():
                t.data = t.data - learning_rate * t.grad
        final = step_loss()
        if final is None or not np.isfinite(final.item()):
            return TrainResult(losses, diverged=True)
        losses.append(final.item())
        return TrainResult(losses, diverged=False)
