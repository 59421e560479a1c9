import math

import numpy as np
import pytest

from gqn.autodiff import MlpSpec, ParamStore, Tensor, grad_check, sum_all
from gqn.edge_focus import edge_attention, edge_features, edge_focus_update, update_nodes
from gqn.errors import ContractError, ShapeError
from gqn.query_init import GraphQuery, QuerySetSpec, build_knn_edges, init_graph_query
from gqn.scene import SceneSpec, flatten_grid, generate_scene, sinusoidal_encoding


def _manual_query(states, positions, k):
    """Build a GraphQuery directly from raw arrays with unit selection weights."""
    states = np.asarray(states, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    n = states.shape[0]
    src, dst = build_knn_edges(states, k)
    return GraphQuery(
        set_index=0, query_index=0, n_nodes=n, k=k,
        bev_indices=np.arange(n), positions=positions, states_raw=states,
        alpha=Tensor(np.full(n, 1.0 / n)), states=Tensor(states),
        edge_src=src, edge_dst=dst,
    )


def _linear_params(name, weights, d_out, seed=0):
    params = ParamStore(seed=seed)
    spec = MlpSpec.linear(np.asarray(weights).shape[0], d_out)
    params.register_mlp(name, spec)
    params[f"{name}/W0"].data[...] = weights
    params[f"{name}/b0"].data[...] = 0.0
    return params, spec


# ----------------------------------------------------------------------------
# edge features


def test_edge_feature_hand_evaluation():
    # all-ones linear layer on input [1, -1, 2, 0] -> 1 - 1 + 2 + 0 = 2 everywhere
    states = [[2.0, 0.0], [5.0, 5.0]]
    positions = [[1.0, -1.0], [2.0, -2.0]]
    q = _manual_query(states, positions, 1)
    params, spec = _linear_params("edge_mlp", np.ones((4, 2)), 2)
    feats = edge_features(q, params, spec)
    # edge 0 -> 1 input is [p1 - p0 || x1] = [1, -1, 5, 5] -> 10; edge 1 -> 0 is [-1, 1, 2, 0] -> 2
    np.testing.assert_allclose(feats.data, [[10.0, 10.0], [2.0, 2.0]], atol=1e-12)


def test_edge_feature_zero_relpos_when_positions_coincide():
    q = _manual_query([[1.0, 2.0], [3.0, 4.0]], [[0.5, 0.5], [0.5, 0.5]], 1)
    # weights picking out the relative-position half only
    w = np.vstack([np.eye(2), np.zeros((2, 2))])
    params, spec = _linear_params("edge_mlp", w, 2)
    feats = edge_features(q, params, spec)
    np.testing.assert_array_equal(feats.data, np.zeros((2, 2)))


def test_edge_feature_relpos_antisymmetric():
    q = _manual_query([[1.0, 0.0], [1.0, 0.1]], [[0.0, 1.0], [2.0, 5.0]], 1)
    w = np.vstack([np.eye(2), np.zeros((2, 2))])
    params, spec = _linear_params("edge_mlp", w, 2)
    feats = edge_features(q, params, spec).data
    np.testing.assert_allclose(feats[0], -feats[1], atol=1e-15)  # p1-p0 vs p0-p1


def test_edge_feature_width_mismatch():
    q = _manual_query([[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [1.0, 1.0]], 1)
    params = ParamStore(seed=0)
    bad = MlpSpec.relu_stack((6, 2, 2))
    params.register_mlp("edge_mlp", bad)
    with pytest.raises(ShapeError):
        edge_features(q, params, bad)


# ----------------------------------------------------------------------------
# edge attention


def _qk_identity_params(d):
    params = ParamStore(seed=0)
    spec = MlpSpec.linear(d, d)
    for name in ("edge_q", "edge_k"):
        params.register_mlp(name, spec)
        params[f"{name}/W0"].data[...] = np.eye(d)
        params[f"{name}/b0"].data[...] = 0.0
    return params, spec


def test_single_edge_gets_weight_one():
    params, spec = _qk_identity_params(2)
    beta = edge_attention(Tensor(np.array([[3.0, -1.0]])), 1, 1, params, spec, spec)
    np.testing.assert_array_equal(beta.data, [1.0])


def test_identical_edge_features_uniform_weights():
    params, spec = _qk_identity_params(2)
    feats = Tensor(np.tile([[0.7, 0.2]], (4, 1)))
    beta = edge_attention(feats, 1, 4, params, spec, spec)
    np.testing.assert_allclose(beta.data, np.full(4, 0.25), atol=1e-15)


def test_edge_attention_direct_softmax():
    # identity q/k projections give scores |e|^2: [ln 3, 0] -> [0.75, 0.25]
    params, spec = _qk_identity_params(2)
    feats = Tensor(np.array([[math.sqrt(math.log(3.0)), 0.0], [0.0, 0.0]]))
    beta = edge_attention(feats, 1, 2, params, spec, spec)
    np.testing.assert_allclose(beta.data, [0.75, 0.25], atol=1e-12)


def test_edge_attention_rejects_zero_edges():
    params, spec = _qk_identity_params(2)
    with pytest.raises(ContractError):
        edge_attention(Tensor(np.zeros((0, 2))), 0, 0, params, spec, spec)


def test_beta_normalizes_per_node():
    rng = np.random.default_rng(0)
    params, spec = _qk_identity_params(3)
    beta = edge_attention(Tensor(rng.standard_normal((12, 3))), 4, 3, params, spec, spec)
    sums = beta.data.reshape(4, 3).sum(axis=1)
    np.testing.assert_allclose(sums, np.ones(4), atol=1e-9)


# ----------------------------------------------------------------------------
# node update


def test_update_single_edge_uses_its_feature():
    q = _manual_query([[1.0, 2.0], [3.0, 4.0]], np.zeros((2, 2)), 1)
    # rho = linear pass-through of the message half
    w = np.vstack([np.eye(2), np.zeros((2, 2))])
    params, rho_spec = _linear_params("node_mlp", w, 2)
    feats = Tensor(np.array([[5.0, 6.0], [7.0, 8.0]]))
    beta = Tensor(np.ones(2))
    out = update_nodes(q, feats, beta, params, rho_spec)
    np.testing.assert_allclose(out.data, feats.data, atol=1e-15)


def test_update_passthrough_of_state_half_with_zero_edges():
    q = _manual_query([[1.0, 2.0], [3.0, 4.0]], np.zeros((2, 2)), 1)
    w = np.vstack([np.zeros((2, 2)), np.eye(2)])
    params, rho_spec = _linear_params("node_mlp", w, 2)
    out = update_nodes(q, Tensor(np.zeros((2, 2))), Tensor(np.ones(2)), params, rho_spec)
    np.testing.assert_allclose(out.data, q.states.data, atol=1e-15)


def test_update_invariant_to_edge_storage_order():
    rng = np.random.default_rng(1)
    q = _manual_query(rng.standard_normal((5, 3)), rng.standard_normal((5, 3)), 3)
    params = ParamStore(seed=2)
    rho_spec = MlpSpec.relu_stack((6, 3, 3))
    params.register_mlp("node_mlp", rho_spec)
    feats = Tensor(rng.standard_normal((15, 3)))
    beta = Tensor(rng.random(15))
    base = update_nodes(q, feats, beta, params, rho_spec).data
    for _ in range(5):
        perm = np.concatenate([3 * g + rng.permutation(3) for g in range(5)])
        # permute each node's edges together with their weights
        q2 = _manual_query(q.states_raw, q.positions, 3)
        q2.edge_src, q2.edge_dst = q.edge_src[perm], q.edge_dst[perm]
        out = update_nodes(q2, Tensor(feats.data[perm]), Tensor(beta.data[perm]),
                           params, rho_spec).data
        assert np.array_equal(out, base)


# ----------------------------------------------------------------------------
# composed operator


def _toy_query(seed=0, d=4, k=3):
    spec = SceneSpec(6, 6, d, boxes=(), clutter_density=0.5, noise_amplitude=0.2, seed=seed)
    grid, _ = generate_scene(spec)
    flat = flatten_grid(grid, sinusoidal_encoding(6, 6, d))
    u = Tensor(np.random.default_rng(seed).standard_normal(d), requires_grad=True)
    return init_graph_query(u, Tensor(flat.states), flat, 0, 0, QuerySetSpec(1, 0.3, k)), u


def test_composition_invariant_under_slot_relabeling():
    query, _ = _toy_query(seed=4)
    d = 4
    params = ParamStore(seed=3)
    edge_spec = MlpSpec.relu_stack((2 * d, d, d))
    node_spec = MlpSpec.relu_stack((2 * d, d, d))
    lin = MlpSpec.linear(d, d)
    for name, spec in (("edge_mlp", edge_spec), ("node_mlp", node_spec),
                       ("edge_q", lin), ("edge_k", lin)):
        params.register_mlp(name, spec)
    base = edge_focus_update(query, params, edge_spec, node_spec, lin, lin).data

    rng = np.random.default_rng(8)
    for _ in range(5):
        perm = rng.permutation(query.n_nodes)
        relabeled = GraphQuery(
            set_index=0, query_index=0, n_nodes=query.n_nodes, k=query.k,
            bev_indices=query.bev_indices[perm], positions=query.positions[perm],
            states_raw=query.states_raw[perm],
            alpha=Tensor(query.alpha.data[perm]), states=Tensor(query.states.data[perm]),
            edge_src=np.repeat(np.arange(query.n_nodes), query.k),
            edge_dst=np.empty(0),
        )
        src, dst = build_knn_edges(relabeled.states_raw, query.k)
        relabeled.edge_src, relabeled.edge_dst = src, dst
        out = edge_focus_update(relabeled, params, edge_spec, node_spec, lin, lin).data
        assert np.array_equal(out, base[perm])  # identical multiset, relabeled rows


def test_edge_focus_gradients_match_finite_differences():
    query, u = _toy_query(seed=6)
    d = 4
    params = ParamStore(seed=5)
    edge_spec = MlpSpec.relu_stack((2 * d, d, d))
    node_spec = MlpSpec.relu_stack((2 * d, d, d))
    lin = MlpSpec.linear(d, d)
    for name, spec in (("edge_mlp", edge_spec), ("node_mlp", node_spec),
                       ("edge_q", lin), ("edge_k", lin)):
        params.register_mlp(name, spec)

    def fn(p):
        return sum_all(edge_focus_update(query, p, edge_spec, node_spec, lin, lin))

    assert grad_check(fn, params, eps=1e-5, max_coords_per_param=8, seed=0) <= 1e-4
