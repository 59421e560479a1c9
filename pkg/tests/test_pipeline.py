import numpy as np
import pytest

from gqn.autodiff import ParamStore, Tensor, backward, sum_all
from gqn.errors import ConfigError, ShapeError
from gqn.pipeline import (GqnConfig, concat_sets, fusion_weights, init_params, mask_loss,
                          project_to_bev, run_gqn, skip_fuse, soft_fusion, toy_train)
from gqn.query_init import QuerySetSpec
from gqn.scene import SceneSpec, demo_boxes, flatten_grid, generate_scene, sinusoidal_encoding

TOY_SETS = (QuerySetSpec(4, 0.1, 2), QuerySetSpec(4, 0.2, 3))


def toy_config(**kw):
    defaults = dict(d=8, context_steps=2, sets=TOY_SETS, seed=0)
    defaults.update(kw)
    return GqnConfig(**defaults)


def toy_inputs(h=8, w=8, d=8, seed=0):
    spec = SceneSpec(h, w, d, boxes=demo_boxes(h, w, d, 2, seed),
                     clutter_density=0.1, noise_amplitude=0.05, seed=seed)
    grid, truth = generate_scene(spec)
    flat = flatten_grid(grid, sinusoidal_encoding(h, w, d))
    return spec, flat, truth


# ----------------------------------------------------------------------------
# configuration and parameters


def test_config_requires_strictly_ascending_ratios():
    with pytest.raises(ConfigError):
        GqnConfig(d=8, sets=(QuerySetSpec(2, 0.2, 2), QuerySetSpec(2, 0.2, 3)))


def test_default_config_matches_reference_dimensions():
    cfg = GqnConfig()
    assert cfg.tau == 96
    assert cfg.mlp1_spec.widths == (320, 128, 64)   # 64*5 -> 128 -> 64
    assert cfg.mlp2_spec.widths == (128, 64, 2)     # 64*2 -> 64 -> 2
    assert cfg.edge_mlp_spec.widths == (128, 64, 64)
    assert cfg.context_steps == 6
    assert [s.k for s in cfg.sets] == [4, 8, 12]
    assert [s.ratio for s in cfg.sets] == [0.10, 0.20, 0.30]


def test_init_params_same_seed_bitidentical():
    a = init_params(toy_config(), 64)
    b = init_params(toy_config(), 64)
    assert a.names() == b.names()
    for name, t in a.items():
        assert np.array_equal(t.data, b[name].data)


def test_init_params_registers_one_global_vector_per_query():
    params = init_params(toy_config(), 64)
    assert sum(1 for n in params.names() if n.startswith("query_global/")) == 8


def test_default_config_registers_96_global_vectors():
    params = init_params(GqnConfig(), 4096)
    assert sum(1 for n in params.names() if n.startswith("query_global/")) == 96


def test_init_params_rejects_k_not_below_n():
    cfg = toy_config(sets=(QuerySetSpec(2, 0.1, 7),))  # n = round(6.4) = 6 <= k
    with pytest.raises(ConfigError):
        init_params(cfg, 64)


# ----------------------------------------------------------------------------
# projection / concatenation / fusion


def test_projection_single_node_writes_single_cell():
    v = Tensor(np.array([[1.0, 2.0, 3.0]]))
    out = project_to_bev([(np.array([2 * 4 + 3]), v)], 16).data  # cell (2,3) of 4x4
    assert np.array_equal(out[11], [1.0, 2.0, 3.0])
    assert np.count_nonzero(out) == 3


def test_projection_averages_contributors():
    a = Tensor(np.array([[2.0, 4.0]]))
    b = Tensor(np.array([[6.0, 0.0]]))
    out = project_to_bev([(np.array([5]), a), (np.array([5]), b)], 9).data
    np.testing.assert_array_equal(out[5], [4.0, 2.0])


def test_projection_untouched_cells_zero():
    out = project_to_bev([(np.array([0]), Tensor(np.ones((1, 2))))], 4).data
    assert np.array_equal(out[1:], np.zeros((3, 2)))


def test_concat_sets_orders_channels_by_set():
    a = Tensor(np.ones((4, 2)))
    b = Tensor(np.full((4, 2), 2.0))
    c = Tensor(np.full((4, 2), 3.0))
    out = concat_sets([a, b, c])
    assert out.data.shape == (4, 6)
    assert np.array_equal(out.data[:, 0:2], a.data)
    assert np.array_equal(out.data[:, 4:6], c.data)


def test_concat_sets_rejects_row_mismatch():
    with pytest.raises(ShapeError):
        concat_sets([Tensor(np.ones((4, 2))), Tensor(np.ones((5, 2)))])


def _fusion_params(cfg):
    params = ParamStore(seed=0)
    params.register_mlp("mlp1", cfg.mlp1_spec)
    params.register_mlp("mlp2", cfg.mlp2_spec)
    return params


def test_skip_fuse_zero_weights_yields_bias():
    cfg = toy_config()
    params = _fusion_params(cfg)
    for name in ("mlp1/W0", "mlp1/b0", "mlp1/W1"):
        params[name].data[...] = 0.0
    params["mlp1/b1"].data[...] = np.arange(8.0)
    m = 6
    out = skip_fuse(Tensor(np.random.default_rng(0).standard_normal((m, 8))),
                    Tensor(np.zeros((m, 16))), Tensor(np.zeros((m, 8))), params, cfg.mlp1_spec)
    np.testing.assert_array_equal(out.data, np.tile(np.arange(8.0), (m, 1)))


def test_skip_fuse_is_per_cell_pure():
    cfg = toy_config()
    params = _fusion_params(cfg)
    row_s, row_c, row_e = np.ones(8), np.full(16, 0.5), np.zeros(8)
    out = skip_fuse(Tensor(np.tile(row_s, (3, 1))), Tensor(np.tile(row_c, (3, 1))),
                    Tensor(np.tile(row_e, (3, 1))), params, cfg.mlp1_spec).data
    assert np.array_equal(out[0], out[1]) and np.array_equal(out[1], out[2])


def test_skip_fuse_rejects_wrong_composed_width():
    cfg = toy_config()
    params = _fusion_params(cfg)
    with pytest.raises(ShapeError):
        skip_fuse(Tensor(np.zeros((3, 8))), Tensor(np.zeros((3, 8))),  # 8+8+8 != 32
                  Tensor(np.zeros((3, 8))), params, cfg.mlp1_spec)


def test_soft_fusion_equal_logits_averages_pathways():
    cfg = toy_config()
    params = _fusion_params(cfg)
    for name in ("mlp2/W0", "mlp2/b0", "mlp2/W1", "mlp2/b1"):
        params[name].data[...] = 0.0
    g = np.random.default_rng(1).standard_normal((5, 8))
    glob = np.random.default_rng(2).standard_normal((5, 8))
    out = soft_fusion(Tensor(g), Tensor(glob), params, cfg.mlp2_spec)
    np.testing.assert_allclose(out.data, (g + glob) / 2.0, atol=1e-15)


def test_fusion_weights_sum_to_one():
    cfg = toy_config()
    params = _fusion_params(cfg)
    g = np.random.default_rng(3).standard_normal((10, 8))
    glob = np.random.default_rng(4).standard_normal((10, 8))
    w = fusion_weights(Tensor(g), Tensor(glob), params, cfg.mlp2_spec).data
    np.testing.assert_allclose(w.sum(axis=1), np.ones(10), atol=1e-9)


def test_soft_fusion_saturated_logits_select_graph_pathway():
    cfg = toy_config()
    params = _fusion_params(cfg)
    for name in ("mlp2/W0", "mlp2/b0", "mlp2/W1"):
        params[name].data[...] = 0.0
    params["mlp2/b1"].data[...] = [20.0, -20.0]
    g = np.random.default_rng(5).standard_normal((6, 8))
    glob = np.random.default_rng(6).standard_normal((6, 8))
    out = soft_fusion(Tensor(g), Tensor(glob), params, cfg.mlp2_spec)
    np.testing.assert_allclose(out.data, g, atol=1e-8)


def test_soft_fusion_rejects_shape_mismatch():
    cfg = toy_config()
    params = _fusion_params(cfg)
    with pytest.raises(ShapeError):
        soft_fusion(Tensor(np.zeros((4, 8))), Tensor(np.zeros((5, 8))), params, cfg.mlp2_spec)


# ----------------------------------------------------------------------------
# full pipeline


def test_run_gqn_output_shapes():
    cfg = toy_config()
    _, flat, _ = toy_inputs()
    params = init_params(cfg, flat.m_bev)
    out = run_gqn(flat, cfg, params, global_map=flat.states)
    assert out.concat_map.data.shape == (64, 2 * 8)
    assert out.skip_map.data.shape == (64, 8)
    assert out.fused_map.data.shape == (64, 8)
    assert out.global_vectors.data.shape == (8, 8)
    assert len(out.set_maps) == 2 and len(out.queries) == 8


def test_run_gqn_without_global_map_has_no_fused_map():
    cfg = toy_config()
    _, flat, _ = toy_inputs()
    params = init_params(cfg, flat.m_bev)
    assert run_gqn(flat, cfg, params).fused_map is None


def test_run_gqn_flatten_order_invariance_bitexact():
    cfg = toy_config()
    _, flat, _ = toy_inputs(seed=1)
    params = init_params(cfg, flat.m_bev)
    base = run_gqn(flat, cfg, params, global_map=flat.states)
    perm = np.random.default_rng(7).permutation(flat.m_bev)
    inv = np.argsort(perm)
    out = run_gqn(flat.reordered(perm), cfg, params, global_map=flat.states[perm])
    assert np.array_equal(out.skip_map.data[inv], base.skip_map.data)
    assert np.array_equal(out.fused_map.data[inv], base.fused_map.data)
    assert np.array_equal(out.concat_map.data[inv], base.concat_map.data)
    assert np.array_equal(out.global_vectors.data, base.global_vectors.data)


def test_run_gqn_thread_count_does_not_change_bits():
    cfg = toy_config()
    _, flat, _ = toy_inputs(seed=2)
    params = init_params(cfg, flat.m_bev)
    a = run_gqn(flat, cfg, params, global_map=flat.states, threads=1)
    b = run_gqn(flat, cfg, params, global_map=flat.states, threads=8)
    assert np.array_equal(a.fused_map.data, b.fused_map.data)
    assert np.array_equal(a.global_vectors.data, b.global_vectors.data)


def test_every_global_vector_receives_gradient():
    cfg = toy_config()
    scene, flat, truth = toy_inputs(seed=3)
    params = init_params(cfg, flat.m_bev)
    grads = backward(sum_all(run_gqn(flat, cfg, params, global_map=flat.states).fused_map),
                     params)
    for q in range(cfg.tau):
        assert np.linalg.norm(grads[f"query_global/{q}"]) > 0.0


def test_mask_loss_gradient_reaches_u():
    cfg = toy_config()
    scene, flat, truth = toy_inputs(h=16, w=16, seed=0)
    params = init_params(cfg, flat.m_bev)
    from gqn.pipeline import register_readout
    register_readout(params, cfg.d)
    grads = backward(mask_loss(flat, cfg, params, truth.mask), params)
    assert all(np.linalg.norm(grads[f"query_global/{q}"]) > 0.0 for q in range(cfg.tau))


# ----------------------------------------------------------------------------
# training demo


def test_toy_train_zero_steps_returns_initial_loss_only():
    scene, _, _ = toy_inputs(h=16, w=16)
    result = toy_train(scene, toy_config(), steps=0, learning_rate=0.01)
    assert len(result.losses) == 1 and not result.diverged


def test_toy_train_deterministic_curves():
    scene, _, _ = toy_inputs(h=16, w=16)
    a = toy_train(scene, toy_config(), steps=4, learning_rate=0.01)
    b = toy_train(scene, toy_config(), steps=4, learning_rate=0.01)
    assert a.losses == b.losses and len(a.losses) == 5


def test_toy_train_rejects_mismatched_d():
    scene, _, _ = toy_inputs(h=16, w=16, d=8)
    with pytest.raises(ConfigError):
        toy_train(scene, toy_config(d=4, sets=TOY_SETS), steps=1, learning_rate=0.01)
