import math

import numpy as np
import pytest

from pkan import autodiff as ad
from pkan import nets
from pkan.spline import SplineSpec, basis_eval

RNG = np.random.default_rng(11)


def small_config(family="p_kan", likelihood="gaussian", **kw):
    kw.setdefault("context_len", 12)
    kw.setdefault("horizon", 3)
    kw.setdefault("hidden_sizes", (5, 4))
    return nets.ModelConfig(family=family, likelihood=likelihood, **kw)


def test_config_validation():
    with pytest.raises(nets.ConfigError):
        nets.ModelConfig(family="p_kan", likelihood="none")
    with pytest.raises(nets.ConfigError):
        nets.ModelConfig(family="kan_pf", likelihood="gaussian")
    with pytest.raises(nets.ConfigError):
        nets.ModelConfig(family="rnn", likelihood="gaussian")
    with pytest.raises(nets.ConfigError):
        small_config(context_len=0)


def test_kan_layer_all_zero_edges_gives_zero():
    spec = SplineSpec()
    layer = nets.KanLayer(3, 2, spec, RNG)
    layer.base_weight.value[:] = 0.0
    layer.coeffs.value[:] = 0.0
    out = layer.forward(ad.tensor(RNG.normal(size=(4, 3))))
    np.testing.assert_array_equal(out.value, np.zeros((4, 2)))


def test_kan_layer_single_edge_reduces_to_silu():
    spec = SplineSpec()
    layer = nets.KanLayer(1, 1, spec, RNG)
    layer.base_weight.value[:] = 1.0
    layer.spline_weight.value[:] = 0.0
    x = RNG.normal(size=(5, 1))
    out = layer.forward(ad.tensor(x))
    np.testing.assert_allclose(out.value, ad.silu(x), rtol=1e-14)


def test_kan_layer_matches_double_loop_oracle():
    spec = SplineSpec()
    layer = nets.KanLayer(3, 2, spec, RNG)
    x = RNG.uniform(-2.5, 2.5, size=(4, 3))
    out = layer.forward(ad.tensor(x)).value
    expected = np.zeros((4, 2))
    for b in range(4):
        for o in range(2):
            acc = 0.0
            for i in range(3):
                xi = x[b, i]
                sil = xi / (1.0 + math.exp(-xi))
                spline = float(
                    np.dot(layer.coeffs.value[o, i], basis_eval(spec, xi))
                )
                acc += (
                    layer.base_weight.value[o, i] * sil
                    + layer.spline_weight.value[o, i] * spline
                )
            expected[b, o] = acc
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


def test_kan_layer_rejects_wrong_width():
    layer = nets.KanLayer(3, 2, SplineSpec(), RNG)
    with pytest.raises(ad.ShapeError):
        layer.forward(ad.tensor(np.zeros((4, 5))))


def test_mlp_layer_identity_and_bias():
    layer = nets.MlpLayer(3, 3, "identity", RNG)
    layer.weight.value[:] = np.eye(3)
    layer.bias.value[:] = 0.0
    x = RNG.normal(size=(2, 3))
    np.testing.assert_allclose(layer.forward(ad.tensor(x)).value, x, rtol=1e-14)
    layer.weight.value[:] = 0.0
    layer.bias.value[:] = [1.0, 2.0, 3.0]
    np.testing.assert_allclose(
        layer.forward(ad.tensor(x)).value, np.tile([1.0, 2.0, 3.0], (2, 1))
    )


def test_mlp_stack_matches_matrix_oracle():
    l1 = nets.MlpLayer(4, 3, "silu", RNG)
    l2 = nets.MlpLayer(3, 2, "identity", RNG)
    x = RNG.normal(size=(5, 4))
    got = l2.forward(l1.forward(ad.tensor(x))).value
    h = x @ l1.weight.value.T + l1.bias.value
    h = h / (1.0 + np.exp(-h))
    expected = h @ l2.weight.value.T + l2.bias.value
    np.testing.assert_allclose(got, expected, rtol=1e-12)


@pytest.mark.parametrize("family", ["p_mlp", "p_kan"])
def test_predict_all_zero_parameters(family):
    cfg = small_config(family=family, likelihood="student_t")
    state = nets.build_model(cfg)
    state.load_flat(np.zeros(state.flatten().size))
    mean, std = 40.0, 4.0
    state.standardizer = (mean, std)
    d = nets.predict(state, np.full(cfg.context_len, 37.0))
    np.testing.assert_allclose(d.mu, np.full(3, mean), rtol=1e-12)
    np.testing.assert_allclose(d.sigma, np.full(3, math.log(2.0) * std), rtol=1e-4)
    np.testing.assert_allclose(d.nu, np.full(3, 2.0 + math.log(2.0)), rtol=1e-12)


def test_predict_positive_sigma_nu_for_random_parameters():
    cfg = small_config(likelihood="student_t")
    for seed in range(5):
        state = nets.build_model(nets.ModelConfig(**{**cfg.to_dict(), "seed": seed}))
        state.load_flat(np.random.default_rng(seed).normal(0, 2, state.flatten().size))
        d = nets.predict(state, np.random.default_rng(seed).uniform(0, 10, cfg.context_len))
        assert np.all(d.sigma > 0)
        assert np.all(d.nu >= 2)  # softplus underflows to exactly 0 for large negatives


def test_predict_deterministic():
    cfg = small_config()
    state = nets.build_model(cfg)
    ctx = RNG.uniform(0, 10, cfg.context_len)
    a = nets.predict(state, ctx)
    b = nets.predict(state, ctx)
    assert np.array_equal(a.mu, b.mu) and np.array_equal(a.sigma, b.sigma)


def test_predict_shift_equivariance():
    cfg = small_config()
    state = nets.build_model(cfg)
    state.standardizer = (10.0, 2.0)
    ctx = RNG.uniform(5, 15, cfg.context_len)
    base = nets.predict(state, ctx)
    shift = 100.0
    state_shifted = nets.build_model(cfg)
    state_shifted.load_flat(state.flatten())
    state_shifted.standardizer = (10.0 + shift, 2.0)
    moved = nets.predict(state_shifted, ctx + shift)
    np.testing.assert_allclose(moved.mu, base.mu + shift, rtol=1e-12)
    np.testing.assert_allclose(moved.sigma, base.sigma, rtol=1e-12)


def test_count_parameters_formula_examples():
    kan_cfg = nets.ModelConfig(
        family="kan_pf", likelihood="none", context_len=3, horizon=2,
        hidden_sizes=(4,), num_basis=8,
    )
    # layers 3->4 and 4->2 with R = 8: 4*3*(8+2) + 2*4*(8+2) = 200
    assert nets.count_parameters(kan_cfg) == 200
    mlp_cfg = nets.ModelConfig(
        family="mlp_pf", likelihood="none", context_len=3, horizon=2, hidden_sizes=(4,)
    )
    # 4*(3+1) + 2*(4+1) = 26
    assert nets.count_parameters(mlp_cfg) == 26


@pytest.mark.parametrize("family", nets.FAMILIES)
@pytest.mark.parametrize("likelihood", ["gaussian", "student_t", "none"])
@pytest.mark.parametrize("hidden", [(), (6,), (7, 5)])
def test_count_equals_flattened_length(family, likelihood, hidden):
    is_pf = family.endswith("_pf")
    if is_pf != (likelihood == "none"):
        pytest.skip("invalid combination")
    cfg = nets.ModelConfig(
        family=family, likelihood=likelihood, context_len=9, horizon=4,
        hidden_sizes=hidden,
    )
    state = nets.build_model(cfg)
    assert nets.count_parameters(cfg) == state.flatten().size


def test_default_counts_in_reported_bands():
    for likelihood in ("gaussian", "student_t"):
        kan = nets.count_parameters(nets.ModelConfig("p_kan", likelihood))
        mlp = nets.count_parameters(nets.ModelConfig("p_mlp", likelihood))
        assert 82_000 <= kan <= 90_000
        assert mlp > 240_000


def test_serialize_round_trip_bit_exact():
    cfg = small_config(likelihood="student_t")
    state = nets.build_model(cfg)
    state.standardizer = (12.5, 3.25)
    blob = nets.serialize(state)
    clone = nets.deserialize(blob)
    assert np.array_equal(state.flatten(), clone.flatten())
    assert clone.standardizer == state.standardizer
    assert clone.config == state.config
    assert nets.serialize(clone) == blob


def test_deserialize_detects_corruption():
    state = nets.build_model(small_config())
    blob = bytearray(nets.serialize(state))
    blob[100] ^= 0xFF
    with pytest.raises(nets.ModelFileError):
        nets.deserialize(bytes(blob))
    with pytest.raises(nets.ModelFileError):
        nets.deserialize(b"nope" + bytes(blob))


def test_divergence_error_carries_layer_index():
    cfg = small_config(family="p_mlp")
    state = nets.build_model(cfg)
    state.layers[1].weight.value[:] = np.inf
    with pytest.raises(nets.DivergenceError) as exc:
        nets.forward(state, np.zeros((1, cfg.context_len)))
    assert exc.value.layer_index == 1
