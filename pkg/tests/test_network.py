import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import linear_net, random_net, zero_net
from nspinn.autodiff import jet_eval
from nspinn.errors import CheckpointFormatError, CheckpointParseError, ContractViolation
from nspinn.network import (ACTIVATIONS, Checkpoint, Mlp, checkpoint_from_json, checkpoint_to_json,
                            forward, load, load_checkpoint, new_mlp, save, save_checkpoint)


def _param_count(sizes):
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def test_new_mlp_tgv_architecture():
    # 3 hidden layers of 128 neurons, as in the Taylor-Green runs
    net = new_mlp(3, 128, "silu", 42, unsteady=True)
    assert net.hidden_layers == 3
    assert net.widths == [128, 128, 128]
    assert net.input_dim == 3
    assert net.weights[-1].shape == (3, 128)


def test_new_mlp_cylinder_parameter_count():
    # 6 hidden layers of 512 neurons, as in the cylinder runs
    net = new_mlp(6, 512, "silu", 1, unsteady=True)
    expected = _param_count([3] + [512] * 6 + [3])
    assert expected == (3 * 512 + 512) + 5 * (512 * 512 + 512) + (512 * 3 + 3) == 1_316_867
    assert net.n_params == expected


def test_single_unit_identity_net_is_composed_affine(rng):
    net = new_mlp(1, 1, "identity", 0, unsteady=False)
    pts = rng.normal(size=(7, 2))
    (a0, a1), (b0, b1) = net.weights, net.biases
    expected = (pts @ a0.T + b0) @ a1.T + b1
    np.testing.assert_array_equal(forward(net, pts), expected)


@pytest.mark.parametrize("layers,neurons", [(0, 4), (2, 0)])
def test_new_mlp_rejects_zero_sizes(layers, neurons):
    with pytest.raises(ContractViolation):
        new_mlp(layers, neurons)


def test_same_seed_same_parameters():
    a, b = new_mlp(2, 16, seed=5), new_mlp(2, 16, seed=5)
    c = new_mlp(2, 16, seed=6)
    assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params))
    assert not np.array_equal(a.weights[0], c.weights[0])


@given(st.integers(1, 4), st.integers(1, 40), st.integers(0, 2**32 - 1), st.booleans())
def test_glorot_bounds_and_zero_biases(layers, neurons, seed, unsteady):
    net = new_mlp(layers, neurons, seed=seed, unsteady=unsteady)
    for w, b in zip(net.weights, net.biases):
        fan_out, fan_in = w.shape
        s = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(np.abs(w) <= s)
        assert not b.any()


def test_zero_net_forward_is_zero():
    assert not forward(zero_net(), np.ones((4, 3))).any()


def test_linear_net_forward():
    pts = np.array([[1.0, 2.0, 3.0], [-0.5, 0.25, 4.0]])
    np.testing.assert_array_equal(forward(linear_net(), pts), pts * [2.0, 3.0, 5.0])


@given(st.integers(0, 10**6), st.sampled_from(sorted(ACTIVATIONS)), st.booleans(),
       st.sampled_from([32, 64]), st.booleans())
def test_forward_equals_jet_values_bitwise(seed, act, unsteady, precision, literal):
    rng = np.random.default_rng(seed)
    base = random_net(rng, [7, 5], act, unsteady, precision=precision)
    net = Mlp(base.weights, base.biases, act, literal, precision)
    pts = rng.uniform(-2, 2, size=(9, net.input_dim))
    for order in (0, 1, 2):
        np.testing.assert_array_equal(forward(net, pts), jet_eval(net, pts, order).values)


def test_literal_output_activation_applies_to_last_layer(rng):
    base = random_net(rng, [4], "sigmoid")
    lit = Mlp(base.weights, base.biases, "sigmoid", literal_output_activation=True)
    pts = rng.normal(size=(5, 3))
    out = forward(lit, pts)
    assert np.all((out > 0) & (out < 1))
    np.testing.assert_allclose(out, 1.0 / (1.0 + np.exp(-forward(base, pts))), rtol=1e-14)


def test_dimension_mismatch():
    net = new_mlp(1, 4, unsteady=True)
    with pytest.raises(ContractViolation):
        forward(net, np.zeros((2, 2)))


def test_shape_and_finiteness_validation():
    with pytest.raises(ContractViolation):
        Mlp((np.zeros((4, 3)), np.zeros((2, 4))), (np.zeros(4), np.zeros(2)))
    with pytest.raises(ContractViolation):
        Mlp((np.zeros((4, 3)), np.zeros((3, 5))), (np.zeros(4), np.zeros(3)))
    with pytest.raises(ContractViolation):
        Mlp((np.full((4, 3), np.nan), np.zeros((3, 4))), (np.zeros(4), np.zeros(3)))
    with pytest.raises(ContractViolation):
        new_mlp(1, 4, activation="relu")


@pytest.mark.parametrize("name", ["silu", "sigmoid", "tanh"])
def test_activation_derivatives_against_high_precision(name):
    funcs = {
        "silu": lambda z: z / (1 + mpmath.exp(-z)),
        "sigmoid": lambda z: 1 / (1 + mpmath.exp(-z)),
        "tanh": mpmath.tanh,
    }
    zs = np.linspace(-12, 12, 41)
    derivs = ACTIVATIONS[name].derivatives(zs, 3)
    mpmath.mp.dps = 40
    for order in range(4):
        ref = np.array([float(mpmath.diff(funcs[name], mpmath.mpf(z), order)) for z in zs])
        np.testing.assert_allclose(derivs[order], ref, rtol=1e-12, atol=1e-15)


# -- checkpoints --------------------------------------------------------------


@pytest.mark.parametrize("precision", [32, 64])
def test_checkpoint_round_trip_bitwise(tmp_path, rng, precision):
    net = random_net(rng, [6, 5], precision=precision)
    path = tmp_path / "ckpt.json"
    save(net, path, variant="steady", iteration=17, loss=0.125)
    ckpt = load_checkpoint(path)
    assert ckpt.variant == "steady" and ckpt.iteration == 17 and ckpt.loss == 0.125
    back = ckpt.net
    assert back.precision == precision and back.activation == net.activation
    for a, b in zip(net.params, back.params):
        assert a.dtype == b.dtype
        assert np.array_equal(a, b)


def test_checkpoint_json_fields(rng):
    doc = json.loads(checkpoint_to_json(Checkpoint(random_net(rng, [3]), "unsteady", 2, 1.5)))
    assert {"version", "variant", "activation", "precision", "iteration", "loss", "layers"} <= set(doc)
    assert doc["layers"][0]["rows"] == 3 and doc["layers"][0]["cols"] == 3
    assert len(doc["layers"][0]["A"]) == 9


def test_truncated_checkpoint_reports_byte_offset(tmp_path, rng):
    text = checkpoint_to_json(Checkpoint(random_net(rng, [3])))
    cut = text[: len(text) // 2]
    with pytest.raises(CheckpointParseError) as info:
        checkpoint_from_json(cut)
    assert 0 < info.value.offset <= len(cut.encode())
    assert "byte" in str(info.value)


def test_shape_mismatch_is_format_error(rng):
    doc = json.loads(checkpoint_to_json(Checkpoint(random_net(rng, [3]))))
    doc["layers"][0]["rows"] = 4
    with pytest.raises(CheckpointFormatError):
        checkpoint_from_json(json.dumps(doc))


def test_version_is_checked(rng):
    doc = json.loads(checkpoint_to_json(Checkpoint(random_net(rng, [3]))))
    doc["version"] = 99
    with pytest.raises(CheckpointFormatError, match="version"):
        checkpoint_from_json(json.dumps(doc))


def test_widening_32_to_64_is_exact(tmp_path, rng):
    net32 = random_net(rng, [8, 8], precision=32)
    save(net32, tmp_path / "c.json", variant="unsteady", iteration=3, loss=2.0)
    ckpt = load_checkpoint(tmp_path / "c.json", precision=64)
    assert ckpt.net.precision == 64 and ckpt.iteration == 3 and ckpt.loss == 2.0
    for a, b in zip(net32.params, ckpt.net.params):
        assert b.dtype == np.float64
        assert np.array_equal(a.astype(np.float64), b)


def test_save_is_atomic_and_overwrites(tmp_path, rng):
    path = tmp_path / "c.json"
    save_checkpoint(Checkpoint(random_net(rng, [3])), path)
    net2 = random_net(rng, [3])
    save(net2, path)
    assert np.array_equal(load(path).weights[0], net2.weights[0])
    assert [p.name for p in tmp_path.iterdir()] == ["c.json"]
