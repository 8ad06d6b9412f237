import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import numpy_mlp
from pinn_forge.errors import ContractError
from pinn_forge.network import (InputMap, Mlp, MlpSpec, flatten, forward, glorot_bounds, init_params,
                                load_checkpoint, save_checkpoint, unflatten)


def test_same_seed_same_parameters():
    spec = MlpSpec((2, 5, 1), "tanh")
    assert np.array_equal(init_params(spec, 42), init_params(spec, 42))


def test_parameter_count():
    assert MlpSpec((2, 5, 1), "tanh").n_params == (2 + 1) * 5 + (5 + 1) * 1 == 21
    assert MlpSpec((4, 50, 50, 50, 4), "tanh").n_params == 5 * 50 + 51 * 50 * 2 + 51 * 4


@given(st.lists(st.integers(1, 12), min_size=3, max_size=6), st.integers(0, 2**31))
def test_glorot_bounds_and_zero_biases(sizes, seed):
    spec = MlpSpec(tuple(sizes), "tanh")
    theta = init_params(spec, seed)
    for (W, b), bound in zip(unflatten(spec, theta), glorot_bounds(spec)):
        assert np.all(np.abs(W) <= bound)
        assert np.all(b == 0.0)


def test_zero_parameters_give_zero_output(rng):
    spec = MlpSpec((2, 7, 7, 3), "tanh")
    net = Mlp(spec, np.zeros(spec.n_params))
    vals = net.values(rng.uniform(-5, 5, (20, 2)))
    assert all(np.all(v == 0.0) for v in vals.values())


def test_single_neuron_hand_value():
    spec = MlpSpec((1, 1, 1), "tanh")
    theta = flatten([(np.array([[1.0]]), np.array([0.0])), (np.array([[1.0]]), np.array([0.0]))])
    assert forward(spec, theta, [0.3])[0] == pytest.approx(np.tanh(0.3), abs=1e-15)


def test_sine_output_bias_passthrough(rng):
    spec = MlpSpec((2, 4, 1), "sine")
    theta = np.zeros(spec.n_params)
    theta[-1] = 0.7
    vals = Mlp(spec, theta).values(rng.uniform(-3, 3, (10, 2)))["y0"]
    assert np.allclose(vals, 0.7, atol=0, rtol=0)


@pytest.mark.parametrize("activation", ["tanh", "sigmoid", "sine", "softplus"])
def test_forward_matches_independent_oracle(activation, rng):
    spec = MlpSpec((3, 6, 5, 2), activation)
    theta = rng.normal(size=spec.n_params)
    x = rng.uniform(-1, 1, (8, 3))
    got = Mlp(spec, theta).values(x)
    want = numpy_mlp(spec.layer_sizes, activation, theta, x)
    assert np.allclose(got["y0"], want[:, 0], rtol=1e-13, atol=1e-14)
    assert np.allclose(got["y1"], want[:, 1], rtol=1e-13, atol=1e-14)


def test_input_map_scales_to_unit_box():
    m = InputMap((0.0, -2.0), (4.0, 2.0))
    assert np.allclose(m.apply(np.array([[0.0, -2.0], [4.0, 2.0], [2.0, 0.0]])),
                       [[-1, -1], [1, 1], [0, 0]])


def test_bad_specs_rejected():
    with pytest.raises(ContractError):
        MlpSpec((2,), "tanh")
    with pytest.raises(ContractError):
        MlpSpec((2, 3, 1), "relu6")
    with pytest.raises(ContractError):
        unflatten(MlpSpec((2, 3, 1), "tanh"), np.zeros(5))


def test_checkpoint_round_trip(tmp_path, rng):
    spec = MlpSpec((2, 8, 8, 4), "softplus")
    theta = rng.normal(size=spec.n_params)
    save_checkpoint(tmp_path / "c.txt", spec, theta)
    spec2, theta2 = load_checkpoint(tmp_path / "c.txt")
    assert spec2 == spec
    assert np.array_equal(theta2, theta)
