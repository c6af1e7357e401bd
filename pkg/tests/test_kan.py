import numpy as np
import pytest

from roboka.errors import ShapeError
from roboka.kan import KanLayer, MlpLayer, init_kan_layer, init_mlp_layer
from roboka.spline import SplineGrid, basis_matrix

from oracles import central_diff, rel_err

GRID = SplineGrid(lo=-2.0, hi=2.0, intervals=8)


def random_kan(rng, d_in, d_out, std=0.5, with_base=False):
    layer = init_kan_layer(rng, d_in, d_out, GRID, with_base=with_base)
    layer.coeffs[...] = rng.normal(0.0, std, layer.coeffs.shape)
    return layer


def test_zero_coeffs_give_zero_output():
    layer = KanLayer(grid=GRID, coeffs=np.zeros((4, 3, GRID.n_basis)))
    assert np.array_equal(layer.forward(np.array([0.3, -1.0, 2.5])), np.zeros(4))


def test_identity_spline_fit():
    # least-squares fit of phi(x) = x in the basis, loaded on edge (0, 0)
    xs = np.linspace(GRID.lo, GRID.hi, 401)
    design = basis_matrix(GRID, xs)
    coef, *_ = np.linalg.lstsq(design, xs, rcond=None)
    layer = KanLayer(grid=GRID, coeffs=np.zeros((1, 2, GRID.n_basis)))
    layer.coeffs[0, 0] = coef
    for x in np.linspace(-1.5, 1.5, 23):
        out = layer.forward(np.array([x, 0.77]))
        assert abs(out[0] - x) < 1e-3


def test_additivity_by_coefficient_masking():
    rng = np.random.default_rng(2)
    layer = random_kan(rng, 3, 5)
    x = rng.normal(0.0, 1.0, 3)
    total = layer.forward(x)
    parts = np.zeros(5)
    for i in range(3):
        masked = KanLayer(grid=GRID, coeffs=np.zeros_like(layer.coeffs))
        masked.coeffs[:, i, :] = layer.coeffs[:, i, :]
        parts += masked.forward(x)
    assert np.allclose(total, parts, atol=1e-12)


def test_stacked_composition_is_not_additive():
    rng = np.random.default_rng(4)
    first = random_kan(rng, 2, 3, std=1.0)
    second = random_kan(rng, 3, 1, std=1.0)

    def f(x1, x2):
        return second.forward(first.forward(np.array([x1, x2])))[0]

    x1, x2 = 0.9, -0.7
    residual = f(x1, x2) - f(x1, 0.0) - f(0.0, x2) + f(0.0, 0.0)
    assert abs(residual) > 1e-6


def test_forward_rejects_wrong_width():
    layer = random_kan(np.random.default_rng(0), 4, 2)
    with pytest.raises(ShapeError):
        layer.forward(np.zeros(3))


def test_backward_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(1)
    layer = random_kan(rng, 3, 4)
    grad_c, grad_b, grad_x = layer.backward(rng.normal(size=3), np.zeros(4))
    assert not grad_c.any()
    assert grad_b is None
    assert not grad_x.any()


@pytest.mark.parametrize("with_base", [False, True])
def test_backward_matches_finite_differences(with_base):
    rng = np.random.default_rng(8)
    layer = random_kan(rng, 3, 4, with_base=with_base)
    x = rng.uniform(-1.5, 1.5, 3)
    upstream = rng.normal(size=4)

    def loss():
        return float(upstream @ layer.forward(x))

    grad_c, grad_b, grad_x = layer.backward(x, upstream)
    for idx in [(0, 0, 2), (3, 1, 5), (2, 2, 10), (1, 0, 0)]:
        numeric = central_diff(loss, layer.coeffs, idx)
        assert rel_err(grad_c[idx], numeric) < 1e-5
    for i in range(3):
        numeric = central_diff(loss, x, i)
        assert rel_err(grad_x[i], numeric) < 1e-4
    if with_base:
        for idx in [(0, 0), (3, 2)]:
            numeric = central_diff(loss, layer.base_weight, idx)
            assert rel_err(grad_b[idx], numeric) < 1e-5


def test_backward_zero_input_gradient_in_clamped_region():
    rng = np.random.default_rng(9)
    layer = random_kan(rng, 2, 3)
    x = np.array([5.0, 0.4])  # first coordinate clamped
    _, _, grad_x = layer.backward(x, np.ones(3))
    assert grad_x[0] == 0.0
    assert grad_x[1] != 0.0


def test_batched_forward_matches_per_row():
    rng = np.random.default_rng(10)
    layer = random_kan(rng, 4, 3)
    xs = rng.normal(size=(6, 4))
    batch = layer.forward(xs)
    rows = np.stack([layer.forward(x) for x in xs])
    assert np.allclose(batch, rows, atol=1e-12)


# --- MLP layer ----------------------------------------------------------------


def test_mlp_identity_passthrough():
    layer = MlpLayer(weight=np.eye(3), bias=np.zeros(3), activation="identity")
    x = np.array([0.5, -2.0, 3.0])
    assert np.array_equal(layer.forward(x), x)


def test_mlp_relu_kills_negative_preactivations():
    layer = MlpLayer(weight=-np.eye(2), bias=np.zeros(2), activation="relu")
    assert np.array_equal(layer.forward(np.array([1.0, 2.0])), np.zeros(2))


@pytest.mark.parametrize("activation", ["relu", "identity", "sigmoid"])
def test_mlp_backward_matches_finite_differences(activation):
    rng = np.random.default_rng(12)
    layer = init_mlp_layer(rng, 3, 4, activation)
    layer.bias[...] = rng.normal(size=4)
    x = rng.normal(size=3)
    upstream = rng.normal(size=4)

    def loss():
        return float(upstream @ layer.forward(x))

    grad_w, grad_b, grad_x = layer.backward(x, upstream)
    for idx in [(0, 0), (3, 2), (1, 1)]:
        assert rel_err(grad_w[idx], central_diff(loss, layer.weight, idx)) < 1e-5
    for i in range(4):
        assert rel_err(grad_b[i], central_diff(loss, layer.bias, i)) < 1e-5
    for i in range(3):
        assert rel_err(grad_x[i], central_diff(loss, x, i)) < 1e-5


def test_mlp_rejects_unknown_activation():
    with pytest.raises(ShapeError):
        MlpLayer(weight=np.eye(2), bias=np.zeros(2), activation="tanh")
