"""Learnable layers: the KAN layer (per-edge spline functions) and the plain
MLP layer used by the non-KAN baselines.

A KAN layer maps x in R^{d_in} to R^{d_out} as

    out_j = sum_i phi_{j,i}(clamp(x_i)),   phi_{j,i}(x) = sum_m c[j,i,m] B_m(x)

optionally plus a silu residual term `base_weight @ silu(x)` (off by default).
Single layers are additive across input coordinates; stacking them is what
introduces cross-coordinate coupling.

Layers are plain parameter holders: forward/backward never mutate them, so a
shared layer may be used from several threads at once. Backward recomputes
the cheap forward intermediates instead of caching state on the object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .spline import SplineGrid, basis_deriv_matrix, basis_matrix

ACTIVATIONS = ("relu", "identity", "sigmoid")


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_deriv(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def _as_batch(x, d_in: int, what: str) -> tuple[np.ndarray, bool]:
    """Promote a vector to a 1-row batch; validate the trailing dimension."""
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != d_in:
        raise ShapeError(f"{what}: expected (*, {d_in}), got {np.asarray(x).shape}")
    return arr, squeeze


@dataclass
class KanLayer:
    """Per-edge cubic-spline layer with coefficients of shape (d_out, d_in, M)."""

    grid: SplineGrid
    coeffs: np.ndarray
    base_weight: np.ndarray | None = None

    def __post_init__(self):
        if self.coeffs.ndim != 3 or self.coeffs.shape[2] != self.grid.n_basis:
            raise ShapeError(
                f"coeffs must be (d_out, d_in, {self.grid.n_basis}), got {self.coeffs.shape}"
            )
        if self.base_weight is not None and self.base_weight.shape != (self.d_out, self.d_in):
            raise ShapeError("base_weight shape must be (d_out, d_in)")

    @property
    def d_out(self) -> int:
        return self.coeffs.shape[0]

    @property
    def d_in(self) -> int:
        return self.coeffs.shape[1]

    def forward(self, x) -> np.ndarray:
        xb, squeeze = _as_batch(x, self.d_in, "kan forward")
        basis = basis_matrix(self.grid, xb)  # (n, d_in, M)
        flat = basis.reshape(xb.shape[0], -1)
        out = flat @ self.coeffs.reshape(self.d_out, -1).T
        if self.base_weight is not None:
            out += silu(xb) @ self.base_weight.T
        return out[0] if squeeze else out

    def backward(self, x, upstream) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
        """Gradients (d_coeffs, d_base, d_x) of sum(upstream * forward(x)).

        d_coeffs[j,i,m] = sum_n upstream[n,j] * B_m(x[n,i]); the input
        gradient is zero wherever x fell outside the grid (clamped region).
        """
        xb, squeeze = _as_batch(x, self.d_in, "kan backward")
        ub, usq = _as_batch(upstream, self.d_out, "kan upstream")
        if usq != squeeze or ub.shape[0] != xb.shape[0]:
            raise ShapeError("kan backward: x and upstream batch sizes differ")
        basis = basis_matrix(self.grid, xb)
        dbasis = basis_deriv_matrix(self.grid, xb)
        grad_coeffs = np.einsum("nj,nim->jim", ub, basis)
        # slope of each edge function at x: sum_m c[j,i,m] B'_m(x_i)
        edge = np.einsum("nj,jim->nim", ub, self.coeffs)
        grad_x = np.einsum("nim,nim->ni", edge, dbasis)
        grad_base = None
        if self.base_weight is not None:
            grad_base = ub.T @ silu(xb)
            grad_x = grad_x + (ub @ self.base_weight) * silu_deriv(xb)
        return grad_coeffs, grad_base, (grad_x[0] if squeeze else grad_x)

    def n_params(self) -> int:
        n = self.coeffs.size
        if self.base_weight is not None:
            n += self.base_weight.size
        return n


@dataclass
class MlpLayer:
    """Affine map plus a fixed activation; the baseline counterpart of KanLayer."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("mlp layer: weight (d_out, d_in) and bias (d_out,) required")

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    def _act(self, a: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(a, 0.0)
        if self.activation == "sigmoid":
            return 1.0 / (1.0 + np.exp(-a))
        return a

    def _act_deriv(self, a: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return (a > 0.0).astype(np.float64)
        if self.activation == "sigmoid":
            s = 1.0 / (1.0 + np.exp(-a))
            return s * (1.0 - s)
        return np.ones_like(a)

    def forward(self, x) -> np.ndarray:
        xb, squeeze = _as_batch(x, self.d_in, "mlp forward")
        out = self._act(xb @ self.weight.T + self.bias)
        return out[0] if squeeze else out

    def backward(self, x, upstream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gradients (d_weight, d_bias, d_x) of sum(upstream * forward(x))."""
        xb, squeeze = _as_batch(x, self.d_in, "mlp backward")
        ub, usq = _as_batch(upstream, self.d_out, "mlp upstream")
        if usq != squeeze or ub.shape[0] != xb.shape[0]:
            raise ShapeError("mlp backward: x and upstream batch sizes differ")
        pre = xb @ self.weight.T + self.bias
        da = ub * self._act_deriv(pre)
        grad_w = da.T @ xb
        grad_b = da.sum(axis=0)
        grad_x = da @ self.weight
        return grad_w, grad_b, (grad_x[0] if squeeze else grad_x)

    def n_params(self) -> int:
        return self.weight.size + self.bias.size


def init_kan_layer(
    rng: np.random.Generator,
    d_in: int,
    d_out: int,
    grid: SplineGrid,
    with_base: bool = False,
) -> KanLayer:
    """Gaussian init with std 0.1/sqrt(d_in); keeps early outputs near zero."""
    coeffs = rng.normal(0.0, 0.1 / np.sqrt(d_in), size=(d_out, d_in, grid.n_basis))
    base = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in)) if with_base else None
    return KanLayer(grid=grid, coeffs=coeffs, base_weight=base)


def init_mlp_layer(
    rng: np.random.Generator, d_in: int, d_out: int, activation: str = "identity"
) -> MlpLayer:
    std = np.sqrt(2.0 / (d_in + d_out))
    return MlpLayer(
        weight=rng.normal(0.0, std, size=(d_out, d_in)),
        bias=np.zeros(d_out, dtype=np.float64),
        activation=activation,
    )
