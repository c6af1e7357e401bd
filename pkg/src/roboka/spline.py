"""Cubic B-spline basis evaluation and differentiation on a uniform knot grid.

Every KAN layer in the package evaluates its edge functions through this
module. A grid with G intervals on [lo, hi] carries G + 7 uniformly spaced
knots (3 exterior knots per side, same spacing as the interior) and supports
M = G + 3 cubic basis functions. Inputs are clamped to [lo, hi] before
evaluation, so the basis is defined everywhere; the derivative is zero in
the clamped region.

All math runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError

DEGREE = 3  # cubic, fixed


@dataclass(frozen=True)
class SplineGrid:
    """Uniform knot grid on [lo, hi] with `intervals` interior intervals."""

    lo: float
    hi: float
    intervals: int
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise EvaluationError("grid bounds must be finite")
        if self.lo >= self.hi:
            raise EvaluationError(f"grid range [{self.lo}, {self.hi}] is empty")
        if int(self.intervals) < 1:
            raise EvaluationError("grid needs at least one interval")
        h = (self.hi - self.lo) / self.intervals
        knots = self.lo + h * np.arange(-DEGREE, self.intervals + DEGREE + 1, dtype=np.float64)
        knots.flags.writeable = False
        object.__setattr__(self, "knots", knots)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.intervals

    @property
    def n_basis(self) -> int:
        """Number of basis functions M = intervals + 3."""
        return self.intervals + DEGREE


def _spans(grid: SplineGrid, xc: np.ndarray) -> np.ndarray:
    """Knot-interval index s with knots[s] <= x < knots[s+1], for clamped x.

    x == hi maps to the last interior span (closed right end).
    """
    idx = np.floor((xc - grid.lo) / grid.spacing).astype(np.int64)
    return DEGREE + np.clip(idx, 0, grid.intervals - 1)


def _local_basis(grid: SplineGrid, xc: np.ndarray, spans: np.ndarray, degree: int) -> np.ndarray:
    """Nonzero basis values of the given degree at clamped points.

    Returns shape (n, degree+1); column j holds B_{s-degree+j, degree}(x).
    Iterative Cox-de Boor on the local knot window; all denominators are
    positive because the knot vector has no repeats.
    """
    t = grid.knots
    n = xc.shape[0]
    vals = np.zeros((n, degree + 1), dtype=np.float64)
    vals[:, 0] = 1.0
    left = np.empty((n, degree + 1), dtype=np.float64)
    right = np.empty((n, degree + 1), dtype=np.float64)
    for j in range(1, degree + 1):
        left[:, j] = xc - t[spans + 1 - j]
        right[:, j] = t[spans + j] - xc
        saved = np.zeros(n, dtype=np.float64)
        for r in range(j):
            tmp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * tmp
            saved = left[:, j - r] * tmp
        vals[:, j] = saved
    return vals


def _check_finite(x: np.ndarray) -> None:
    if not np.isfinite(x).all():
        raise EvaluationError("spline input must be finite")


def basis_matrix(grid: SplineGrid, x) -> np.ndarray:
    """Evaluate all M basis functions at every entry of `x`.

    Returns an array of shape x.shape + (M,). At most 4 entries per point
    are nonzero.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    flat = x.reshape(-1)
    xc = np.clip(flat, grid.lo, grid.hi)
    spans = _spans(grid, xc)
    vals = _local_basis(grid, xc, spans, DEGREE)
    out = np.zeros((flat.size, grid.n_basis), dtype=np.float64)
    rows = np.arange(flat.size)[:, None]
    out[rows, spans[:, None] - DEGREE + np.arange(DEGREE + 1)] = vals
    return out.reshape(*x.shape, grid.n_basis)


def basis_deriv_matrix(grid: SplineGrid, x) -> np.ndarray:
    """First derivatives of all M basis functions at every entry of `x`.

    Uses the degree-2 difference formula; with uniform spacing h it reduces
    to (B_{m,2} - B_{m+1,2}) / h. Entries strictly outside [lo, hi] get a
    zero derivative (the layer input is clamped there).
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    flat = x.reshape(-1)
    xc = np.clip(flat, grid.lo, grid.hi)
    spans = _spans(grid, xc)
    quad = _local_basis(grid, xc, spans, DEGREE - 1)  # (n, 3) = B_{s-2..s, 2}
    local = np.empty((flat.size, DEGREE + 1), dtype=np.float64)
    local[:, 0] = -quad[:, 0]
    local[:, 1] = quad[:, 0] - quad[:, 1]
    local[:, 2] = quad[:, 1] - quad[:, 2]
    local[:, 3] = quad[:, 2]
    local /= grid.spacing
    local[(flat < grid.lo) | (flat > grid.hi)] = 0.0
    out = np.zeros((flat.size, grid.n_basis), dtype=np.float64)
    rows = np.arange(flat.size)[:, None]
    out[rows, spans[:, None] - DEGREE + np.arange(DEGREE + 1)] = local
    return out.reshape(*x.shape, grid.n_basis)


def basis_eval(grid: SplineGrid, x: float) -> np.ndarray:
    """B_1(x)..B_M(x) at a single point, clamped to [lo, hi]."""
    if not np.isfinite(x):
        raise EvaluationError(f"cannot evaluate basis at {x!r}")
    return basis_matrix(grid, np.float64(x))


def basis_deriv(grid: SplineGrid, x: float) -> np.ndarray:
    """dB_m/dx at a single point; zero outside [lo, hi]."""
    if not np.isfinite(x):
        raise EvaluationError(f"cannot evaluate basis derivative at {x!r}")
    return basis_deriv_matrix(grid, np.float64(x))
