"""Training objectives: cosine-similarity InfoNCE over paired embedding
batches (both directions, averaged), numerically stable binary cross-entropy,
and the uncertainty-weighted combination of the two.

All functions are pure and return exact analytic gradients alongside values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError

COSINE_EPS = 1e-12


@dataclass(frozen=True)
class ContrastiveConfig:
    """InfoNCE temperature; in-batch negatives are implied."""

    tau: float = 0.1

    def __post_init__(self):
        if not (self.tau > 0.0 and np.isfinite(self.tau)):
            raise DataError(f"temperature must be positive, got {self.tau}")


@dataclass
class UncertaintyParams:
    """Learnable log-sigmas; sigma = exp(log_sigma) stays positive for free."""

    log_sigma_c: float = 0.0
    log_sigma_bce: float = 0.0


def _normalize_rows(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(u, axis=1, keepdims=True), COSINE_EPS)
    return u / norms, norms


def cosine_sim(a, b) -> float:
    """Cosine similarity with an epsilon floor on each norm; always in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("cosine_sim expects two equal-length vectors")
    na = max(float(np.linalg.norm(a)), COSINE_EPS)
    nb = max(float(np.linalg.norm(b)), COSINE_EPS)
    return float(a @ b / (na * nb))


def infonce(
    u_s: np.ndarray, u_t: np.ndarray, cfg: ContrastiveConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Symmetric InfoNCE over N paired rows; returns (loss, d_u_s, d_u_t).

    The N x N cosine-similarity matrix is divided by tau and row-max
    stabilized before exponentiation. Row i of each input is a positive
    pair; every other row of the opposite matrix serves as a negative.
    """
    u_s = np.asarray(u_s, dtype=np.float64)
    u_t = np.asarray(u_t, dtype=np.float64)
    if u_s.ndim != 2 or u_s.shape != u_t.shape:
        raise ShapeError(f"paired matrices required, got {u_s.shape} vs {u_t.shape}")
    n = u_s.shape[0]
    if n == 0:
        raise DataError("contrastive loss needs at least one pair")

    a, na = _normalize_rows(u_s)
    b, nb = _normalize_rows(u_t)
    z = (a @ b.T) / cfg.tau

    zr = z - z.max(axis=1, keepdims=True)
    log_den_r = np.log(np.exp(zr).sum(axis=1))
    loss_st = float(np.mean(log_den_r - np.diag(zr)))

    zc = z - z.max(axis=0, keepdims=True)
    log_den_c = np.log(np.exp(zc).sum(axis=0))
    loss_ts = float(np.mean(log_den_c - np.diag(zc)))

    loss = 0.5 * (loss_st + loss_ts)

    p_row = np.exp(zr - log_den_r[:, None])
    p_col = np.exp(zc - log_den_c[None, :])
    eye = np.eye(n)
    dz = (p_row - eye + p_col - eye) / (2.0 * n * cfg.tau)

    da = dz @ b
    db = dz.T @ a
    # chain through row normalization: d/du (u/|u|) applied to each row
    grad_s = (da - (da * a).sum(axis=1, keepdims=True) * a) / na
    grad_t = (db - (db * b).sum(axis=1, keepdims=True) * b) / nb
    return loss, grad_s, grad_t


def bce(logit: float, y: int) -> tuple[float, float]:
    """Binary cross-entropy in the stable logit form; grad is sigmoid(l) - y.

    loss = max(l, 0) - l*y + log(1 + exp(-|l|)) never overflows.
    """
    logit = float(logit)
    if not np.isfinite(logit):
        raise DataError("bce needs a finite logit")
    if y not in (0, 1):
        raise DataError(f"label must be 0 or 1, got {y!r}")
    loss = max(logit, 0.0) - logit * y + np.log1p(np.exp(-abs(logit)))
    grad = 1.0 / (1.0 + np.exp(-logit)) - y
    return float(loss), float(grad)


def bce_mean(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE over a batch and its gradient w.r.t. each logit."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape or logits.ndim != 1:
        raise ShapeError("bce_mean expects matching 1-D logit and label arrays")
    losses = np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    grads = (1.0 / (1.0 + np.exp(-logits)) - labels) / logits.size
    return float(losses.mean()), grads


def combined_loss(
    l_c: float, l_bce: float, p: UncertaintyParams
) -> tuple[float, tuple[float, float], tuple[float, float]]:
    """Uncertainty-weighted sum of the two objectives.

    total = l_c / (2 sigma_c^2) + l_bce / (2 sigma_bce^2)
            + log sigma_c + log sigma_bce

    Returns (total, (d_log_sigma_c, d_log_sigma_bce), (w_c, w_bce)) where the
    weights w = 1/(2 sigma^2) are the coefficients multiplying each loss,
    exposed for telemetry and for chaining model gradients.
    """
    w_c = 0.5 * np.exp(-2.0 * p.log_sigma_c)
    w_bce = 0.5 * np.exp(-2.0 * p.log_sigma_bce)
    total = w_c * l_c + w_bce * l_bce + p.log_sigma_c + p.log_sigma_bce
    grad_ls_c = -2.0 * w_c * l_c + 1.0
    grad_ls_bce = -2.0 * w_bce * l_bce + 1.0
    return float(total), (float(grad_ls_c), float(grad_ls_bce)), (float(w_c), float(w_bce))
