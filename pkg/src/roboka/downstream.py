"""Convolutional head mapping a variable-length embedding sequence to a fixed
128-dim feature vector.

Pipeline: conv(64 filters, kernel 3, valid) -> relu -> max-pool(window 2,
stride 2, trailing odd element kept as its own window) -> conv(128 filters,
kernel 3, valid) -> relu -> global max pool over time. Sequences shorter
than 7 steps are right-padded with zeros to length 7 so the time axis never
collapses. All pooling ties resolve to the earliest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError

MIN_LEN = 7
N_FILTERS_1 = 64
N_FILTERS_2 = 128
KERNEL = 3


def _windows(a: np.ndarray, k: int = KERNEL) -> np.ndarray:
    """Stack valid length-k windows of a (T, C) array into (T-k+1, k, C)."""
    n = a.shape[0] - k + 1
    return np.stack([a[i : i + n] for i in range(k)], axis=1)


def _pool_pairs(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Window-2 stride-2 max pool; odd tails form a singleton window.

    Returns (pooled, take_second) where take_second marks pairs whose second
    element was strictly larger (ties keep the first).
    """
    length, ch = a.shape
    if length % 2:
        a = np.concatenate([a, np.full((1, ch), -np.inf)], axis=0)
    pairs = a.reshape(-1, 2, ch)
    take_second = pairs[:, 1, :] > pairs[:, 0, :]
    return np.where(take_second, pairs[:, 1, :], pairs[:, 0, :]), take_second


@dataclass
class CnnHead:
    """Two-conv head; weights are (filters, kernel, in_channels)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def d_emb(self) -> int:
        return self.w1.shape[2]

    def _prep(self, h) -> np.ndarray:
        arr = np.asarray(h, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"embedding sequence must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise DataError("empty embedding sequence")
        if arr.shape[1] != self.d_emb:
            raise ShapeError(f"expected {self.d_emb} channels, got {arr.shape[1]}")
        if arr.shape[0] < MIN_LEN:
            pad = np.zeros((MIN_LEN - arr.shape[0], self.d_emb), dtype=np.float64)
            arr = np.concatenate([arr, pad], axis=0)
        return arr

    def _run(self, h: np.ndarray):
        win1 = _windows(h)
        a1 = win1.reshape(win1.shape[0], -1) @ self.w1.reshape(N_FILTERS_1, -1).T + self.b1
        r1 = np.maximum(a1, 0.0)
        p1, take_second = _pool_pairs(r1)
        win2 = _windows(p1)
        a2 = win2.reshape(win2.shape[0], -1) @ self.w2.reshape(N_FILTERS_2, -1).T + self.b2
        r2 = np.maximum(a2, 0.0)
        t_star = r2.argmax(axis=0)  # first occurrence on ties
        return a1, take_second, p1, a2, r2, t_star

    def forward(self, h) -> np.ndarray:
        """128-dim pooled feature vector for a (T, d_emb) sequence."""
        arr = self._prep(h)
        _, _, _, _, r2, t_star = self._run(arr)
        return r2[t_star, np.arange(N_FILTERS_2)]

    def backward(self, h, upstream) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Gradients of sum(upstream * forward(h)) w.r.t. params and input.

        Max pools route gradient to the earliest argmax position. The
        returned input gradient has the caller's original length (gradient
        into zero padding is dropped).
        """
        arr = self._prep(h)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (N_FILTERS_2,):
            raise ShapeError(f"upstream must be ({N_FILTERS_2},), got {upstream.shape}")
        a1, take_second, p1, a2, r2, t_star = self._run(arr)

        dr2 = np.zeros_like(r2)
        np.add.at(dr2, (t_star, np.arange(N_FILTERS_2)), upstream)
        da2 = dr2 * (a2 > 0.0)

        win2 = _windows(p1)
        grad_w2 = np.einsum("lf,lkc->fkc", da2, win2)
        grad_b2 = da2.sum(axis=0)
        dp1 = np.zeros_like(p1)
        spread2 = np.einsum("lf,fkc->lkc", da2, self.w2)
        for k in range(KERNEL):
            dp1[k : k + da2.shape[0]] += spread2[:, k, :]

        len1 = a1.shape[0]
        pos = 2 * np.arange(p1.shape[0])[:, None] + take_second.astype(np.int64)
        dr1_pad = np.zeros((len1 + len1 % 2, N_FILTERS_1), dtype=np.float64)
        np.put_along_axis(dr1_pad, pos, dp1, axis=0)
        da1 = dr1_pad[:len1] * (a1 > 0.0)

        win1 = _windows(arr)
        grad_w1 = np.einsum("lf,lkc->fkc", da1, win1)
        grad_b1 = da1.sum(axis=0)
        dh = np.zeros_like(arr)
        spread1 = np.einsum("lf,fkc->lkc", da1, self.w1)
        for k in range(KERNEL):
            dh[k : k + da1.shape[0]] += spread1[:, k, :]

        grads = {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}
        return grads, dh[: np.asarray(h).shape[0]]

    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


def init_cnn_head(rng: np.random.Generator, d_emb: int, scale: float = 1.0) -> CnnHead:
    """He-style init scaled by `scale`; biases start at zero."""
    return CnnHead(
        w1=rng.normal(0.0, scale * np.sqrt(2.0 / (KERNEL * d_emb)), size=(N_FILTERS_1, KERNEL, d_emb)),
        b1=np.zeros(N_FILTERS_1, dtype=np.float64),
        w2=rng.normal(0.0, scale * np.sqrt(2.0 / (KERNEL * N_FILTERS_1)), size=(N_FILTERS_2, KERNEL, N_FILTERS_1)),
        b2=np.zeros(N_FILTERS_2, dtype=np.float64),
    )
