"""Optimization loop, 5-fold cross-validation, protocol evaluation, metrics.

Training is deterministic given (config, seed, data): shuffling uses a
dedicated seeded generator, batch reductions are ordered, and per-fold
models start from independent seeds (base seed + fold). Reported numbers do
not depend on how many folds run in parallel.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import CallRecord
from .errors import ConfigError, DataError
from .losses import ContrastiveConfig, UncertaintyParams, bce_mean, combined_loss, infonce
from .model import (
    DEFAULT_OBJECTIVE,
    ModelParams,
    build_model,
    check_objective,
    model_backward,
    model_forward,
)

LOG_SIGMA_BOUND = 10.0


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    tau: float = 0.1
    grid_lo: float = -2.0
    grid_hi: float = 2.0
    grid_intervals: int = 8
    arch_tag: str = "roboka"
    objective: str = ""  # empty = architecture default
    clip_norm: float = 5.0
    patience: int = 10
    kan_base: bool = False
    classifier: str = "mlp"

    def resolved_objective(self) -> str:
        return self.objective or DEFAULT_OBJECTIVE[self.arch_tag]

    def validate(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("lr must be positive, batch_size >= 1, epochs >= 0")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ConfigError("Adam betas must lie in (0, 1)")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.grid_lo >= self.grid_hi or self.grid_intervals < 1:
            raise ConfigError("spline grid is empty")
        check_objective(self.arch_tag, self.resolved_objective())
        if self.resolved_objective() != "bce_only" and self.batch_size < 2:
            raise ConfigError("contrastive objectives need batch_size >= 2 for negatives")


@dataclass
class MetricsReport:
    """Confusion counts plus the three reported metrics (fractions in [0, 1]).

    T4 (positive-only testing) suppresses the precision-based metrics:
    macro_recall and macro_f1 are None there and only unwanted_recall is
    reported.
    """

    protocol: str
    tp: int
    fp: int
    tn: int
    fn: int
    macro_recall: Optional[float]
    macro_f1: Optional[float]
    unwanted_recall: float

    def to_dict(self) -> dict:
        scale = lambda v: None if v is None else 100.0 * v  # noqa: E731
        return {
            "protocol": self.protocol,
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "macro_recall": scale(self.macro_recall),
            "macro_f1": scale(self.macro_f1),
            "unwanted_recall": scale(self.unwanted_recall),
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int, protocol: str = "T3") -> MetricsReport:
    """Metric identities; empty denominators yield 0, per the fixed convention."""
    recall1 = _safe_div(tp, tp + fn)
    recall0 = _safe_div(tn, tn + fp)
    prec1 = _safe_div(tp, tp + fp)
    prec0 = _safe_div(tn, tn + fn)
    f1_1 = _safe_div(2.0 * prec1 * recall1, prec1 + recall1)
    f1_0 = _safe_div(2.0 * prec0 * recall0, prec0 + recall0)
    positive_only = protocol == "T4"
    return MetricsReport(
        protocol=protocol,
        tp=int(tp),
        fp=int(fp),
        tn=int(tn),
        fn=int(fn),
        macro_recall=None if positive_only else (recall0 + recall1) / 2.0,
        macro_f1=None if positive_only else (f1_0 + f1_1) / 2.0,
        unwanted_recall=recall1,
    )


def evaluate(p: ModelParams, records: list[CallRecord], protocol: str = "T3") -> MetricsReport:
    if not records:
        raise DataError("cannot evaluate on an empty test set")
    logits = model_forward(
        p, [r.audio for r in records], [r.text for r in records]
    ).logits
    preds = logits >= 0.0
    labels = np.array([r.label for r in records], dtype=bool)
    tp = int(np.sum(preds & labels))
    fp = int(np.sum(preds & ~labels))
    tn = int(np.sum(~preds & ~labels))
    fn = int(np.sum(~preds & labels))
    return metrics_from_counts(tp, fp, tn, fn, protocol)


class Adam:
    """Per-array Adam with bias correction, applied in parameter order."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for key, p in self.params.items():
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[key] / c1) / (np.sqrt(self.v[key] / c2) + self.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def batch_objective(
    p: ModelParams,
    audio_seqs,
    text_seqs,
    labels: np.ndarray,
    objective: str,
    tau: float,
) -> tuple[float, dict[str, np.ndarray], dict[str, float]]:
    """Total objective, its gradients, and per-step telemetry for one batch."""
    fp = model_forward(p, audio_seqs, text_seqs)
    l_bce, d_logits = bce_mean(fp.logits, labels)
    multimodal = p.modality == "both"

    if objective == "bce_only" or not multimodal:
        grads = model_backward(p, fp, d_logits)
        stats = {"l_c": 0.0, "l_bce": l_bce, "w_c": 0.0, "w_bce": 1.0, "total": l_bce}
        return l_bce, grads, stats

    l_c, du_s, du_t = infonce(fp.u_s, fp.u_t, ContrastiveConfig(tau=tau))
    if objective == "sum_c_bce":
        total = l_c + l_bce
        w_c = w_bce = 1.0
        g_ls = (0.0, 0.0)
    else:
        unc = UncertaintyParams(float(p.log_sigma_c), float(p.log_sigma_bce))
        total, g_ls, (w_c, w_bce) = combined_loss(l_c, l_bce, unc)
    grads = model_backward(p, fp, w_bce * d_logits, du_s=w_c * du_s, du_t=w_c * du_t)
    grads["log_sigma_c"] += g_ls[0]
    grads["log_sigma_bce"] += g_ls[1]
    stats = {"l_c": l_c, "l_bce": l_bce, "w_c": w_c, "w_bce": w_bce, "total": total}
    return total, grads, stats


def batch_objective_value(
    p: ModelParams,
    audio_seqs,
    text_seqs,
    labels: np.ndarray,
    objective: str,
    tau: float,
) -> float:
    """Objective value only; used by finite-difference probes."""
    fp = model_forward(p, audio_seqs, text_seqs)
    l_bce, _ = bce_mean(fp.logits, labels)
    if objective == "bce_only" or p.modality != "both":
        return l_bce
    l_c, _, _ = infonce(fp.u_s, fp.u_t, ContrastiveConfig(tau=tau))
    if objective == "sum_c_bce":
        return l_c + l_bce
    unc = UncertaintyParams(float(p.log_sigma_c), float(p.log_sigma_bce))
    return combined_loss(l_c, l_bce, unc)[0]


def train_model(
    cfg: TrainConfig,
    train_records: list[CallRecord],
    val_records: Optional[list[CallRecord]] = None,
) -> tuple[ModelParams, list[dict]]:
    """Adam training with optional early stopping on validation macro-F1.

    Returns the trained model and the per-step telemetry log
    (step, l_c, l_bce, w_c, w_bce, total).
    """
    cfg.validate()
    if not train_records:
        raise DataError("empty training set")
    objective = cfg.resolved_objective()
    p = build_model(
        cfg.arch_tag,
        d_s=train_records[0].audio.shape[1],
        d_t=train_records[0].text.shape[1],
        grid_lo=cfg.grid_lo,
        grid_hi=cfg.grid_hi,
        grid_intervals=cfg.grid_intervals,
        seed=cfg.seed,
        kan_base=cfg.kan_base,
        classifier=cfg.classifier,
    )
    params = p.parameters()
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    shuffle_rng = np.random.default_rng([cfg.seed, 23])
    labels = np.array([r.label for r in train_records], dtype=np.float64)

    log: list[dict] = []
    step = 0
    best_f1 = -1.0
    best = None
    stale = 0
    for _epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(train_records))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = [train_records[i] for i in idx]
            _, grads, stats = batch_objective(
                p,
                [r.audio for r in batch],
                [r.text for r in batch],
                labels[idx],
                objective,
                cfg.tau,
            )
            clip_global_norm(grads, cfg.clip_norm)
            opt.step(grads)
            np.clip(p.log_sigma_c, -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND, out=p.log_sigma_c)
            np.clip(p.log_sigma_bce, -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND, out=p.log_sigma_bce)
            log.append({"step": step, **stats})
            step += 1
        if val_records:
            report = evaluate(p, val_records, "T3")
            score = report.macro_f1 if report.macro_f1 is not None else report.unwanted_recall
            if score > best_f1 + 1e-12:
                best_f1 = score
                best = p.copy()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best is not None:
        p = best
    return p, log


def write_training_log(log: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "l_c", "l_bce", "w_c", "w_bce", "total"])
        writer.writeheader()
        writer.writerows(log)


@dataclass
class CvResult:
    fold_reports: list[MetricsReport]
    mean_macro_f1: float
    std_macro_f1: float
    best_fold: int

    def to_dict(self) -> dict:
        return {
            "folds": [r.to_dict() for r in self.fold_reports],
            "mean_macro_f1": 100.0 * self.mean_macro_f1,
            "std_macro_f1": 100.0 * self.std_macro_f1,
            "best_fold": self.best_fold,
        }


def cross_validate(
    cfg: TrainConfig,
    records: list[CallRecord],
    fold_assignments: dict[str, int],
    k: int = 5,
    threads: int = 1,
) -> CvResult:
    """Train k fold models (seed = base seed + fold) and score each held-out
    fold; folds may run in parallel without affecting the reported numbers.
    """
    cfg.validate()
    if k > len(records):
        raise ConfigError(f"cannot run {k}-fold CV on {len(records)} records")
    missing = [r.id for r in records if r.id not in fold_assignments]
    if missing:
        raise DataError(f"records without a fold assignment: {missing[:3]}")

    def run_fold(fold: int) -> MetricsReport:
        fold_train = [r for r in records if fold_assignments[r.id] != fold]
        fold_val = [r for r in records if fold_assignments[r.id] == fold]
        if not fold_train or not fold_val:
            raise DataError(f"fold {fold} is empty")
        fold_cfg = replace(cfg, seed=cfg.seed + fold)
        model, _ = train_model(fold_cfg, fold_train, fold_val)
        return evaluate(model, fold_val, "T3")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run_fold, range(k)))
    else:
        reports = [run_fold(f) for f in range(k)]

    f1s = [r.macro_f1 if r.macro_f1 is not None else 0.0 for r in reports]
    return CvResult(
        fold_reports=reports,
        mean_macro_f1=float(np.mean(f1s)),
        std_macro_f1=float(np.std(f1s)),
        best_fold=int(np.argmax(f1s)),
    )
