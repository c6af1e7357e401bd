"""Finite-difference validation of the analytic gradients.

For a chosen architecture tag, builds random instances (model + batch),
computes the total training objective's analytic gradients, then compares
sampled entries of every parameter group against central differences at
float64. The relative error uses |a - n| / max(floor, |a| + |n|).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ARCH_TAGS, DEFAULT_OBJECTIVE, build_model
from .errors import ConfigError
from .train import batch_objective, batch_objective_value

FD_EPS = 1e-5
REL_FLOOR = 1e-6


@dataclass
class GradcheckReport:
    arch_tag: str
    objective: str
    instances: int
    max_rel_err: float
    worst_group: str
    rel_tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.rel_tol

    def to_dict(self) -> dict:
        return {
            "arch_tag": self.arch_tag,
            "objective": self.objective,
            "instances": self.instances,
            "max_rel_err": self.max_rel_err,
            "worst_group": self.worst_group,
            "rel_tol": self.rel_tol,
            "passed": self.passed,
        }


def _random_batch(rng: np.random.Generator, d_s: int, d_t: int, n: int):
    audio = [rng.normal(0.0, 1.0, (int(rng.integers(8, 15)), d_s)) for _ in range(n)]
    text = [rng.normal(0.0, 1.0, (int(rng.integers(8, 15)), d_t)) for _ in range(n)]
    labels = rng.integers(0, 2, n).astype(np.float64)
    return audio, text, labels


def run_gradcheck(
    arch_tag: str,
    seed: int = 0,
    instances: int = 20,
    entries_per_group: int = 4,
    rel_tol: float = 1e-4,
    d_s: int = 5,
    d_t: int = 6,
    batch: int = 3,
) -> GradcheckReport:
    if arch_tag not in ARCH_TAGS:
        raise ConfigError(f"unknown architecture tag {arch_tag!r}")
    objective = DEFAULT_OBJECTIVE[arch_tag]
    worst = 0.0
    worst_group = ""
    for inst in range(instances):
        rng = np.random.default_rng([int(seed), 101, inst])
        p = build_model(arch_tag, d_s, d_t, seed=int(seed) * 1000 + inst)
        audio, text, labels = _random_batch(rng, d_s, d_t, batch)
        tau = 0.1

        _, grads, _ = batch_objective(p, audio, text, labels, objective, tau)
        for name, arr in p.parameters().items():
            flat = arr.reshape(-1)
            gflat = grads[name].reshape(-1)
            n_entries = min(entries_per_group, flat.size)
            picks = rng.choice(flat.size, size=n_entries, replace=False)
            for j in picks:
                orig = flat[j]
                flat[j] = orig + FD_EPS
                plus = batch_objective_value(p, audio, text, labels, objective, tau)
                flat[j] = orig - FD_EPS
                minus = batch_objective_value(p, audio, text, labels, objective, tau)
                flat[j] = orig
                numeric = (plus - minus) / (2.0 * FD_EPS)
                rel = abs(gflat[j] - numeric) / max(REL_FLOOR, abs(gflat[j]) + abs(numeric))
                if rel > worst:
                    worst = rel
                    worst_group = f"{name}[{j}] (instance {inst})"
    return GradcheckReport(
        arch_tag=arch_tag,
        objective=objective,
        instances=instances,
        max_rel_err=float(worst),
        worst_group=worst_group,
        rel_tol=rel_tol,
    )
