"""Numerical checks of the oracle axioms.

The approximation axioms are limit statements, so the checker reports ratio
sequences along a shrinking sequence of trial points instead of pass/fail.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .model import Plane
from .oracles import Problem, evaluate_subgradient, evaluate_value


@dataclass
class AxiomReport:
    exactness_max_violation: float
    samples: int
    approximation_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))
    strict_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @staticmethod
    def _decayed(ratios: np.ndarray, threshold: float, floor: float) -> bool:
        if ratios.size < 2:
            return True
        return bool(ratios[-1] <= threshold * ratios[0] + floor)

    def decayed(self, threshold: float = 0.1, floor: float = 1e-8) -> bool:
        return self._decayed(self.approximation_ratios, threshold, floor)

    def strict_decayed(self, threshold: float = 0.1, floor: float = 1e-8) -> bool:
        return self._decayed(self.strict_ratios, threshold, floor)

    def as_dict(self) -> Dict[str, object]:
        return {
            "exactness_max_violation": float(self.exactness_max_violation),
            "samples": int(self.samples),
            "approximation_ratios": [float(r) for r in self.approximation_ratios],
            "strict_ratios": [float(r) for r in self.strict_ratios],
            "decayed": self.decayed(),
            "strict_decayed": self.strict_decayed(),
        }


def _cut_gap(oracle: Callable, prob: Problem, z: np.ndarray, anchor: np.ndarray) -> float:
    planes: List[Plane] = oracle(z, anchor)
    value = max(p.a + float(p.g @ (z - anchor)) for p in planes)
    dist = float(np.linalg.norm(z - anchor))
    if dist == 0.0:
        return 0.0
    return max(evaluate_value(prob, z) - value, 0.0) / dist


def check_oracle_axioms(
    oracle: Callable,
    prob: Problem,
    x,
    sample_count: int = 1000,
    sequence: Optional[Sequence] = None,
    anchors: Optional[Sequence] = None,
    direction=None,
    steps: int = 20,
    radius: float = 1.0,
    lower=None,
    upper=None,
    seed: int = 0,
) -> AxiomReport:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rng = np.random.default_rng(seed)

    def clip(v):
        if lower is not None or upper is not None:
            return np.clip(v, lower if lower is not None else -np.inf, upper if upper is not None else np.inf)
        return v

    worst = -np.inf
    for _ in range(sample_count):
        anchor = clip(x + radius * rng.uniform(-1.0, 1.0, n))
        z = clip(anchor + radius * rng.uniform(-1.0, 1.0, n))
        f_anchor = evaluate_value(prob, anchor)
        for p in oracle(z, anchor):
            worst = max(worst, p.a - f_anchor)

    if sequence is None:
        d = np.ones(n) / np.sqrt(n) if direction is None else np.asarray(direction, dtype=float)
        sequence = [x + radius * 2.0 ** (-j) * d for j in range(1, steps + 1)]
    zs = [clip(np.asarray(z, dtype=float)) for z in sequence]
    if anchors is None:
        # moving anchors approach x from the opposite side
        anchors = [x - 0.5 * (z - x) for z in zs]
    xs = [clip(np.asarray(a, dtype=float)) for a in anchors]

    approx = np.array([_cut_gap(oracle, prob, z, x) for z in zs])
    strict = np.array([_cut_gap(oracle, prob, z, a) for z, a in zip(zs, xs)])
    return AxiomReport(
        exactness_max_violation=float(worst if sample_count else 0.0),
        samples=sample_count,
        approximation_ratios=approx,
        strict_ratios=strict,
    )


def finite_difference_error(prob: Problem, z, h: float = 1e-6) -> float:
    """Relative sup-norm distance between subgradient(z) and central differences."""
    z = np.asarray(z, dtype=float)
    g = evaluate_subgradient(prob, z)
    fd = np.empty_like(z)
    for i in range(z.shape[0]):
        e = np.zeros_like(z)
        e[i] = h
        fd[i] = (evaluate_value(prob, z + e) - evaluate_value(prob, z - e)) / (2.0 * h)
    return float(np.max(np.abs(g - fd)) / max(1.0, float(np.max(np.abs(g)))))
