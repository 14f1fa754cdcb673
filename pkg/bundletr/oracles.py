"""Cutting-plane oracles.

Every oracle returns planes anchored at the serious iterate x in the
(a, g) form of `bundletr.model.Plane`, with a <= f(x) by construction.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import EvaluationError, UnsupportedOracleError
from .model import Plane, PlaneTag

ACTIVITY_TOL = 1e-10

Vector = np.ndarray


class OracleKind(str, Enum):
    DOWNSHIFT = "downshift"
    DOUBLE_DOWNSHIFT = "double_downshift"
    STANDARD = "standard"
    NATURAL = "natural"
    COMBINED = "standard_or_double_downshift"


DOWNSHIFT_KINDS = (OracleKind.DOWNSHIFT.value, OracleKind.DOUBLE_DOWNSHIFT.value)


@dataclass(frozen=True)
class SmoothPiece:
    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]


@dataclass(frozen=True)
class Split:
    """f = g + h with g convex (closed-form prox) and h of class C^1."""

    g_value: Callable[[Vector], float]
    g_prox: Callable[[Vector, float], Vector]
    h_value: Callable[[Vector], float]
    h_grad: Callable[[Vector], Vector]
    separable: bool = True


@dataclass
class Problem:
    dim: int
    value: Callable[[Vector], float]
    subgradient: Callable[[Vector], Vector]
    directional_subgradient: Optional[Callable[[Vector, Vector], Vector]] = None
    pieces: Optional[List[SmoothPiece]] = None
    split: Optional[Split] = None

    @classmethod
    def from_pieces(cls, dim: int, pieces: Sequence[SmoothPiece], split: Optional[Split] = None) -> "Problem":
        """f = max_i f_i. Subgradients come from the lowest-index active piece."""
        pieces = list(pieces)
        if not pieces:
            raise UnsupportedOracleError("a max-of-smooth problem needs at least one piece")

        def values(z):
            return np.array([p.value(z) for p in pieces], dtype=float)

        def active(z):
            v = values(z)
            top = float(np.max(v))
            return np.flatnonzero(v >= top - ACTIVITY_TOL * max(1.0, abs(top)))

        def value(z):
            return float(np.max(values(z)))

        def subgradient(z):
            return np.asarray(pieces[int(active(z)[0])].gradient(z), dtype=float)

        def directional(z, d):
            idx = active(z)
            grads = [np.asarray(pieces[i].gradient(z), dtype=float) for i in idx]
            scores = [float(gr @ d) for gr in grads]
            return grads[int(np.argmax(scores))]

        return cls(dim=dim, value=value, subgradient=subgradient,
                   directional_subgradient=directional, pieces=pieces, split=split)


@dataclass(frozen=True)
class DownshiftParams:
    c: float = 0.1

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"downshift constant must satisfy c > 0, got {self.c}")


def evaluate_value(prob: Problem, z: Vector) -> float:
    fz = float(prob.value(z))
    if not np.isfinite(fz):
        raise EvaluationError(f"non-finite function value at z={np.array2string(np.asarray(z))}")
    return fz


def evaluate_subgradient(prob: Problem, z: Vector) -> Vector:
    g = np.asarray(prob.subgradient(z), dtype=float).reshape(-1)
    if g.shape != (prob.dim,) or not np.all(np.isfinite(g)):
        raise EvaluationError(f"invalid subgradient at z={np.array2string(np.asarray(z))}")
    return g


def _directional(prob: Problem, z: Vector, d: Vector) -> Vector:
    if prob.directional_subgradient is None:
        raise UnsupportedOracleError("oracle needs a directional subgradient selector; problem provides none")
    g = np.asarray(prob.directional_subgradient(z, d), dtype=float).reshape(-1)
    if not np.all(np.isfinite(g)):
        raise EvaluationError("non-finite directional subgradient")
    return g


def _downshifted_intercept(g: Vector, z: Vector, fz: float, x: Vector, fx: float, c: float) -> float:
    tx = fz + float(g @ (x - z))
    s = tx - fx + c * float((z - x) @ (z - x))
    if s > 0.0:
        # plane passes through (x, f(x) - c||z - x||^2)
        return fx - c * float((z - x) @ (z - x))
    return min(tx, fx)


def downshift_cut(prob: Problem, z, x, params: DownshiftParams, birth: int = 0,
                  g: Optional[Vector] = None, oracle: str = OracleKind.DOWNSHIFT.value) -> Plane:
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    fz = evaluate_value(prob, z)
    fx = evaluate_value(prob, x)
    if g is None:
        g = evaluate_subgradient(prob, z)
    a = _downshifted_intercept(g, z, fz, x, fx, params.c)
    return Plane(a=a, g=g, tag=PlaneTag.CUT, birth=birth, oracle=oracle, trial=z.copy(), f_trial=fz)


def double_downshift_cut(prob: Problem, z, x, params: DownshiftParams, birth: int = 0) -> Plane:
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    # the element of df(z) minimizing g^T (x - z)
    g = _directional(prob, z, z - x)
    return downshift_cut(prob, z, x, params, birth=birth, g=g, oracle=OracleKind.DOUBLE_DOWNSHIFT.value)


def standard_cut(prob: Problem, z, x, birth: int = 0) -> Plane:
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    g = _directional(prob, x, z - x)
    return Plane(a=evaluate_value(prob, x), g=g, tag=PlaneTag.CUT, birth=birth, oracle=OracleKind.STANDARD.value)


def _piece_linearizations(prob: Problem, z: Vector, x: Vector):
    if not prob.pieces:
        raise UnsupportedOracleError("natural oracle needs smooth pieces")
    vals = np.array([p.value(x) for p in prob.pieces], dtype=float)
    grads = [np.asarray(p.gradient(x), dtype=float) for p in prob.pieces]
    lin = np.array([v + gr @ (z - x) for v, gr in zip(vals, grads)])
    return vals, grads, lin


def natural_cut(prob: Problem, z, x, birth: int = 0) -> Plane:
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    vals, grads, lin = _piece_linearizations(prob, z, x)
    i = int(np.argmax(lin))
    return Plane(a=float(vals[i]), g=grads[i], tag=PlaneTag.CUT, birth=birth, oracle=OracleKind.NATURAL.value)


def natural_cuts_all_active(prob: Problem, z, x, birth: int = 0) -> List[Plane]:
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    vals, grads, lin = _piece_linearizations(prob, z, x)
    top = float(np.max(lin))
    idx = np.flatnonzero(lin >= top - ACTIVITY_TOL * max(1.0, abs(top)))
    return [Plane(a=float(vals[i]), g=grads[i], tag=PlaneTag.CUT, birth=birth, oracle=OracleKind.NATURAL.value)
            for i in idx]


def combined_cut(prob: Problem, z, x, params: DownshiftParams, birth: int = 0) -> Plane:
    """Whichever of the standard and double-downshift planes is larger at z."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    sharp = standard_cut(prob, z, x, birth=birth)
    down = double_downshift_cut(prob, z, x, params, birth=birth)
    d = z - x
    if down.a + down.g @ d > sharp.a + sharp.g @ d:
        return down
    return sharp


def exactness_cut(prob: Problem, x, oracle_kind: str = OracleKind.DOWNSHIFT.value, birth: int = 0) -> Plane:
    x = np.asarray(x, dtype=float)
    fx = evaluate_value(prob, x)
    g = evaluate_subgradient(prob, x)
    kind = OracleKind(oracle_kind).value
    if kind in DOWNSHIFT_KINDS:
        # O(x, x) of a downshift oracle: recyclable like any other downshift plane
        return Plane(a=fx, g=g, tag=PlaneTag.EXACTNESS, birth=birth, oracle=kind, trial=x.copy(), f_trial=fx)
    return Plane(a=fx, g=g, tag=PlaneTag.EXACTNESS, birth=birth, oracle=kind)


def recycle_cut(p: Plane, z, x_new, prob: Problem, params: DownshiftParams, birth: Optional[int] = None) -> Plane:
    """Re-anchor a downshift plane at the new serious iterate x_new."""
    if p.oracle not in DOWNSHIFT_KINDS or p.trial is None:
        raise UnsupportedOracleError(f"only downshift planes can be recycled (got oracle={p.oracle})")
    z = p.trial if z is None else np.asarray(z, dtype=float)
    x_new = np.asarray(x_new, dtype=float)
    fz = p.f_trial if p.f_trial is not None else evaluate_value(prob, z)
    fx_new = evaluate_value(prob, x_new)
    a = _downshifted_intercept(p.g, z, fz, x_new, fx_new, params.c)
    return Plane(a=a, g=p.g, tag=PlaneTag.RECYCLED, birth=p.birth if birth is None else birth,
                 oracle=p.oracle, trial=np.asarray(z, dtype=float).copy(), f_trial=fz)


class Oracle:
    """Binds a problem to one oracle kind; `cuts` answers a null step at z."""

    def __init__(self, problem: Problem, kind: str = OracleKind.DOWNSHIFT.value,
                 params: Optional[DownshiftParams] = None, all_active_pieces: bool = False):
        self.problem = problem
        self.kind = OracleKind(kind)
        self.params = params or DownshiftParams()
        self.all_active_pieces = all_active_pieces
        if self.kind in (OracleKind.STANDARD, OracleKind.DOUBLE_DOWNSHIFT, OracleKind.COMBINED) \
                and problem.directional_subgradient is None:
            raise UnsupportedOracleError(f"oracle '{self.kind.value}' needs a directional subgradient selector")
        if self.kind == OracleKind.NATURAL and not problem.pieces:
            raise UnsupportedOracleError("oracle 'natural' needs a max-of-smooth problem")

    @property
    def recyclable(self) -> bool:
        return self.kind.value in DOWNSHIFT_KINDS

    def exactness(self, x, birth: int = 0) -> Plane:
        return exactness_cut(self.problem, x, self.kind.value, birth=birth)

    def cuts(self, z, x, birth: int = 0) -> List[Plane]:
        if self.kind == OracleKind.DOWNSHIFT:
            return [downshift_cut(self.problem, z, x, self.params, birth=birth)]
        if self.kind == OracleKind.DOUBLE_DOWNSHIFT:
            return [double_downshift_cut(self.problem, z, x, self.params, birth=birth)]
        if self.kind == OracleKind.STANDARD:
            return [standard_cut(self.problem, z, x, birth=birth)]
        if self.kind == OracleKind.NATURAL:
            if self.all_active_pieces:
                return natural_cuts_all_active(self.problem, z, x, birth=birth)
            return [natural_cut(self.problem, z, x, birth=birth)]
        return [combined_cut(self.problem, z, x, self.params, birth=birth)]

    def __call__(self, z, x, birth: int = 0) -> List[Plane]:
        return self.cuts(z, x, birth=birth)


def make_oracle(kind: str, problem: Problem, params: Optional[DownshiftParams] = None,
                all_active_pieces: bool = False) -> Oracle:
    return Oracle(problem, kind, params, all_active_pieces)
