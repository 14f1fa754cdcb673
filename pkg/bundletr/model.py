from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import BundleError, BundlePolicyError, DimensionError, EmptyModelError


class PlaneTag(str, Enum):
    EXACTNESS = "exactness"
    CUT = "cut"
    AGGREGATE = "aggregate"
    RECYCLED = "recycled"


@dataclass(frozen=True)
class Plane:
    """Affine function a + g^T (. - x) stored relative to its anchor x.

    `trial` / `f_trial` are only set for downshift provenance, where the plane
    can be re-anchored after a serious step.
    """

    a: float
    g: np.ndarray
    tag: PlaneTag = PlaneTag.CUT
    birth: int = 0
    oracle: Optional[str] = None
    trial: Optional[np.ndarray] = None
    f_trial: Optional[float] = None

    def retag(self, tag: PlaneTag, birth: Optional[int] = None) -> "Plane":
        return replace(self, tag=tag, birth=self.birth if birth is None else birth)


@dataclass(frozen=True)
class BundlePolicy:
    max_planes: int = 10
    keep_newest: int = 1

    def __post_init__(self):
        if self.max_planes < 3:
            raise BundlePolicyError(f"max_planes ≥ 3 required (exactness + aggregate + cut), got {self.max_planes}")
        if self.keep_newest < 1:
            raise BundlePolicyError(f"keep_newest ≥ 1 required, got {self.keep_newest}")

    @classmethod
    def for_dimension(cls, n: int, max_planes: Optional[int] = None, keep_newest: int = 1) -> "BundlePolicy":
        # Caratheodory: n + 2 planes suffice; keep some headroom
        return cls(max_planes=max_planes if max_planes else max(n + 2, 10), keep_newest=keep_newest)


@dataclass
class Polyhedron:
    """C = {y : A y <= b, lower <= y <= upper}."""

    A: np.ndarray
    b: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.shape[0]:
            raise DimensionError(f"A has {self.A.shape[0]} rows but b has {self.b.shape[0]} entries")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise BundleError("polyhedron rows must be finite")
        n = self.A.shape[1]
        if self.lower is not None:
            self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        if self.upper is not None:
            self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()

    @classmethod
    def unconstrained(cls, n: int) -> "Polyhedron":
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def box(cls, lower, upper) -> "Polyhedron":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        return cls(np.zeros((0, lower.shape[0])), np.zeros(0), lower=lower, upper=upper)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def rows(self) -> Tuple[np.ndarray, np.ndarray]:
        """All constraints as one stacked system, box bounds appended as rows."""
        n = self.dim
        blocks, rhs = [self.A], [self.b]
        eye = np.eye(n)
        if self.upper is not None:
            keep = np.isfinite(self.upper)
            blocks.append(eye[keep])
            rhs.append(self.upper[keep])
        if self.lower is not None:
            keep = np.isfinite(self.lower)
            blocks.append(-eye[keep])
            rhs.append(-self.lower[keep])
        return np.vstack(blocks), np.concatenate(rhs)

    def is_unconstrained(self) -> bool:
        A, _ = self.rows()
        return A.shape[0] == 0

    def contains(self, y, tol: float = 1e-9) -> bool:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise DimensionError(f"point of shape {y.shape} for a polyhedron in R^{self.dim}")
        A, b = self.rows()
        if A.shape[0] == 0:
            return True
        return bool(np.all(A @ y <= b + tol * (1.0 + np.abs(b))))


@dataclass
class WorkingModel:
    """Finite max of planes at anchor x plus the quadratic term 1/2 (.-x)^T Q (.-x)."""

    x: np.ndarray
    fx: float
    planes: List[Plane]
    Q: np.ndarray
    q_bound: float = 1e3

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    def intercepts(self) -> np.ndarray:
        return np.array([p.a for p in self.planes], dtype=float)

    def slopes(self) -> np.ndarray:
        if not self.planes:
            return np.zeros((0, self.dim))
        return np.vstack([p.g for p in self.planes])

    def exactness_plane(self) -> Optional[Plane]:
        for p in self.planes:
            if p.tag == PlaneTag.EXACTNESS:
                return p
        return None

    def validate(self, tol: float = 1e-10) -> None:
        if not self.planes:
            raise EmptyModelError("working model has no planes")
        ex = self.exactness_plane()
        if ex is None or abs(ex.a - self.fx) > tol * (1.0 + abs(self.fx)):
            raise BundleError("working model lacks an exactness plane with a = f(x)")
        worst = float(np.max(self.intercepts()) - self.fx)
        if worst > tol * (1.0 + abs(self.fx)):
            raise BundleError(f"plane intercept exceeds f(x) by {worst:.3e}")
        eig = np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))
        if eig[0] < -tol or eig[-1] > self.q_bound * (1.0 + tol):
            raise BundleError(f"Q must satisfy 0 <= Q and ||Q|| <= {self.q_bound}")


def _check_dims(*vectors: np.ndarray) -> None:
    shapes = {v.shape for v in vectors}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(shapes)}")


def plane_value(p: Plane, y, x) -> float:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    g = np.asarray(p.g, dtype=float)
    _check_dims(y, x, g)
    return float(p.a + g @ (y - x))


def model_value(wm: WorkingModel, y) -> float:
    if not wm.planes:
        raise EmptyModelError("cannot evaluate a working model without planes")
    y = np.asarray(y, dtype=float)
    _check_dims(y, wm.x)
    return float(np.max(wm.intercepts() + wm.slopes() @ (y - wm.x)))


def second_order_value(wm: WorkingModel, y) -> float:
    d = np.asarray(y, dtype=float) - wm.x
    return model_value(wm, y) + 0.5 * float(d @ wm.Q @ d)


def update_working_model(
    wm: WorkingModel,
    new_cuts: Sequence[Plane],
    aggregate: Plane,
    policy: BundlePolicy,
) -> WorkingModel:
    """Next working model: exactness plane, aggregate and all new cuts are kept,
    then older planes fill the remaining room, newest first."""
    exactness = wm.exactness_plane()
    if exactness is None:
        raise BundleError("working model lacks an exactness plane")
    new_cuts = list(new_cuts)
    mandatory = 2 + len(new_cuts)
    if mandatory > policy.max_planes:
        raise BundlePolicyError(
            f"max_planes={policy.max_planes} cannot hold exactness + aggregate + {len(new_cuts)} cut(s)"
        )

    older = [p for p in wm.planes if p is not exactness and p is not aggregate]
    # the keep_newest most recent cuts stay, counting the new ones
    cuts_by_age = sorted(
        [p for p in older if p.tag in (PlaneTag.CUT, PlaneTag.RECYCLED)], key=lambda p: p.birth
    )
    protect_count = max(0, policy.keep_newest - len(new_cuts))
    protected = set(map(id, cuts_by_age[len(cuts_by_age) - protect_count:])) if protect_count else set()

    room = policy.max_planes - mandatory
    keep_ids = set()
    for p in sorted(older, key=lambda p: p.birth, reverse=True):
        if room <= 0:
            break
        if id(p) in protected:
            keep_ids.add(id(p))
            room -= 1
    for p in sorted(older, key=lambda p: p.birth, reverse=True):
        if room <= 0:
            break
        if id(p) not in keep_ids:
            keep_ids.add(id(p))
            room -= 1
    retained = [p for p in older if id(p) in keep_ids]

    return WorkingModel(
        x=wm.x,
        fx=wm.fx,
        planes=[exactness, aggregate] + retained + new_cuts,
        Q=wm.Q,
        q_bound=wm.q_bound,
    )
