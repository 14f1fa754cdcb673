"""Benchmark and regression problems, addressable by `name:key=value,...`."""
import inspect
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize

from .errors import EvaluationError, UnknownProblemError
from .model import Polyhedron
from .oracles import ACTIVITY_TOL, Problem, SmoothPiece, Split


@dataclass
class NamedProblem:
    name: str
    problem: Problem
    C: Polyhedron
    x0: np.ndarray
    reference_x: Optional[np.ndarray]
    reference_f: Optional[float]
    provenance: str
    oracle: str
    prox_r: Optional[float] = None


def soft_threshold(u, r: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - r, 0.0)


# ---------------------------------------------------------------- quadratics

def counterexample_quadratic() -> NamedProblem:
    """f(x) = 1/2 x1^2 - x1 + 1/4 x2^2 on R^2."""

    def value(x):
        return 0.5 * x[0] ** 2 - x[0] + 0.25 * x[1] ** 2

    def gradient(x):
        return np.array([x[0] - 1.0, 0.5 * x[1]])

    return NamedProblem(
        name="counterexample_quadratic",
        problem=Problem.from_pieces(2, [SmoothPiece(value, gradient)]),
        C=Polyhedron.unconstrained(2),
        x0=np.zeros(2),
        reference_x=np.array([1.0, 0.0]),
        reference_f=-0.5,
        provenance="closed-form",
        oracle="downshift",
    )


@dataclass
class QuadraticPieces:
    """f_i(x) = 1/2 (x - c_i)^T H_i (x - c_i) + e_i; f = max_i f_i."""

    hessians: List[np.ndarray]
    centers: List[np.ndarray]
    offsets: List[float]

    @property
    def dim(self) -> int:
        return self.centers[0].shape[0]

    def piece(self, i: int) -> SmoothPiece:
        H, c, e = self.hessians[i], self.centers[i], self.offsets[i]
        return SmoothPiece(
            value=lambda x: float(0.5 * (x - c) @ H @ (x - c) + e),
            gradient=lambda x: H @ (x - c),
        )

    def problem(self) -> Problem:
        return Problem.from_pieces(self.dim, [self.piece(i) for i in range(len(self.offsets))])

    def batch_values(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], len(self.offsets)))
        for i, (H, c, e) in enumerate(zip(self.hessians, self.centers, self.offsets)):
            D = X - c
            out[:, i] = 0.5 * np.einsum("ij,jk,ik->i", D, H, D) + e
        return out


def max_of_quadratics(hessians: Sequence, centers: Sequence, offsets: Sequence) -> QuadraticPieces:
    return QuadraticPieces(
        hessians=[np.atleast_2d(np.asarray(H, dtype=float)) for H in hessians],
        centers=[np.atleast_1d(np.asarray(c, dtype=float)) for c in centers],
        offsets=[float(e) for e in offsets],
    )


def grid_reference(pieces: QuadraticPieces, lower, upper, points: int = 10 ** 6) -> Tuple[np.ndarray, float]:
    """Grid search followed by an SLSQP polish of min t s.t. f_i(x) <= t."""
    n = pieces.dim
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
    per_axis = max(2, int(round(points ** (1.0 / n))))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
    X = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    F = np.max(pieces.batch_values(X), axis=1)
    best = int(np.argmin(F))
    x_grid, f_grid = X[best], float(F[best])

    m = len(pieces.offsets)
    polish_pieces = [pieces.piece(i) for i in range(m)]
    constraints = [
        {
            "type": "ineq",
            "fun": (lambda w, p=p: w[-1] - p.value(w[:-1])),
            "jac": (lambda w, p=p: np.concatenate((-p.gradient(w[:-1]), [1.0]))),
        }
        for p in polish_pieces
    ]
    res = scipy.optimize.minimize(
        lambda w: w[-1],
        np.concatenate((x_grid, [f_grid])),
        jac=lambda w: np.concatenate((np.zeros(n), [1.0])),
        method="SLSQP",
        constraints=constraints,
        options={"ftol": 1e-15, "maxiter": 500},
    )
    x_pol = res.x[:-1]
    f_pol = float(np.max(pieces.batch_values(x_pol[None, :])))
    if f_pol <= f_grid:
        return x_pol, f_pol
    return x_grid, f_grid


def max_quad(seed: int = 0, pieces: int = 3, dim: int = 2) -> NamedProblem:
    rng = np.random.default_rng(seed)
    hessians, centers, offsets = [], [], []
    for _ in range(pieces):
        M = rng.normal(size=(dim, dim))
        hessians.append(M @ M.T / dim + np.eye(dim))
        centers.append(rng.uniform(-2.0, 2.0, dim))
        offsets.append(float(rng.uniform(-1.0, 1.0)))
    quad = max_of_quadratics(hessians, centers, offsets)
    ref_x, ref_f = grid_reference(quad, -4.0, 4.0)
    return NamedProblem(
        name="max_quad",
        problem=quad.problem(),
        C=Polyhedron.unconstrained(dim),
        x0=np.full(dim, 3.0),
        reference_x=ref_x,
        reference_f=ref_f,
        provenance="grid",
        oracle="downshift",
    )


# ------------------------------------------------------------------- zigzag

class ZigZag:
    """Piecewise-linear f on [-1, 1] bouncing between 0 and t^2, slopes +-1.

    Breakpoints t_1 = 1 > t_2 > ... follow t_{2k} = (sqrt(1 + 4 t_{2k-1}) - 1)/2,
    t_{2k+1} = t_{2k} - t_{2k}^2; below the last even breakpoint f(t) = t^2.
    """

    def __init__(self, pairs: int = 20000):
        t = [1.0]
        for _ in range(pairs):
            even = (np.sqrt(1.0 + 4.0 * t[-1]) - 1.0) / 2.0
            t.append(even)
            t.append(even - even * even)
        t.pop()  # end on an even breakpoint
        self.breakpoints = np.array(t)
        values = np.where(np.arange(len(t)) % 2 == 0, 0.0, self.breakpoints ** 2)
        self._ts = self.breakpoints[::-1].copy()
        self._vs = values[::-1].copy()
        self.cutoff = float(self._ts[0])

    def t(self, i: int) -> float:
        """Breakpoint t_i, 1-based."""
        return float(self.breakpoints[i - 1])

    def _check(self, u: float) -> None:
        if u > 1.0 + 1e-12:
            raise EvaluationError(f"zigzag is defined on [-1, 1], got |t| = {u}")

    def value(self, x) -> float:
        u = abs(float(np.asarray(x).reshape(-1)[0]))
        self._check(u)
        if u <= self.cutoff:
            return u * u
        return float(np.interp(u, self._ts, self._vs))

    def _slopes(self, u: float) -> List[float]:
        if u <= self.cutoff:
            return [2.0 * u]
        idx = int(np.searchsorted(self._ts, u, side="left"))
        idx = min(max(idx, 1), len(self._ts) - 1)
        left = 1.0 if self._vs[idx] > self._vs[idx - 1] else -1.0
        slopes = [left]
        if np.isclose(u, self._ts[idx], rtol=1e-14, atol=0.0) and idx + 1 < len(self._ts):
            slopes.append(1.0 if self._vs[idx + 1] > self._vs[idx] else -1.0)
        return slopes

    def subgradient(self, x) -> np.ndarray:
        v = float(np.asarray(x).reshape(-1)[0])
        self._check(abs(v))
        sign = -1.0 if v < 0 else 1.0
        return np.array([sign * self._slopes(abs(v))[0]])

    def directional_subgradient(self, x, d) -> np.ndarray:
        v = float(np.asarray(x).reshape(-1)[0])
        self._check(abs(v))
        sign = -1.0 if v < 0 else 1.0
        dd = float(np.asarray(d).reshape(-1)[0])
        cands = [sign * s for s in self._slopes(abs(v))]
        return np.array([max(cands, key=lambda g: g * dd)])


_ZIGZAG: Optional[ZigZag] = None


def zigzag_function() -> ZigZag:
    global _ZIGZAG
    if _ZIGZAG is None:
        _ZIGZAG = ZigZag()
    return _ZIGZAG


def zigzag_sequence(k_values: Sequence[int]) -> List[np.ndarray]:
    """s_k = t_{2k} + t_{2k}^2 / 2, the midpoint of the slope -1 segment."""
    zz = zigzag_function()
    return [np.array([zz.t(2 * k) + zz.t(2 * k) ** 2 / 2.0]) for k in k_values]


def zigzag() -> NamedProblem:
    zz = zigzag_function()
    return NamedProblem(
        name="zigzag",
        problem=Problem(dim=1, value=zz.value, subgradient=zz.subgradient,
                        directional_subgradient=zz.directional_subgradient),
        C=Polyhedron.box([-1.0], [1.0]),
        x0=np.array([0.9]),
        reference_x=np.zeros(1),
        reference_f=0.0,
        provenance="closed-form",
        oracle="standard",
    )


# ----------------------------------------------------------------- splitting

def l1_quadratic(b=2.0, r: float = 1.0, n: int = 1) -> NamedProblem:
    """f(y) = ||y||_1 + 1/2 ||y - b||^2 with the l1 part handled by its prox."""
    b = np.broadcast_to(np.asarray(b, dtype=float), (int(n),)).copy() if np.ndim(b) == 0 \
        else np.asarray(b, dtype=float)
    dim = b.shape[0]

    def value(y):
        return float(np.sum(np.abs(y)) + 0.5 * (y - b) @ (y - b))

    def subgradient(y):
        return np.sign(y) + (y - b)

    def directional(y, d):
        s = np.where(y != 0.0, np.sign(y), np.sign(d))
        return s + (y - b)

    split = Split(
        g_value=lambda y: float(np.sum(np.abs(y))),
        g_prox=soft_threshold,
        h_value=lambda y: float(0.5 * (y - b) @ (y - b)),
        h_grad=lambda y: y - b,
        separable=True,
    )
    return NamedProblem(
        name="l1_quadratic",
        problem=Problem(dim=dim, value=value, subgradient=subgradient,
                        directional_subgradient=directional, split=split),
        C=Polyhedron.unconstrained(dim),
        x0=np.zeros(dim),
        reference_x=soft_threshold(b, 1.0),
        reference_f=value(soft_threshold(b, 1.0)),
        provenance="closed-form",
        oracle="standard",
        prox_r=float(r),
    )


# ------------------------------------------------------------ distance (dc)

def distance_squared_dc(points=((-1.0,), (1.0,)), sign: int = 1) -> NamedProblem:
    """f = +-1/2 d_S^2 for a finite set S."""
    if isinstance(points, str):
        points = [[float(p)] for p in points.split("/") if p]
    S = np.atleast_2d(np.asarray(points, dtype=float))
    if S.shape[0] == 0 or S.size == 0:
        raise UnknownProblemError("distance_squared_dc needs a nonempty point set")
    sign = 1.0 if float(sign) >= 0 else -1.0
    n = S.shape[1]
    C = Polyhedron.box(np.full(n, -3.0), np.full(n, 3.0))

    if sign < 0:
        pieces = [SmoothPiece(value=lambda x, s=s: float(-0.5 * (x - s) @ (x - s)),
                              gradient=lambda x, s=s: -(x - s)) for s in S]
        problem = Problem.from_pieces(n, pieces)
        # best box corner; exact for the default pair, only a corner bound for general point sets
        corners = np.array(np.meshgrid(*[[-3.0, 3.0]] * n, indexing="ij")).reshape(n, -1).T
        vals = [problem.value(c) for c in corners]
        ref = corners[int(np.argmin(vals))]
        return NamedProblem(
            name="distance_squared_dc", problem=problem, C=C, x0=np.full(n, 1.5),
            reference_x=ref, reference_f=float(min(vals)), provenance="corner-enumeration", oracle="downshift",
        )

    def sq(x):
        D = S - x
        return 0.5 * np.einsum("ij,ij->i", D, D)

    def value(x):
        return float(np.min(sq(x)))

    def subgradient(x):
        return x - S[int(np.argmin(sq(x)))]

    def directional(x, d):
        v = sq(x)
        near = np.flatnonzero(v <= np.min(v) + ACTIVITY_TOL * max(1.0, float(np.min(v))))
        grads = [x - S[i] for i in near]
        return grads[int(np.argmax([g @ d for g in grads]))]

    return NamedProblem(
        name="distance_squared_dc",
        problem=Problem(dim=n, value=value, subgradient=subgradient, directional_subgradient=directional),
        C=C,
        x0=np.full(n, 0.25),
        reference_x=S[int(np.argmin(sq(np.full(n, 0.25))))].copy(),
        reference_f=0.0,
        provenance="closed-form",
        oracle="standard",
    )


# ----------------------------------------------------------------- registry

PROBLEMS: Dict[str, Callable[..., NamedProblem]] = {
    "counterexample_quadratic": counterexample_quadratic,
    "distance_squared_dc": distance_squared_dc,
    "l1_quadratic": l1_quadratic,
    "max_quad": max_quad,
    "zigzag": zigzag,
}


def list_problems() -> List[str]:
    return sorted(PROBLEMS)


def _parse_value(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def get_problem(spec: str, seed: Optional[int] = None) -> NamedProblem:
    """Build a problem from `name` or `name:key=value,key=value`."""
    name, _, params = spec.partition(":")
    name = name.strip()
    if name not in PROBLEMS:
        raise UnknownProblemError(f"unknown problem '{name}'; known: {', '.join(list_problems())}")
    builder = PROBLEMS[name]
    accepted = inspect.signature(builder).parameters
    kwargs = {}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, eq, raw = item.partition("=")
        if not eq or key.strip() not in accepted:
            raise UnknownProblemError(f"bad parameter '{item}' for problem '{name}'")
        kwargs[key.strip()] = _parse_value(raw.strip())
    if "seed" in accepted and "seed" not in kwargs and seed is not None:
        kwargs["seed"] = seed
    return builder(**kwargs)
