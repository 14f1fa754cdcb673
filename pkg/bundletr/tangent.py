"""Trust-region tangent program.

    minimize    t + 1/2 d^T Q d
    subject to  a_i + g_i^T d <= t        (planes)
                A (x + d) <= b            (polyhedron C)
                -R <= d_i <= R            (max-norm trust region)

solved in the variables w = (t, d) by a dense primal active-set method.
Multipliers come straight out of the final working set, which is what the
aggregate plane is built from.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import TangentProgramError
from .model import Plane, PlaneTag, Polyhedron, WorkingModel, model_value, second_order_value

STATIONARY_TOL = 1e-11
MULT_TOL = 1e-10
ZERO_MULT = 1e-12
DIR_TOL = 1e-12
TIE_TOL = 1e-12
CURVATURE_TOL = 1e-10
AGGREGATE_CLAMP_TOL = 1e-8


class TangentStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class TangentSolution:
    y: np.ndarray
    t: float
    objective: float
    lam: np.ndarray
    mu: np.ndarray
    box_mult: np.ndarray
    status: TangentStatus
    iterations: int = 0
    working_set: List[int] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == TangentStatus.OPTIMAL


def _null_space(M: np.ndarray, nvar: int) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(nvar)
    return scipy.linalg.null_space(M)


def _multipliers(Gw: np.ndarray, grad: np.ndarray) -> np.ndarray:
    if Gw.shape[0] == 0:
        return np.zeros(0)
    return scipy.linalg.lstsq(Gw.T, -grad)[0]


def _ratio_test(G, h, w, p, working, alpha_max) -> Tuple[float, Optional[int]]:
    """Longest feasible step along p; ties go to the lowest row index."""
    best, block = alpha_max, None
    pn = float(np.linalg.norm(p))
    in_set = set(working)
    for i in range(G.shape[0]):
        if i in in_set:
            continue
        gp = float(G[i] @ p)
        if gp <= DIR_TOL * float(np.linalg.norm(G[i])) * pn:
            continue
        alpha = max(float(h[i] - G[i] @ w), 0.0) / gp
        if block is None and alpha <= best:
            best, block = alpha, i
        elif alpha < best - TIE_TOL * (1.0 + best):
            best, block = alpha, i
    return best, block


def _search_direction(Z: np.ndarray, H: np.ndarray, rg: np.ndarray, scale: float) -> Tuple[np.ndarray, float]:
    Hr = Z.T @ H @ Z
    evals, V = scipy.linalg.eigh(Hr)
    curv = evals > CURVATURE_TOL * max(1.0, float(np.max(np.abs(evals))) if evals.size else 1.0)
    V0 = V[:, ~curv]
    r0 = V0 @ (V0.T @ rg)
    if np.linalg.norm(r0) > STATIONARY_TOL * scale:
        # flat direction: linear decrease until something blocks
        return -Z @ r0, np.inf
    Vp = V[:, curv]
    u = Vp @ ((Vp.T @ rg) / evals[curv])
    return -Z @ u, 1.0


def _active_set(H, c, G, h, w0, max_iter):
    nvar = w0.shape[0]
    w = w0.copy()
    working: List[int] = []
    for it in range(max_iter):
        grad = c + H @ w
        scale = 1.0 + float(np.linalg.norm(grad))
        Gw = G[working]
        Z = _null_space(Gw, nvar)
        rg = Z.T @ grad
        if Z.shape[1] == 0 or np.linalg.norm(rg) <= STATIONARY_TOL * scale:
            lam_w = _multipliers(Gw, grad)
            negative = [i for i, lam in zip(working, lam_w) if lam < -MULT_TOL]
            if not negative:
                lam = np.zeros(G.shape[0])
                lam[working] = np.maximum(lam_w, 0.0)
                return w, lam, working, True, it
            working.remove(min(negative))
            continue
        p, alpha_max = _search_direction(Z, H, rg, scale)
        alpha, block = _ratio_test(G, h, w, p, working, alpha_max)
        if not np.isfinite(alpha):
            logging.warning("tangent program: unbounded flat direction at iteration %d", it)
            break
        w = w + alpha * p
        if block is not None:
            working.append(block)
    return w, np.zeros(G.shape[0]), working, False, max_iter


def _push_to_vertex(G, h, c, w, lam, working):
    """On a flat optimal face, slide toward the far trust-region corner until
    a vertex is reached. The objective stays constant along the face."""
    d = w[1:]
    if np.max(np.abs(d), initial=0.0) <= 1e-12:
        return w, working
    working = [i for i in working if lam[i] > ZERO_MULT]
    nvar = w.shape[0]
    for _ in range(nvar):
        Z = _null_space(G[working], nvar)
        if Z.shape[1] == 0:
            break
        d = w[1:]
        s = np.where(np.abs(d) > 1e-12, np.sign(d), 1.0)
        p = Z @ (Z.T @ np.concatenate(([0.0], s)))
        if np.linalg.norm(p) <= 1e-12:
            p = Z[:, 0]
        alpha, block = _ratio_test(G, h, w, p, working, np.inf)
        if block is None:
            break
        w = w + alpha * p
        working.append(block)
    return w, working


class TangentProgramSolver:
    """One instance per driver; keeps the last working set for inspection."""

    def __init__(self, max_iter: Optional[int] = None):
        self.max_iter = max_iter
        self.last_working_set: List[int] = []

    def solve(self, wm: WorkingModel, C: Polyhedron, R: float) -> TangentSolution:
        x = wm.x
        n = x.shape[0]
        npl = len(wm.planes)
        A, b = C.rows()
        mC = A.shape[0]

        if not C.contains(x):
            return TangentSolution(y=x.copy(), t=wm.fx, objective=wm.fx, lam=np.zeros(npl), mu=np.zeros(mC),
                                   box_mult=np.zeros(n), status=TangentStatus.INFEASIBLE)

        eye = np.eye(n)
        G = np.vstack([
            np.hstack([-np.ones((npl, 1)), wm.slopes()]),
            np.hstack([np.zeros((mC, 1)), A]),
            np.hstack([np.zeros((n, 1)), eye]),
            np.hstack([np.zeros((n, 1)), -eye]),
        ])
        h = np.concatenate([
            -wm.intercepts(),
            np.maximum(b - A @ x, 0.0),
            np.full(n, R),
            np.full(n, R),
        ])
        H = np.zeros((n + 1, n + 1))
        H[1:, 1:] = 0.5 * (wm.Q + wm.Q.T)
        c = np.zeros(n + 1)
        c[0] = 1.0
        w0 = np.concatenate(([float(np.max(wm.intercepts()))], np.zeros(n)))

        max_iter = self.max_iter or 50 + 10 * (n + 1 + G.shape[0])
        w, lam, working, ok, iterations = _active_set(H, c, G, h, w0, max_iter)
        if not ok:
            logging.warning("tangent program hit its iteration cap (%d)", max_iter)
            self.last_working_set = list(working)
            y = x + w[1:]
            return TangentSolution(y=y, t=model_value(wm, y), objective=second_order_value(wm, y),
                                   lam=np.zeros(npl), mu=np.zeros(mC), box_mult=np.zeros(n),
                                   status=TangentStatus.NUMERICAL_FAILURE, iterations=iterations,
                                   working_set=list(working))

        if not np.any(wm.Q):
            w, working = _push_to_vertex(G, h, c, w, lam, working)
            lam = np.zeros(G.shape[0])
            lam[working] = np.maximum(_multipliers(G[working], c), 0.0)

        lam[lam < ZERO_MULT] = 0.0
        self.last_working_set = list(working)
        y = x + w[1:]
        return TangentSolution(
            y=y,
            t=model_value(wm, y),
            objective=second_order_value(wm, y),
            lam=lam[:npl],
            mu=lam[npl:npl + mC],
            box_mult=lam[npl + mC:npl + mC + n] - lam[npl + mC + n:],
            status=TangentStatus.OPTIMAL,
            iterations=iterations,
            working_set=list(working),
        )


def solve_tangent_program(wm: WorkingModel, C: Polyhedron, R: float,
                          solver: Optional[TangentProgramSolver] = None) -> TangentSolution:
    return (solver or TangentProgramSolver()).solve(wm, C, R)


def aggregate_subgradient(wm: WorkingModel, sol: TangentSolution, C: Polyhedron) -> np.ndarray:
    A, _ = C.rows()
    g = wm.slopes().T @ sol.lam
    if A.shape[0]:
        g = g + A.T @ sol.mu
    return g


def aggregate_from_solution(wm: WorkingModel, sol: TangentSolution, C: Polyhedron, birth: int = 0) -> Plane:
    if not sol.optimal:
        raise TangentProgramError(f"aggregate needs an optimal tangent solution, got {sol.status.value}")
    g_star = aggregate_subgradient(wm, sol, C)
    a_star = sol.t + float(g_star @ (wm.x - sol.y))
    if a_star > wm.fx + AGGREGATE_CLAMP_TOL * (1.0 + abs(wm.fx)):
        logging.warning("aggregate intercept %.12g exceeds f(x)=%.12g; a plane in the model is above f(x)",
                        a_star, wm.fx)
    return Plane(a=min(a_star, wm.fx), g=g_star, tag=PlaneTag.AGGREGATE, birth=birth)


def kkt_residual(wm: WorkingModel, C: Polyhedron, R: float, sol: TangentSolution) -> float:
    """Largest violation among stationarity, feasibility and complementarity."""
    A, b = C.rows()
    d = sol.y - wm.x
    plane_vals = wm.intercepts() + wm.slopes() @ d
    t = sol.t

    stat_y = wm.slopes().T @ sol.lam + wm.Q @ d + sol.box_mult
    if A.shape[0]:
        stat_y = stat_y + A.T @ sol.mu
    terms = [
        float(np.max(np.abs(stat_y), initial=0.0)),
        abs(1.0 - float(np.sum(sol.lam))),
        float(np.max(plane_vals - t, initial=0.0)),
        float(np.max(np.abs(d), initial=0.0) - R),
        float(np.max(-sol.lam, initial=0.0)),
        float(np.max(sol.lam * (t - plane_vals), initial=0.0)),
    ]
    if A.shape[0]:
        slack = b - A @ sol.y
        terms += [
            float(np.max(-slack, initial=0.0)),
            float(np.max(-sol.mu, initial=0.0)),
            float(np.max(np.abs(sol.mu * slack), initial=0.0)),
        ]
    v = sol.box_mult
    box_comp = np.where(v > 0, v * (R - d), np.where(v < 0, -v * (R + d), 0.0))
    terms.append(float(np.max(np.abs(box_comp), initial=0.0)))
    return max(0.0, *terms)


def decrease_estimate_gap(wm: WorkingModel, sol: TangentSolution, C: Polyhedron) -> float:
    """(f(x) - phi(y)) - ||g* + Q(y - x)||_inf ||y - x||_inf; nonnegative at optimality."""
    d = sol.y - wm.x
    g_star = aggregate_subgradient(wm, sol, C)
    lhs = wm.fx - model_value(wm, sol.y)
    rhs = float(np.max(np.abs(g_star + wm.Q @ d), initial=0.0)) * float(np.max(np.abs(d), initial=0.0))
    return lhs - rhs
