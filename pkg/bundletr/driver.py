"""Nonsmooth trust-region bundle driver.

Outer loop over serious iterates x^j, inner loop over trial points z^k with
a max-norm trust region R_k that is only ever frozen or halved inside one
inner loop. All numbers that drive a decision are kept in the trace.
"""
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .config import QPolicy, SolverConfig, SolverMode, TrialMode
from .errors import (
    ConfigError,
    EvaluationError,
    InfeasibleStartError,
    TangentProgramError,
    TrialStepError,
    UnsupportedOracleError,
)
from .model import (
    BundlePolicy,
    Plane,
    PlaneTag,
    Polyhedron,
    WorkingModel,
    model_value,
    second_order_value,
    update_working_model,
)
from .oracles import DOWNSHIFT_KINDS, DownshiftParams, Oracle, Problem, evaluate_value, make_oracle, recycle_cut
from .tangent import (
    TangentProgramSolver,
    TangentSolution,
    aggregate_from_solution,
    aggregate_subgradient,
    decrease_estimate_gap,
)

NAN = float("nan")
DESCENT_SLACK = 1e-10
DIAGNOSTIC_SLACK = 1e-8


class StepKind(str, Enum):
    SERIOUS = "serious"
    NULL_FROZEN = "null-frozen"
    NULL_HALVED = "null-halved"
    FALLBACK = "fallback"
    CRITICAL = "critical"


class SolveStatus(str, Enum):
    CRITICAL = "critical"
    OUTER_CAP = "outer_cap"
    INNER_CAP = "inner_cap"


@dataclass
class TraceRecord:
    j: int
    k: int
    R: float
    R_sharp: float
    f: float
    t: float
    obj: float
    rho: float = NAN
    rho_tilde: float = NAN
    gstar_norm: float = NAN
    step_norm: float = NAN
    kind: StepKind = StepKind.NULL_FROZEN
    planes: int = 0
    # in-memory only
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    fz: float = NAN
    phi_z: float = NAN
    phi_next_z: float = NAN
    decrease_gap: float = NAN


@dataclass
class SolveTrace:
    records: List[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def serious(self) -> List[TraceRecord]:
        return [r for r in self.records if r.kind == StepKind.SERIOUS]

    def inner(self, j: int) -> List[TraceRecord]:
        return [r for r in self.records if r.j == j]


@dataclass
class InnerOutcome:
    kind: str  # serious | converged | inner_cap
    x: np.ndarray
    fx: float
    R: float
    rho: float = NAN
    predicted: float = NAN
    wm: Optional[WorkingModel] = None


@dataclass
class SolveResult:
    x: np.ndarray
    f: float
    status: SolveStatus
    trace: SolveTrace
    serious_steps: int = 0
    inner_iterations: int = 0
    evaluations: int = 0
    wall_time: float = 0.0

    def summary(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "f": float(self.f),
            "status": self.status.value,
            "serious_steps": int(self.serious_steps),
            "inner_iterations": int(self.inner_iterations),
            "evaluations": int(self.evaluations),
            "wall_time": float(self.wall_time),
        }


@contextmanager
def _iteration_context(j: int, k: int):
    try:
        yield
    except EvaluationError as e:
        if e.outer is not None:
            raise
        raise EvaluationError(str(e), outer=j, inner=k) from e


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v), initial=0.0))


# ------------------------------------------------------------ step pieces

def acceptance_test(fx: float, fz: float, phi_obj: float, gamma: float) -> Tuple[float, bool]:
    predicted = fx - phi_obj
    if not predicted > 0:
        raise ValueError(f"acceptance test needs a positive predicted decrease, got {predicted}")
    rho = (fx - fz) / predicted
    return rho, rho >= gamma


def secondary_test_and_radius(fx: float, phi_next_at_z: float, phi_obj: float, R: float,
                              gamma_tilde: float) -> Tuple[float, float]:
    predicted = fx - phi_obj
    if not predicted > 0:
        raise ValueError(f"secondary test needs a positive predicted decrease, got {predicted}")
    rho_tilde = (fx - phi_next_at_z) / predicted
    return rho_tilde, (R if rho_tilde < gamma_tilde else 0.5 * R)


def memory_radius_update(rho: float, R: float, Gamma: float) -> float:
    return 2.0 * R if rho >= Gamma else R


def trial_step(sol: TangentSolution, wm: WorkingModel, config: SolverConfig, k: int = 1) -> np.ndarray:
    """Trial point on the segment [x, y] admitted by the theta/Theta rule."""
    if not sol.optimal:
        raise TangentProgramError("trial step needs an optimal tangent solution")
    x, y = wm.x, sol.y
    mode = TrialMode(config.trial_mode)
    if mode == TrialMode.DIRECT:
        return y.copy()

    alpha = max(config.theta, config.backtrack_alpha)
    if mode == TrialMode.STRONG_NU:
        nu0 = config.R_initial if config.nu0 is None else config.nu0
        nu = nu0 * config.nu_decay ** k
        dist = _inf_norm(y - x)
        if dist > 0:
            # ||z - y|| = (1 - alpha) ||y - x|| <= nu
            alpha = max(alpha, 1.0 - nu / dist)
        alpha = min(alpha, 1.0)
    z = x + alpha * (y - x)

    pred_y = wm.fx - sol.objective
    pred_z = wm.fx - second_order_value(wm, z)
    if pred_z < config.theta * pred_y - 1e-12 * (1.0 + abs(wm.fx)):
        raise TrialStepError(f"trial point keeps {pred_z:.3e} of predicted decrease {pred_y:.3e} (theta={config.theta})")
    if _inf_norm(z - x) > config.Theta * _inf_norm(y - x) * (1.0 + 1e-12):
        raise TrialStepError("trial point leaves the Theta-enlarged step ball")
    return z


def prox_tangent_solve(prob: Problem, x, r: float, radius: Optional[float] = None) -> np.ndarray:
    """prox_{r g}(x - r grad h(x)), clipped to the max-norm ball when a radius is given."""
    split = prob.split
    if split is None:
        raise UnsupportedOracleError("prox step needs a problem with split structure g + h")
    x = np.asarray(x, dtype=float)
    y = np.asarray(split.g_prox(x - r * np.asarray(split.h_grad(x), dtype=float), r), dtype=float)
    if radius is not None:
        if not split.separable:
            raise UnsupportedOracleError("trust-region prox step needs a separable g")
        y = np.clip(y, x - radius, x + radius)
    return y


def q_matrix(config: SolverConfig, n: int) -> np.ndarray:
    policy = QPolicy(config.Q_policy)
    if policy == QPolicy.ZERO:
        Q = np.zeros((n, n))
    elif policy == QPolicy.SCALED_IDENTITY:
        Q = config.Q_delta * np.eye(n)
    else:
        Q = np.asarray(config.Q_matrix, dtype=float)
        if Q.shape != (n, n):
            raise ConfigError(f"solver.Q_matrix has shape {Q.shape}, problem needs ({n}, {n})")
    # 0 <= Q, ||Q|| <= q
    evals, V = np.linalg.eigh(0.5 * (Q + Q.T))
    evals = np.clip(evals, 0.0, config.q_bound)
    return (V * evals) @ V.T


# ------------------------------------------------------------------ driver

class TrustRegionBundle:
    def __init__(self, problem: Problem, C: Polyhedron, config: SolverConfig, oracle: Optional[Oracle] = None):
        self.problem = problem
        self.C = C
        self.config = config.validate()
        self.mode = SolverMode(config.mode)
        self.policy = BundlePolicy.for_dimension(problem.dim, config.max_planes, config.keep_newest)
        self.params = DownshiftParams(config.c_downshift)
        self.qp = TangentProgramSolver()
        self._oracle = oracle
        self.trace = SolveTrace()
        self.evaluations = 0
        self.inner_iterations = 0
        self._birth = 0
        self._fallback_warned = False

        if self.mode == SolverMode.PROX:
            if problem.split is None:
                raise UnsupportedOracleError("prox mode needs a problem with split structure g + h")
            if not C.is_unconstrained():
                raise ConfigError("prox mode runs on an unconstrained C only")
            self.prox_r = config.prox_r if config.prox_r is not None else 1.0

    @property
    def oracle(self) -> Oracle:
        if self._oracle is None:
            self._oracle = make_oracle(self.config.oracle_kind, self.problem, self.params,
                                       self.config.all_active_pieces)
        return self._oracle

    def _value(self, z: np.ndarray) -> float:
        self.evaluations += 1
        return evaluate_value(self.problem, z)

    def _next_birth(self) -> int:
        self._birth += 1
        return self._birth

    def _fallback_on(self, Q: np.ndarray) -> bool:
        positive = float(np.min(np.linalg.eigvalsh(Q))) > 0 if Q.size else False
        if not positive:
            if self.config.fallback_enabled and not self._fallback_warned:
                self._fallback_warned = True
                logging.warning("fallback_enabled ignored: Q is not positive definite")
            return False
        if self.config.fallback_enabled is not None:
            return bool(self.config.fallback_enabled)
        return self.config.trial_mode != TrialMode.DIRECT.value

    def initial_model(self, x: np.ndarray, fx: float, Q: np.ndarray,
                      previous: Optional[WorkingModel] = None) -> WorkingModel:
        """Exactness plane at x, plus recycled downshift planes of `previous`."""
        planes: List[Plane] = [self.oracle.exactness(x, birth=self._next_birth())]
        if previous is not None and self.config.recycle_enabled and self.oracle.recyclable:
            candidates = [p for p in previous.planes
                          if p.oracle in DOWNSHIFT_KINDS and p.trial is not None and p.tag != PlaneTag.AGGREGATE]
            candidates.sort(key=lambda p: p.birth, reverse=True)
            for p in candidates[:self.policy.max_planes - 1]:
                planes.append(recycle_cut(p, None, x, self.problem, self.params))
        return WorkingModel(x=x, fx=fx, planes=planes, Q=Q, q_bound=self.config.q_bound)

    def inner_loop(self, x: np.ndarray, fx: float, R_start: float, wm: WorkingModel,
                   j: int = 1, R_sharp: Optional[float] = None) -> InnerOutcome:
        cfg = self.config
        R = R_start
        R_sharp = R_start if R_sharp is None else R_sharp
        fallback = self._fallback_on(wm.Q)

        for k in range(1, cfg.max_inner + 1):
            self.inner_iterations += 1
            sol = self.qp.solve(wm, self.C, R)
            if not sol.optimal:
                raise TangentProgramError(f"tangent program ended {sol.status.value} at outer j={j}, inner k={k}")
            predicted = fx - sol.objective
            gap = decrease_estimate_gap(wm, sol, self.C)
            if gap < -DIAGNOSTIC_SLACK * (1.0 + abs(fx)):
                logging.warning("decrease estimate violated by %.3e at j=%d k=%d", -gap, j, k)
            record = TraceRecord(
                j=j, k=k, R=R, R_sharp=R_sharp, f=fx, t=sol.t, obj=sol.objective,
                gstar_norm=_inf_norm(aggregate_subgradient(wm, sol, self.C)),
                step_norm=_inf_norm(sol.y - x), planes=len(wm.planes), y=sol.y.copy(), decrease_gap=gap,
            )

            if predicted <= cfg.eps_stop * (1.0 + abs(fx)):
                record.kind = StepKind.CRITICAL
                self.trace.append(record)
                logging.debug("j=%d k=%d R=%.3e predicted=%.3e -> critical", j, k, R, predicted)
                return InnerOutcome("converged", x, fx, R, predicted=predicted, wm=wm)

            with _iteration_context(j, k):
                z = trial_step(sol, wm, cfg, k)
                fz = self._value(z)
            phi_z = second_order_value(wm, z)
            rho, accepted = acceptance_test(fx, fz, phi_z, cfg.gamma)
            record.z, record.fz, record.phi_z, record.rho = z, fz, phi_z, rho

            if accepted:
                record.kind = StepKind.SERIOUS
                self.trace.append(record)
                logging.debug("j=%d k=%d R=%.3e rho=%.4f -> serious", j, k, R, rho)
                return InnerOutcome("serious", z, fz, R, rho=rho, predicted=predicted, wm=wm)

            birth = self._next_birth()
            aggregate = aggregate_from_solution(wm, sol, self.C, birth=birth)
            with _iteration_context(j, k):
                cuts = self.oracle.cuts(z, x, birth=birth)
            wm_next = update_working_model(wm, cuts, aggregate, self.policy)
            phi_next_z = model_value(wm_next, z)
            rho_tilde, R_next = secondary_test_and_radius(fx, phi_next_z, phi_z, R, cfg.gamma_tilde)
            record.phi_next_z, record.rho_tilde = phi_next_z, rho_tilde
            record.kind = StepKind.NULL_HALVED if R_next < R else StepKind.NULL_FROZEN
            self.trace.append(record)
            logging.debug("j=%d k=%d R=%.3e rho=%.4f rho_tilde=%.4f -> %s",
                          j, k, R, rho, rho_tilde, record.kind.value)

            if fallback and _inf_norm(z - sol.y) > 0 and rho_tilde < cfg.gamma_tilde:
                # retry with y as the trial point; the cut at z stays in the model
                y = sol.y
                with _iteration_context(j, k):
                    fy = self._value(y)
                rho_y, accepted_y = acceptance_test(fx, fy, sol.objective, cfg.gamma)
                retry = replace(record, z=y.copy(), fz=fy, phi_z=sol.objective, rho=rho_y,
                                phi_next_z=NAN, rho_tilde=NAN)
                if accepted_y:
                    retry.kind = StepKind.SERIOUS
                    self.trace.append(retry)
                    logging.debug("j=%d k=%d fall-back accepted y, rho=%.4f", j, k, rho_y)
                    return InnerOutcome("serious", y.copy(), fy, R, rho=rho_y, predicted=predicted, wm=wm)
                with _iteration_context(j, k):
                    cuts_y = self.oracle.cuts(y, x, birth=birth)
                both = list(cuts) + list(cuts_y)
                if 2 + len(both) <= self.policy.max_planes:
                    wm_next = update_working_model(wm, both, aggregate, self.policy)
                else:
                    # z cuts compete with older planes for the remaining room
                    wm_next = update_working_model(wm_next, cuts_y, aggregate, self.policy)
                phi_next_y = model_value(wm_next, y)
                rho_tilde, R_next = secondary_test_and_radius(fx, phi_next_y, sol.objective, R, cfg.gamma_tilde)
                retry.phi_next_z, retry.rho_tilde = phi_next_y, rho_tilde
                retry.kind = StepKind.FALLBACK
                self.trace.append(retry)

            wm, R = wm_next, R_next

        logging.warning("inner loop hit max_inner=%d at outer j=%d", cfg.max_inner, j)
        return InnerOutcome("inner_cap", x, fx, R, wm=wm)

    def _prox_inner_loop(self, x: np.ndarray, fx: float, R_start: float, j: int, R_sharp: float) -> InnerOutcome:
        cfg = self.config
        split = self.problem.split
        r = self.prox_r
        hx = float(split.h_value(x))
        ghx = np.asarray(split.h_grad(x), dtype=float)

        def phi(y):
            return float(split.g_value(y)) + hx + float(ghx @ (y - x))

        def Phi(y):
            return phi(y) + float((y - x) @ (y - x)) / (2.0 * r)

        R = R_start
        for k in range(1, cfg.max_inner + 1):
            self.inner_iterations += 1
            y = prox_tangent_solve(self.problem, x, r, radius=R)
            obj = Phi(y)
            predicted = fx - obj
            record = TraceRecord(j=j, k=k, R=R, R_sharp=R_sharp, f=fx, t=phi(y), obj=obj,
                                 step_norm=_inf_norm(y - x), y=y.copy())
            if predicted <= cfg.eps_stop * (1.0 + abs(fx)):
                record.kind = StepKind.CRITICAL
                self.trace.append(record)
                return InnerOutcome("converged", x, fx, R, predicted=predicted)

            with _iteration_context(j, k):
                fz = self._value(y)
            rho, accepted = acceptance_test(fx, fz, obj, cfg.gamma)
            record.z, record.fz, record.phi_z, record.rho = y.copy(), fz, obj, rho
            if accepted:
                record.kind = StepKind.SERIOUS
                self.trace.append(record)
                return InnerOutcome("serious", y, fz, R, rho=rho, predicted=predicted)

            # phi is already tangent to g at every point, so rho_tilde >= 1
            rho_tilde, R_next = secondary_test_and_radius(fx, phi(y), obj, R, cfg.gamma_tilde)
            record.phi_next_z, record.rho_tilde = phi(y), rho_tilde
            record.kind = StepKind.NULL_HALVED if R_next < R else StepKind.NULL_FROZEN
            self.trace.append(record)
            R = R_next

        logging.warning("inner loop hit max_inner=%d at outer j=%d", cfg.max_inner, j)
        return InnerOutcome("inner_cap", x, fx, R)

    def solve(self, x0) -> SolveResult:
        cfg = self.config
        started = time.perf_counter()
        x = np.asarray(x0, dtype=float).reshape(-1)
        if x.shape != (self.problem.dim,):
            raise InfeasibleStartError(f"start point has shape {x.shape}, problem lives in R^{self.problem.dim}")
        if not self.C.contains(x):
            raise InfeasibleStartError(f"start point {np.array2string(x)} is not in C")
        with _iteration_context(1, 0):
            fx = self._value(x)

        logging.info("solve start: mode=%s n=%d f(x0)=%.10g", self.mode.value, x.shape[0], fx)
        R_sharp = cfg.R_initial
        status = SolveStatus.OUTER_CAP
        serious = 0
        wm: Optional[WorkingModel] = None
        if self.mode == SolverMode.BUNDLE:
            with _iteration_context(1, 0):
                wm = self.initial_model(x, fx, q_matrix(cfg, x.shape[0]))

        for j in range(1, cfg.max_outer + 1):
            if self.mode == SolverMode.PROX:
                outcome = self._prox_inner_loop(x, fx, R_sharp, j, R_sharp)
            else:
                outcome = self.inner_loop(x, fx, R_sharp, wm, j, R_sharp)

            if outcome.kind == "converged":
                status = SolveStatus.CRITICAL
                break
            if outcome.kind == "inner_cap":
                status = SolveStatus.INNER_CAP
                break

            bound = fx - cfg.gamma * cfg.theta * outcome.predicted + DESCENT_SLACK
            if outcome.fx > bound:
                logging.warning("descent chain violated at j=%d: f=%.12g > %.12g", j, outcome.fx, bound)
            serious += 1
            R_sharp = memory_radius_update(outcome.rho, outcome.R, cfg.Gamma)
            logging.info("serious step j=%d: f %.10g -> %.10g, rho=%.4f, R#=%.3e",
                         j, fx, outcome.fx, outcome.rho, R_sharp)
            x, fx = outcome.x, outcome.fx
            if self.mode == SolverMode.BUNDLE:
                with _iteration_context(j + 1, 0):
                    wm = self.initial_model(x, fx, q_matrix(cfg, x.shape[0]), previous=outcome.wm)

        if status == SolveStatus.OUTER_CAP:
            logging.warning("solve stopped at max_outer=%d", cfg.max_outer)
        wall = time.perf_counter() - started
        logging.info("solve end: status=%s f=%.12g serious=%d inner=%d", status.value, fx, serious,
                     self.inner_iterations)
        return SolveResult(x=x, f=fx, status=status, trace=self.trace, serious_steps=serious,
                           inner_iterations=self.inner_iterations, evaluations=self.evaluations, wall_time=wall)


def solve(prob: Problem, C: Polyhedron, x0, config: Optional[SolverConfig] = None,
          oracle: Optional[Oracle] = None) -> SolveResult:
    return TrustRegionBundle(prob, C, config or SolverConfig(), oracle=oracle).solve(x0)
