import dataclasses

import numpy as np
import pytest

from bundletr.config import SolverConfig
from bundletr.driver import (
    SolveStatus,
    StepKind,
    TrustRegionBundle,
    acceptance_test,
    memory_radius_update,
    prox_tangent_solve,
    q_matrix,
    secondary_test_and_radius,
    solve,
    trial_step,
)
from bundletr.errors import ConfigError, EvaluationError, InfeasibleStartError, UnsupportedOracleError
from bundletr.model import (
    Plane,
    PlaneTag,
    Polyhedron,
    WorkingModel,
    model_value,
    plane_value,
    second_order_value,
    update_working_model,
)
from bundletr.oracles import Problem, Split
from bundletr.problems import distance_squared_dc, l1_quadratic, max_quad
from bundletr.tangent import aggregate_from_solution, solve_tangent_program


# ------------------------------------------------------------- step pieces

def test_acceptance_test_worked_example():
    rho, accepted = acceptance_test(0.0, -0.25, -1.0, 0.5)
    assert rho == 0.25
    assert not accepted
    assert acceptance_test(0.0, -1.0, -1.0, 0.5) == (1.0, True)
    assert acceptance_test(0.0, 0.0, -1.0, 0.1) == (0.0, False)


def test_acceptance_test_needs_positive_predicted_decrease():
    with pytest.raises(ValueError):
        acceptance_test(0.0, -1.0, 0.0, 0.5)
    with pytest.raises(ValueError):
        secondary_test_and_radius(0.0, -1.0, 0.5, 1.0, 0.5)


def test_secondary_test_freezes_or_halves():
    assert secondary_test_and_radius(0.0, -0.25, -1.0, 1.0, 0.75) == (0.25, 1.0)
    assert secondary_test_and_radius(0.0, 0.0, -1.0, 1.0, 0.75) == (1.0, 0.5)


def test_memory_radius_doubles_on_good_agreement():
    assert memory_radius_update(0.1, 1.0, 0.6) == 1.0
    assert memory_radius_update(1.0, 1.0, 0.6) == 2.0
    assert memory_radius_update(0.6, 1.5, 0.6) == 3.0


def _exactness_model(Q):
    return WorkingModel(x=np.zeros(2), fx=0.0, planes=[Plane(a=0.0, g=np.array([-1.0, 0.0]), tag=PlaneTag.EXACTNESS)],
                        Q=Q)


def test_trial_step_modes():
    wm = _exactness_model(0.5 * np.eye(2))
    sol = solve_tangent_program(wm, Polyhedron.unconstrained(2), 1.0)
    direct = trial_step(sol, wm, SolverConfig())
    np.testing.assert_array_equal(direct, sol.y)

    cfg = SolverConfig(trial_mode="backtrack", backtrack_alpha=0.1, theta=0.1)
    z = trial_step(sol, wm, cfg)
    np.testing.assert_allclose(z, 0.1 * sol.y)
    assert wm.fx - second_order_value(wm, z) >= cfg.theta * (wm.fx - sol.objective)

    strong = trial_step(sol, wm, SolverConfig(trial_mode="strong_nu", nu0=0.0), k=3)
    np.testing.assert_allclose(strong, sol.y)
    loose = trial_step(sol, wm, SolverConfig(trial_mode="strong_nu", nu0=1.0, backtrack_alpha=0.5), k=2)
    assert np.max(np.abs(loose - sol.y)) <= 0.25 + 1e-12


def test_prox_tangent_solve_soft_thresholds():
    named = l1_quadratic(b=2.0, r=1.0)
    np.testing.assert_allclose(prox_tangent_solve(named.problem, [0.0], 1.0), [1.0])
    np.testing.assert_allclose(prox_tangent_solve(named.problem, [0.0], 1.0, radius=0.5), [0.5])


def test_prox_tangent_solve_without_g_is_gradient_step():
    split = Split(g_value=lambda y: 0.0, g_prox=lambda u, r: u,
                  h_value=lambda y: float(y @ y), h_grad=lambda y: 2.0 * y)
    prob = Problem(dim=2, value=lambda y: float(y @ y), subgradient=lambda y: 2.0 * y, split=split)
    np.testing.assert_allclose(prox_tangent_solve(prob, [1.0, -2.0], 0.25), [0.5, -1.0])


def test_prox_tangent_solve_needs_split(quadratic):
    with pytest.raises(UnsupportedOracleError):
        prox_tangent_solve(quadratic.problem, [0.0, 0.0], 1.0)


def test_q_matrix_projection():
    np.testing.assert_array_equal(q_matrix(SolverConfig(Q_policy="zero"), 2), np.zeros((2, 2)))
    np.testing.assert_allclose(q_matrix(SolverConfig(Q_delta=0.5), 2), 0.5 * np.eye(2))
    cfg = SolverConfig(Q_policy="fixed", Q_matrix=[[2000.0, 0.0], [0.0, -1.0]])
    np.testing.assert_allclose(q_matrix(cfg, 2), np.diag([1000.0, 0.0]))
    with pytest.raises(ConfigError):
        q_matrix(cfg, 3)


# ------------------------------------------------------ worked example runs

def _check_descent_chain(result, cfg):
    serious = result.trace.serious()
    for r in serious:
        assert r.fz <= r.f - cfg.gamma * cfg.theta * (r.f - r.obj) + 1e-10
    for j in {r.j for r in result.trace}:
        radii = [r.R for r in result.trace.inner(j)]
        assert all(b <= a for a, b in zip(radii, radii[1:]))


def _check_decrease_estimate(result):
    for r in result.trace:
        assert r.decrease_gap >= -1e-8


def test_oscillation_without_curvature(quadratic, oscillation_config):
    result = solve(quadratic.problem, quadratic.C, quadratic.x0, oscillation_config)
    assert result.status == SolveStatus.INNER_CAP
    assert result.serious_steps == 0
    records = list(result.trace)
    assert len(records) == 12
    first = records[0]
    assert first.y[0] == pytest.approx(1.0)
    assert first.t == pytest.approx(-1.0)
    assert first.rho == pytest.approx(0.25)
    assert first.rho_tilde == pytest.approx(0.25)
    signs = []
    for r in records:
        assert r.kind == StepKind.NULL_FROZEN
        assert r.R == 1.0
        assert r.t == pytest.approx(-1.0)
        assert r.z[0] == pytest.approx(1.0)
        assert abs(r.z[1]) == pytest.approx(1.0)
        assert r.rho == pytest.approx(0.25)
        signs.append(np.sign(r.z[1]))
    assert all(a == -b for a, b in zip(signs, signs[1:]))


def test_curvature_and_aggregation_repair_the_oscillation(quadratic, repaired_config):
    result = solve(quadratic.problem, quadratic.C, quadratic.x0, repaired_config)
    assert result.status == SolveStatus.CRITICAL
    assert result.serious_steps <= 200
    np.testing.assert_allclose(result.x, [1.0, 0.0], atol=1e-6)
    assert result.f == pytest.approx(-0.5, abs=1e-10)
    _check_descent_chain(result, repaired_config)
    _check_decrease_estimate(result)


def test_direct_trials_with_curvature_converge(quadratic):
    cfg = SolverConfig(gamma=0.5, gamma_tilde=0.75, Gamma=0.8, eps_stop=1e-14)
    result = solve(quadratic.problem, quadratic.C, quadratic.x0, cfg)
    assert result.status == SolveStatus.CRITICAL
    np.testing.assert_allclose(result.x, [1.0, 0.0], atol=1e-6)
    _check_descent_chain(result, cfg)
    _check_decrease_estimate(result)


@pytest.mark.parametrize("kind", ["downshift", "double_downshift", "standard", "natural",
                                  "standard_or_double_downshift"])
def test_smooth_quadratic_converges_with_every_oracle(quadratic, kind):
    cfg = SolverConfig(oracle_kind=kind, eps_stop=1e-14)
    result = solve(quadratic.problem, quadratic.C, np.array([-2.0, 3.0]), cfg)
    assert result.status == SolveStatus.CRITICAL
    np.testing.assert_allclose(result.x, [1.0, 0.0], atol=1e-6)


def test_null_steps_satisfy_rho_tilde_decomposition(quadratic, oscillation_config):
    result = solve(quadratic.problem, quadratic.C, quadratic.x0, oscillation_config)
    for r in result.trace:
        if r.kind in (StepKind.NULL_FROZEN, StepKind.NULL_HALVED):
            rhs = r.rho + (r.fz - r.phi_next_z) / (r.f - r.phi_z)
            assert r.rho_tilde == pytest.approx(rhs, abs=1e-10)


def test_max_quad_reaches_grid_reference():
    named = max_quad(seed=0)
    cfg = SolverConfig(eps_stop=1e-12)
    result = solve(named.problem, named.C, named.x0, cfg)
    assert result.f - named.reference_f <= 1e-5
    assert result.f >= named.reference_f - 1e-9
    _check_descent_chain(result, cfg)
    _check_decrease_estimate(result)


def test_prox_mode_first_serious_step_is_soft_threshold():
    named = l1_quadratic(b=2.0, r=1.0)
    cfg = SolverConfig(mode="prox", prox_r=1.0, R_initial=1.0, eps_stop=1e-12)
    result = solve(named.problem, named.C, named.x0, cfg)
    assert result.status == SolveStatus.CRITICAL
    first = result.trace.serious()[0]
    assert first.z[0] == pytest.approx(1.0, abs=1e-8)
    assert result.x[0] == pytest.approx(1.0, abs=1e-8)


def test_prox_mode_halves_radius_on_every_null_step():
    named = l1_quadratic(b=3.0, r=4.0)
    cfg = SolverConfig(mode="prox", prox_r=4.0, R_initial=10.0, eps_stop=1e-12)
    result = solve(named.problem, named.C, named.x0, cfg)
    nulls = [r for r in result.trace if r.kind in (StepKind.NULL_FROZEN, StepKind.NULL_HALVED)]
    assert len(nulls) >= 2
    assert all(r.rho_tilde >= 1.0 and r.kind == StepKind.NULL_HALVED for r in nulls)
    first_loop = result.trace.inner(1)
    assert [r.R for r in first_loop] == [10.0, 5.0, 2.5]
    assert first_loop[-1].kind == StepKind.SERIOUS
    np.testing.assert_allclose(result.x, [2.0], atol=1e-3)


def test_prox_mode_needs_unconstrained_set():
    named = l1_quadratic()
    with pytest.raises(ConfigError):
        TrustRegionBundle(named.problem, Polyhedron.box([-1.0], [1.0]), SolverConfig(mode="prox"))


def test_negative_distance_moves_away_from_midpoint():
    named = distance_squared_dc(sign=-1)
    result = solve(named.problem, named.C, named.x0, SolverConfig())
    assert result.x[0] > named.x0[0]
    assert result.f < named.problem.value(named.x0)
    assert named.C.contains(result.x)


def test_infeasible_start_is_rejected():
    named = distance_squared_dc(sign=1)
    with pytest.raises(InfeasibleStartError):
        solve(named.problem, named.C, np.array([5.0]), SolverConfig())


def test_evaluation_failure_carries_iteration():
    prob = Problem(dim=1, value=lambda x: float(x[0] ** 2) if x[0] >= 0 else float("nan"),
                   subgradient=lambda x: 2.0 * x)
    with pytest.raises(EvaluationError) as info:
        solve(prob, Polyhedron.unconstrained(1), np.array([0.4]), SolverConfig())
    assert info.value.outer == 1
    assert info.value.inner == 1


def test_recycled_planes_stay_below_new_value(quadratic):
    cfg = SolverConfig()
    solver = TrustRegionBundle(quadratic.problem, quadratic.C, cfg)
    x0 = quadratic.x0
    wm = solver.initial_model(x0, 0.0, q_matrix(cfg, 2))
    sol = solve_tangent_program(wm, quadratic.C, 1.0)
    cuts = solver.oracle.cuts(np.array([1.0, 1.0]), x0, birth=5)
    agg = Plane(a=0.0, g=np.array([-1.0, 0.0]), tag=PlaneTag.AGGREGATE, birth=5)
    wm = update_working_model(wm, cuts, agg, solver.policy)
    x_new = sol.y
    f_new = quadratic.problem.value(x_new)
    nxt = solver.initial_model(x_new, f_new, q_matrix(cfg, 2), previous=wm)
    assert nxt.planes[0].tag == PlaneTag.EXACTNESS
    assert {p.tag for p in nxt.planes[1:]} == {PlaneTag.RECYCLED}
    assert len(nxt.planes) == 3
    assert all(p.a <= f_new for p in nxt.planes)
    nxt.validate()


def test_recycling_can_be_switched_off(quadratic):
    cfg = dataclasses.replace(SolverConfig(), recycle_enabled=False)
    solver = TrustRegionBundle(quadratic.problem, quadratic.C, cfg)
    wm = solver.initial_model(quadratic.x0, 0.0, q_matrix(cfg, 2))
    nxt = solver.initial_model(np.array([1.0, 0.0]), -0.5, q_matrix(cfg, 2), previous=wm)
    assert len(nxt.planes) == 1


# ------------------------------------------------------------------ fall-back

def _recording_solver(named, cfg):
    solver = TrustRegionBundle(named.problem, named.C, cfg)
    models = []
    solve_qp = solver.qp.solve

    def recording(wm, C, R):
        models.append(wm)
        return solve_qp(wm, C, R)

    solver.qp.solve = recording
    return solver, models


def _has_cut_at(wm, point):
    return any(p.tag == PlaneTag.CUT and p.trial is not None and np.array_equal(p.trial, point)
               for p in wm.planes)


def test_fallback_keeps_cuts_at_rejected_trial_and_at_y():
    cfg = SolverConfig(trial_mode="backtrack", backtrack_alpha=0.1, fallback_enabled=True, eps_stop=1e-10)
    fallbacks = 0
    for seed in range(4):
        named = max_quad(seed=seed)
        solver, models = _recording_solver(named, cfg)
        result = solver.solve(named.x0)
        records = list(result.trace)
        keys = list(dict.fromkeys((r.j, r.k) for r in records))
        assert len(keys) == len(models)
        model_at = dict(zip(keys, models))
        for i, r in enumerate(records):
            if r.kind != StepKind.FALLBACK:
                continue
            fallbacks += 1
            rejected = records[i - 1]
            assert (rejected.j, rejected.k) == (r.j, r.k)
            assert rejected.kind in (StepKind.NULL_FROZEN, StepKind.NULL_HALVED)
            np.testing.assert_array_equal(r.z, rejected.y)
            nxt = model_at.get((r.j, r.k + 1))
            if nxt is None:
                continue
            assert _has_cut_at(nxt, rejected.z)
            assert _has_cut_at(nxt, r.z)
        _check_descent_chain(result, cfg)
    assert fallbacks > 0


def test_fallback_flag_needs_positive_definite_q(caplog):
    named = max_quad(seed=0)
    cfg = SolverConfig(trial_mode="backtrack", backtrack_alpha=0.1, fallback_enabled=True, Q_policy="zero",
                       max_outer=20, max_inner=50)
    result = solve(named.problem, named.C, named.x0, cfg)
    assert all(r.kind != StepKind.FALLBACK for r in result.trace)
    assert "not positive definite" in caplog.text


def test_fallback_defaults_follow_q_and_trial_mode(quadratic):
    Q = 0.5 * np.eye(2)
    on = TrustRegionBundle(quadratic.problem, quadratic.C, SolverConfig(trial_mode="backtrack"))
    assert on._fallback_on(Q)
    assert not on._fallback_on(np.zeros((2, 2)))
    direct = TrustRegionBundle(quadratic.problem, quadratic.C, SolverConfig())
    assert not direct._fallback_on(Q)


# ---------------------------------------------------------- null-step chains

@pytest.mark.parametrize("build", [lambda: max_quad(seed=0), lambda: max_quad(seed=1),
                                   lambda: distance_squared_dc(sign=-1)])
def test_tangent_objective_rises_over_frozen_null_steps(build):
    named = build()
    cfg = SolverConfig(eps_stop=1e-12)
    result = solve(named.problem, named.C, named.x0, cfg)
    for j in {r.j for r in result.trace}:
        records = result.trace.inner(j)
        for r in records:
            assert r.obj <= r.f + 1e-12 * (1.0 + abs(r.f))
        for a, b in zip(records, records[1:]):
            if a.kind == StepKind.NULL_FROZEN:
                assert b.R == a.R
                assert b.obj >= a.obj - 1e-10 * (1.0 + abs(a.obj))


def test_model_update_dominates_new_cuts_at_trial(rng):
    named = max_quad(seed=0)
    cfg = SolverConfig(max_planes=4)
    solver = TrustRegionBundle(named.problem, named.C, cfg)
    x = named.x0
    wm = solver.initial_model(x, named.problem.value(x), q_matrix(cfg, 2))
    for birth in range(2, 40):
        sol = solve_tangent_program(wm, named.C, 1.0)
        z = x + rng.uniform(-1.0, 1.0, 2)
        cuts = solver.oracle.cuts(z, x, birth=birth)
        wm = update_working_model(wm, cuts, aggregate_from_solution(wm, sol, named.C, birth=birth), solver.policy)
        assert len(wm.planes) <= 4
        for c in cuts:
            assert model_value(wm, z) >= plane_value(c, z, x)
        wm.validate(tol=1e-8)
