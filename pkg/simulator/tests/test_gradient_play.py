import math

import numpy as np
import pytest

from app.core.errors import ScheduleViolationError, UsageError
from app.services.comm_graph import build_metropolis_weights, mix, preset_graph
from app.services.game_model import build_quadratic_game, is_feasible, project_cluster
from app.services.gradient_estimator import GradientEstimate, build_query_point
from app.services.gradient_play import (
    EngineState,
    GradientPlayEngine,
    Schedule,
    consensus_error,
    run,
    schedule_diagnostics,
    validate_schedule,
)
from app.services.oracle import CombinationMode, CombinationPolicy
from tests.conftest import zero_game


def _complete_mixing(spec):
    return [build_metropolis_weights(preset_graph("complete", n)) for n in spec.sizes]


COURNOT_SCHEDULE = Schedule(alpha0=0.3, sigma0=45.0, a=1.0, b=1 / 3, t_offset=1000)


def test_default_exponents_are_valid(cournot_spec):
    assert validate_schedule(Schedule(alpha0=1.0, sigma0=1.0, a=1.0, b=1 / 3), cournot_spec).ok


def test_equal_exponents_violate_the_balance_constraint():
    report = validate_schedule(Schedule(alpha0=1.0, sigma0=1.0, a=1.0, b=1.0))
    assert "2a-minus-2b" in report.codes()
    assert any("2a - 2b > 1" in v.message for v in report.violations)


def test_step_exponent_must_exceed_one_half():
    report = validate_schedule(Schedule(alpha0=1.0, sigma0=1.0, a=0.5, b=0.4))
    assert "a-range" in report.codes()


def test_initial_radius_must_be_inside_every_safety_ball(cournot_spec):
    report = validate_schedule(Schedule(alpha0=1.0, sigma0=5.0, a=1.0, b=1 / 3), cournot_spec)
    assert report.codes() == ["sigma-radius"]
    assert validate_schedule(Schedule(alpha0=1.0, sigma0=4.99, a=1.0, b=1 / 3), cournot_spec).ok


def test_offset_shifts_the_radius_check(cournot_spec):
    assert validate_schedule(COURNOT_SCHEDULE, cournot_spec).ok
    assert not validate_schedule(Schedule(alpha0=0.3, sigma0=45.0, a=1.0, b=1 / 3, t_offset=1), cournot_spec).ok


def test_schedule_diagnostics_partial_sums():
    diag = schedule_diagnostics(Schedule(alpha0=2.0, sigma0=1.0, a=1.0, b=0.0), 3)
    assert diag.sum_alpha == pytest.approx(2 + 1 + 2 / 3)
    assert diag.sum_alpha_sq == pytest.approx(4 + 1 + 4 / 9)
    assert diag.sum_alpha_sigma == pytest.approx(diag.sum_alpha)
    assert diag.sum_alpha_sq_over_sigma_sq == pytest.approx(diag.sum_alpha_sq)


def test_consensus_error_values():
    assert consensus_error(np.ones((3, 2))) == 0.0
    assert consensus_error([[0.0, 0.0], [2.0, 0.0]]) == pytest.approx(1.0)
    with pytest.raises(UsageError):
        consensus_error(np.zeros((0, 2)))


def test_zero_step_keeps_identical_states(cournot_spec):
    schedule = Schedule(alpha0=0.0, sigma0=1.0, a=1.0, b=1 / 3)
    engine = GradientPlayEngine(cournot_spec, _complete_mixing(cournot_spec), schedule, seed=1)
    state = engine.initial_state()
    nxt = engine.step(state)
    for before, after in zip(state.states, nxt.states):
        np.testing.assert_allclose(after, before, atol=1e-12)


def test_single_agent_zero_cost_is_stationary():
    spec = zero_game([1])
    engine = GradientPlayEngine(spec, _complete_mixing(spec), Schedule(alpha0=1.0, sigma0=0.1), seed=0)
    state = engine.initial_state("explicit", [[0.3]])
    for _ in range(10):
        state = engine.step(state)
    assert state.states[0][0, 0] == 0.3


def test_one_step_replays_bit_identically(cournot_spec):
    def one_step():
        engine = GradientPlayEngine(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, seed=42)
        return engine.step(engine.initial_state())

    a, b = one_step(), one_step()
    for x, y in zip(a.states, b.states):
        np.testing.assert_array_equal(x, y)


def test_different_seeds_differ(cournot_spec):
    mixing = _complete_mixing(cournot_spec)
    a = GradientPlayEngine(cournot_spec, mixing, COURNOT_SCHEDULE, seed=1)
    b = GradientPlayEngine(cournot_spec, mixing, COURNOT_SCHEDULE, seed=2)
    assert not np.array_equal(a.step(a.initial_state()).states[0], b.step(b.initial_state()).states[0])


def test_step_trace_mixing_conserves_cluster_average(cournot_spec):
    mixing = [build_metropolis_weights(preset_graph("ring", 4)), build_metropolis_weights(preset_graph("star", 4))]
    engine = GradientPlayEngine(cournot_spec, mixing, COURNOT_SCHEDULE, seed=3)
    state = engine.initial_state("random")
    for _ in range(5):
        nxt = engine.step(state, with_trace=True)
        for block, mixed in zip(state.states, nxt.trace.mixed):
            np.testing.assert_allclose(mixed.mean(axis=0), block.mean(axis=0), atol=1e-12)
        for i, queries in enumerate(nxt.trace.queries):
            lower, upper = cournot_spec.cluster_bounds[i]
            assert np.all(queries >= lower) and np.all(queries <= upper)
        state = nxt


def test_step_rejects_radius_beyond_safety_ball(cournot_spec):
    engine = GradientPlayEngine(
        cournot_spec, _complete_mixing(cournot_spec), Schedule(alpha0=1.0, sigma0=6.0, a=1.0, b=0.0), seed=0
    )
    with pytest.raises(ScheduleViolationError):
        engine.step(engine.initial_state())


def test_run_rejects_invalid_schedule(cournot_spec):
    engine = GradientPlayEngine(
        cournot_spec, _complete_mixing(cournot_spec), Schedule(alpha0=1.0, sigma0=1.0, a=1.0, b=1.0), seed=0
    )
    with pytest.raises(ScheduleViolationError):
        engine.run(10)


def test_mixing_must_match_clusters(cournot_spec):
    with pytest.raises(UsageError):
        GradientPlayEngine(cournot_spec, _complete_mixing(cournot_spec)[:1], COURNOT_SCHEDULE)
    with pytest.raises(UsageError):
        GradientPlayEngine(
            cournot_spec, [build_metropolis_weights(preset_graph("complete", 3))] * 2, COURNOT_SCHEDULE
        )


def test_explicit_initial_state_must_be_feasible(cournot_spec):
    engine = GradientPlayEngine(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE)
    with pytest.raises(UsageError):
        engine.initial_state("explicit", [[1, 2, 3, 4], [1, 2, 3, 40]])
    with pytest.raises(UsageError):
        engine.initial_state("sideways")


def test_zero_iterations_records_initial_state(cournot_spec):
    record = run(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, None, T=0, seed=0)
    assert record.iterations == [0]
    np.testing.assert_array_equal(record.final_action, cournot_spec.midpoint())
    assert math.isnan(record.err_to_ne[0])


def test_recording_cadence_includes_final_state(cournot_spec):
    record = run(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, None, T=250, seed=0, record_every=100)
    assert record.iterations == [0, 100, 200, 250]
    assert len(record.weighted_consensus) == 2
    assert [b.shape for b in record.final_states] == [(4, 4), (4, 4)]


def test_agent_view_matches_joint_action(cournot_spec):
    engine = GradientPlayEngine(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, seed=5)
    state = engine.step(engine.initial_state())
    agents = state.agents()
    assert len(agents) == 8
    np.testing.assert_array_equal([a.action for a in agents], state.joint_action())


def test_fixed_agent_policy_runs(cournot_spec):
    policy = CombinationPolicy(mode=CombinationMode.FIXED_AGENT, fixed=(0, 3))
    record = run(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, policy, T=50, seed=0, record_every=10)
    assert record.policy == "fixed-agent"
    assert all(is_feasible(cournot_spec, x) for x in record.joint_actions)


def test_separable_game_converges_to_targets():
    targets = [[1.5, 0.5], [0.2, -0.3, 0.0]]
    spec = build_quadratic_game([[(0.0, 2.0)] * 2, [(-1.0, 1.0)] * 3], targets)
    mixing = [build_metropolis_weights(preset_graph("complete", 2)), build_metropolis_weights(preset_graph("path", 3))]
    schedule = Schedule(alpha0=1.0, sigma0=0.5, a=1.0, b=1 / 3)
    c = np.concatenate(targets)
    record = run(spec, mixing, schedule, None, T=20_000, seed=7, record_every=1000, reference=c)
    assert record.err_to_ne[-1] <= 0.1 * record.err_to_ne[0]
    assert np.linalg.norm(record.final_action - c) == pytest.approx(record.err_to_ne[-1])


def test_run_is_deterministic(cournot_spec):
    def go():
        return run(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, None, T=300, seed=9, record_every=50)

    a, b = go(), go()
    np.testing.assert_array_equal(a.trajectory(), b.trajectory())
    np.testing.assert_array_equal(a.consensus_array(), b.consensus_array())
    assert a.weighted_consensus == b.weighted_consensus


def test_trace_is_opt_in(cournot_spec):
    engine = GradientPlayEngine(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, seed=0)
    state = engine.initial_state()
    assert isinstance(state, EngineState)
    assert state.trace is None
    assert engine.step(state, with_trace=True).trace.alpha == pytest.approx(0.3 / 1000)


def test_step_uses_one_estimate_per_agent(cournot_spec):
    engine = GradientPlayEngine(cournot_spec, _complete_mixing(cournot_spec), COURNOT_SCHEDULE, seed=11)
    state = engine.initial_state("random")
    nxt = engine.step(state, with_trace=True)
    trace = nxt.trace
    for i, cluster in enumerate(cournot_spec.clusters):
        estimates = trace.estimates[i]
        assert len(estimates) == cluster.agent_count
        for j, est in enumerate(estimates):
            assert isinstance(est, GradientEstimate)
            assert est.sigma == trace.sigma
            assert est.oracle_value == trace.oracle_values[i][j]
            np.testing.assert_array_equal(est.d, (4 / est.sigma) * est.oracle_value * est.sample.direction)
            np.testing.assert_array_equal(
                trace.queries[i][j], build_query_point(state.states[i][j], est.sample, trace.sigma, cluster)
            )
        d = np.stack([est.d for est in estimates])
        expected = project_cluster(cluster, mix(engine.mixing[i], state.states[i]) - trace.alpha * d)
        np.testing.assert_array_equal(nxt.states[i], expected)
