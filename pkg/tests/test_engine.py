"""Protocol engine: updates, scheduling, crashes, traces, determinism."""

import json
import math

import numpy as np
import pytest

from crashlearn.engine import (AdversarySchedule, ConfigError, CrashEvent,
                               SimulationConfig, TraceInvariantError,
                               combine_log_beliefs, converged,
                               min_final_posterior, normalize_log_belief,
                               partial_update_belief, read_trace,
                               run_execution, update_belief, validate_trace,
                               write_trace)
from crashlearn.graphs import DirectedGraph

from conftest import make_config, standard_model, suite_configs
from oracles import bayes_log_posterior


# -- belief arithmetic ----------------------------------------------------------------

def test_combine_weights_sum_to_one_exactly():
    current = np.array([-0.5, -1.5])
    others = [np.array([-1.0, -2.0]), np.array([-3.0, -0.1])]
    lik = np.array([-0.2, -0.3])
    out = combine_log_beliefs(current, others, 2, lik)
    expected = (current + others[0] + others[1]) / 3.0 + lik
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)
    # quorum of zero keeps the prior untouched up to the likelihood term
    np.testing.assert_array_equal(combine_log_beliefs(current, [], 0, lik),
                                  current + lik)


def test_combine_arity_mismatch():
    with pytest.raises(ValueError):
        combine_log_beliefs(np.zeros(2), [np.zeros(2)], 2, np.zeros(2))


def test_normalize_log_belief():
    out = normalize_log_belief(np.array([0.0, 0.0]))
    np.testing.assert_allclose(out, [-math.log(2)] * 2, rtol=0, atol=1e-15)
    assert abs(np.logaddexp.reduce(out)) < 1e-15


def test_update_belief_hand_value():
    model = standard_model(1)
    prior = np.array([-math.log(2)] * 2)
    post = update_belief(prior, [], "a", model, 1, 0)
    # Bayes with likelihoods (.3, .7): posterior (.3, .7)
    np.testing.assert_allclose(np.exp(post), [0.3, 0.7], rtol=1e-15)


def test_partial_update_freezes_suffix():
    model = standard_model(1)
    prior = normalize_log_belief(np.array([-0.3, -2.0]))
    full_unnormalized = combine_log_beliefs(
        prior, [], 0, model.log_likelihoods(1, "a"))
    mixed = partial_update_belief(prior, [], "a", model, 1, 0, 1)
    expected = normalize_log_belief(np.array([full_unnormalized[0], prior[1]]))
    np.testing.assert_array_equal(mixed, expected)
    # partial_count == m reproduces the full update
    np.testing.assert_array_equal(
        partial_update_belief(prior, [], "a", model, 1, 0, 2),
        update_belief(prior, [], "a", model, 1, 0))


# -- configuration validation -----------------------------------------------------------

def test_config_validation_rejections():
    g = DirectedGraph.complete(3)
    ok = make_config(g, 1, iterations=10, seed=0)
    ok.validate()
    cases = [
        dict(f=5),                                     # exceeds min in-degree
        dict(f=-1),
        dict(theta_star="missing"),
        dict(iterations=0),
        dict(adversary=AdversarySchedule(mode="warp")),
        dict(adversary=AdversarySchedule(dmax=-2.0)),
        dict(adversary=AdversarySchedule(crash_plan=(
            CrashEvent(1, 2, "before_transmit"),
            CrashEvent(2, 3, "before_transmit")))),    # two crashes, f = 1
        dict(adversary=AdversarySchedule(crash_plan=(
            CrashEvent(9, 2, "before_transmit"),))),   # no such agent
        dict(adversary=AdversarySchedule(crash_plan=(
            CrashEvent(1, 99, "before_transmit"),))),  # beyond the horizon
        dict(adversary=AdversarySchedule(crash_plan=(
            CrashEvent(1, 2, "sideways"),))),
        dict(adversary=AdversarySchedule(crash_plan=(
            CrashEvent(1, 2, "mid_update"),))),        # needs partial_count
        dict(adversary=AdversarySchedule(crash_plan=(
            CrashEvent(1, 2, "mid_update", partial_count=7),))),
        dict(adversary=AdversarySchedule(crash_plan=(
            CrashEvent(1, 2, "before_transmit"),
            CrashEvent(1, 5, "after_update")))),       # same agent twice
    ]
    import dataclasses
    for overrides in cases:
        bad = dataclasses.replace(ok, **overrides)
        with pytest.raises(ConfigError):
            bad.validate()


def test_config_round_trip():
    config = suite_configs()["crash_mid"]
    again = SimulationConfig.from_dict(config.to_dict())
    assert again.to_dict() == config.to_dict()
    again.validate()


def test_delay_for_fixed_mapping():
    sched = AdversarySchedule(mode="fixed",
                              fixed_delays={(1, 2): 3.5, (2, 1): 0.25})
    assert sched.delay_for(1, 2) == 3.5
    assert sched.delay_for(2, 1) == 0.25
    with pytest.raises(KeyError):
        sched.delay_for(1, 3)                  # a mapping must cover the edge
    flat = AdversarySchedule(mode="fixed", fixed_delays=1.5)
    assert flat.delay_for(4, 2) == 1.5
    round_trip = AdversarySchedule.from_dict(sched.to_dict())
    assert round_trip.delay_for(1, 2) == 3.5


# -- single-agent exactness ---------------------------------------------------------------

def test_single_agent_matches_batch_bayes():
    config = make_config(DirectedGraph.from_edge_list(1, []), 0,
                         iterations=200, seed=9)
    trace = run_execution(config)
    rows = [config.model.log_likelihoods(1, trace.record(t, 1).signal)
            for t in range(1, 201)]
    oracle = bayes_log_posterior([-math.log(2)] * 2, rows)
    np.testing.assert_allclose(trace.record(200, 1).log_belief, oracle,
                               rtol=0, atol=1e-12)


# -- scheduling paths ----------------------------------------------------------------------

def test_zero_delay_equals_adversarial_on_crash_free_complete_graph():
    g = DirectedGraph.complete(4)
    base = make_config(g, 1, iterations=60, seed=17,
                       adversary=AdversarySchedule(mode="fixed",
                                                   fixed_delays=0.0))
    import dataclasses
    other = dataclasses.replace(
        base, adversary=AdversarySchedule(mode="adversarial_latest"))
    ta, tb = run_execution(base), run_execution(other)
    for t in range(1, 61):
        for agent in range(1, 5):
            ra, rb = ta.record(t, agent), tb.record(t, agent)
            assert ra.quorum == rb.quorum
            assert ra.signal == rb.signal
            np.testing.assert_array_equal(ra.log_belief, rb.log_belief)


def test_uniform_delays_still_complete_every_iteration():
    config = suite_configs()["crash_pre"]
    trace = run_execution(config)
    validate_trace(trace)
    # crashed agent 4 leaves; 1..3 always complete
    assert trace.final_alive == frozenset({1, 2, 3})
    for t in range(8, 241):
        assert trace.completed_at(t) == frozenset({1, 2, 3})


def test_determinism_bitwise():
    config = suite_configs()["crash_mid"]
    ta, tb = run_execution(config), run_execution(config)
    for t in range(1, config.iterations + 1):
        assert sorted(ta.records[t - 1]) == sorted(tb.records[t - 1])
        for agent in ta.records[t - 1]:
            np.testing.assert_array_equal(ta.record(t, agent).log_belief,
                                          tb.record(t, agent).log_belief)


def test_seed_changes_signals():
    g = DirectedGraph.complete(3)
    a = run_execution(make_config(g, 0, iterations=30, seed=1))
    b = run_execution(make_config(g, 0, iterations=30, seed=2))
    sig_a = [a.record(t, 1).signal for t in range(1, 31)]
    sig_b = [b.record(t, 1).signal for t in range(1, 31)]
    assert sig_a != sig_b


# -- crash semantics -------------------------------------------------------------------------

def test_crash_phases_and_alive_sets():
    g = DirectedGraph.complete(4)

    def run_with(phase, partial=None, t_crash=12):
        return run_execution(make_config(
            g, 1, iterations=20, seed=3,
            adversary=AdversarySchedule(
                mode="adversarial_latest",
                crash_plan=(CrashEvent(4, t_crash, phase, partial),))))

    pre = run_with("before_transmit")
    rec = pre.record(12, 4)
    assert not rec.completed and rec.crash_phase == "before_transmit"
    assert rec.quorum is None and rec.signal is None
    np.testing.assert_array_equal(rec.log_belief, pre.log_belief_before(12, 4))
    assert 4 in pre.alive_at_start(12)
    assert 4 not in pre.alive_at_start(13)
    assert 4 not in pre.transmitters_at(12)

    mid = run_with("mid_update", partial=1)
    rec = mid.record(12, 4)
    assert not rec.completed and rec.crash_phase == "mid_update"
    assert rec.quorum is not None and rec.signal is not None
    assert 4 in mid.transmitters_at(12)     # transmit happens before the crash
    assert 4 not in mid.alive_at_start(13)

    post = run_with("after_update")
    rec = post.record(12, 4)
    assert rec.completed and rec.crash_phase == "after_update"
    assert 4 in post.alive_at_start(12)
    assert 4 not in post.alive_at_start(13)

    for trace in (pre, mid, post):
        validate_trace(trace)
        assert trace.final_alive == frozenset({1, 2, 3})
        assert trace.crash_events_observed() == ((4, 12, trace.record(12, 4).crash_phase),)
        # no quorum ever cites the crashed agent once it stopped transmitting
        for t in range(13, 21):
            for agent in trace.records[t - 1]:
                quorum = trace.record(t, agent).quorum
                if quorum:
                    assert 4 not in quorum


def test_crashed_agent_has_no_records_after_crash():
    trace = run_execution(suite_configs()["crash_pre"])
    assert all(4 not in trace.records[t - 1] for t in range(8, 241))
    assert 4 in trace.records[7 - 1]


# -- trace serialization and validation --------------------------------------------------------

def test_trace_round_trip_is_byte_identical(tmp_path):
    config = suite_configs()["crash_mid"]
    trace = run_execution(config)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_trace(trace, p1)
    again = read_trace(p1)
    write_trace(again, p2)
    assert p1.read_bytes() == p2.read_bytes()
    validate_trace(again)
    assert again.final_alive == trace.final_alive
    for t in range(1, config.iterations + 1):
        for agent in trace.records[t - 1]:
            np.testing.assert_array_equal(trace.record(t, agent).log_belief,
                                          again.record(t, agent).log_belief)


def test_validate_trace_catches_tampering(tmp_path):
    config = suite_configs()["crash_mid"]
    trace = run_execution(config)
    path = tmp_path / "t.jsonl"
    write_trace(trace, path)
    lines = path.read_text().splitlines()

    def corrupt(mutate):
        rows = [json.loads(line) for line in lines]
        for row in rows[1:]:
            if mutate(row):
                break
        out = tmp_path / "bad.jsonl"
        out.write_text("\n".join(
            [lines[0]] + [json.dumps(r, sort_keys=True) for r in rows[1:]])
            + "\n")
        with pytest.raises(TraceInvariantError):
            validate_trace(read_trace(out))

    def break_normalization(row):
        if row.get("agent") == 1 and row.get("t") == 5:
            row["log_belief"] = [0.0, 0.0]
            return True
        return False

    def break_quorum(row):
        if row.get("agent") == 1 and row.get("t") == 5:
            row["quorum"] = [1, 2]          # self-citation is not a quorum
            return True
        return False

    def break_signal(row):
        if row.get("agent") == 2 and row.get("t") == 3:
            row["signal"] = "zzz"
            return True
        return False

    corrupt(break_normalization)
    corrupt(break_quorum)
    corrupt(break_signal)


def test_convergence_helpers():
    import dataclasses
    config = dataclasses.replace(suite_configs()["pair"], iterations=20)
    trace = run_execution(config)
    value = min_final_posterior(trace)
    assert 0.0 < value < 1.0      # short horizon: not yet saturated
    assert converged(trace, value)
    assert not converged(trace, min(1.0, value + 1e-9))
