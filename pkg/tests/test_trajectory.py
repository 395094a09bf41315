from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reqeval.errors import (
    EmptyTrajectory,
    LedgerMismatch,
    NonContiguousSteps,
    SchemaViolation,
)
from reqeval.trajectory import (
    Cut,
    Trajectory,
    TruncationStrategy,
    detect_self_termination,
    parse_trajectory,
    reconcile_usage,
    render_trajectory,
    serialize_trajectory,
    truncate,
)


def make_steps(costs, times=None, environment=None, thought="thinking"):
    times = times or [1.0] * len(costs)
    doc = []
    acc_cost = 0.0
    acc_time = 0.0
    for i, (cost, secs) in enumerate(zip(costs, times)):
        acc_cost += cost
        acc_time += secs
        doc.append({
            "step": i,
            "user_message": None,
            "agent": {"thought": thought, "action": f"act {i}"},
            "environment": environment,
            "step_usage": {
                "input_tokens": 100,
                "output_tokens": 10,
                "model": "test-model",
                "cost": cost,
                "llm_inference_time": secs / 2,
                "step_execution_time": secs,
            },
            "accumulated_usage": {
                "accumulated_cost": acc_cost,
                "accumulated_time": acc_time,
            },
        })
    return doc


def test_parse_sample_step_zero(fixtures):
    trajectory = parse_trajectory((fixtures / "trajectory_sample.json").read_text())
    step0 = trajectory.steps[0]
    assert step0.step_usage.input_tokens == 4331
    assert step0.step_usage.output_tokens == 220
    assert step0.step_usage.cost == 0.024955
    assert step0.agent_name is None  # optional in sample documents


def test_parse_empty_array():
    assert parse_trajectory("[]").steps == ()


def test_non_contiguous_steps():
    doc = make_steps([0.1, 0.1])
    doc[1]["step"] = 2
    with pytest.raises(NonContiguousSteps):
        parse_trajectory(json.dumps(doc))


def test_negative_cost_rejected():
    doc = make_steps([0.1])
    doc[0]["step_usage"]["cost"] = -0.5
    with pytest.raises(SchemaViolation):
        parse_trajectory(json.dumps(doc))


def test_round_trip_field_identical(fixtures):
    raw = (fixtures / "trajectory_sample.json").read_text()
    trajectory = parse_trajectory(raw)
    assert json.loads(serialize_trajectory(trajectory)) == json.loads(raw)
    # a second pass is byte-stable
    assert serialize_trajectory(parse_trajectory(serialize_trajectory(trajectory))) == \
        serialize_trajectory(trajectory)


def test_reconcile_sample_ledger(fixtures):
    trajectory = parse_trajectory((fixtures / "trajectory_sample.json").read_text())
    reconcile_usage(trajectory)  # must not raise
    assert abs(trajectory.steps[1].accumulated_usage.accumulated_cost - 0.04959) < 1e-9


def test_reconcile_single_step():
    trajectory = parse_trajectory(json.dumps(make_steps([0.42])))
    reconcile_usage(trajectory)


def test_reconcile_detects_perturbation():
    doc = make_steps([0.1, 0.2])
    doc[1]["accumulated_usage"]["accumulated_cost"] += 0.01
    trajectory = parse_trajectory(json.dumps(doc))
    with pytest.raises(LedgerMismatch) as info:
        reconcile_usage(trajectory, cost_tolerance=1e-6)
    assert info.value.step == 1
    assert info.value.field == "accumulated_cost"


def test_reconcile_accepts_exact_sums_rejects_offsets():
    rng = random.Random(11)
    for _ in range(20):
        costs = [round(rng.uniform(0.001, 0.2), 6) for _ in range(rng.randint(1, 8))]
        doc = make_steps(costs)
        trajectory = parse_trajectory(json.dumps(doc))
        reconcile_usage(trajectory)
        victim = rng.randrange(len(costs))
        doc[victim]["accumulated_usage"]["accumulated_cost"] += 1e-3
        try:
            perturbed = parse_trajectory(json.dumps(doc))
        except SchemaViolation:
            continue  # perturbation broke monotonicity; also a rejection
        with pytest.raises(LedgerMismatch):
            reconcile_usage(perturbed)


def test_truncate_under_budget_is_identity():
    trajectory = parse_trajectory(json.dumps(make_steps([0.1] * 3)))
    full = render_trajectory(trajectory)
    strategy = TruncationStrategy(Cut.HEAD, Cut.MIDDLE, budget=len(full) + 100)
    assert truncate(trajectory, strategy) == full


def test_truncate_head_keeps_suffix_steps():
    thought = "x" * 200
    doc = make_steps([0.1] * 5, thought=thought)
    trajectory = parse_trajectory(json.dumps(doc))
    per_step = len(render_trajectory(Trajectory(trajectory.steps[:1])))
    budget = 2 * per_step + 2  # room for the last two steps plus separator
    out = truncate(trajectory, TruncationStrategy(Cut.HEAD, Cut.NONE, budget))
    assert "[step 3]" in out and "[step 4]" in out
    assert "[step 0]" not in out
    assert len(out) <= budget


def test_truncate_step_middle_keeps_both_ends():
    thought = "A" * 500 + "B" * 500
    doc = make_steps([0.1], thought=thought)
    trajectory = parse_trajectory(json.dumps(doc))
    out = truncate(trajectory, TruncationStrategy(Cut.NONE, Cut.MIDDLE, 400))
    assert len(out) <= 400
    assert "…[truncated]…" in out
    rendered = render_trajectory(trajectory)
    marker_at = out.index("…[truncated]…")
    assert rendered.startswith(out[:marker_at])
    assert rendered.endswith(out[marker_at + len("…[truncated]…"):])


@settings(max_examples=200, deadline=None)
@given(
    n_steps=st.integers(0, 8),
    text_len=st.integers(0, 300),
    traj_cut=st.sampled_from(list(Cut)),
    step_cut=st.sampled_from(list(Cut)),
    budget=st.integers(1, 2000),
    seed=st.integers(0, 10_000),
)
def test_truncate_respects_budget(n_steps, text_len, traj_cut, step_cut, budget, seed):
    rng = random.Random(seed)
    thought = "".join(rng.choice("abcdef \n") for _ in range(text_len)) or "x"
    doc = make_steps([0.01] * n_steps, thought=thought)
    trajectory = parse_trajectory(json.dumps(doc))
    strategy = TruncationStrategy(traj_cut, step_cut, budget)
    out = truncate(trajectory, strategy)
    assert len(out) <= budget
    full = render_trajectory(trajectory)
    if len(full) <= budget:
        assert out == full


def test_self_termination_near_time_limit_is_false():
    doc = make_steps([0.1], times=[1799.0])
    trajectory = parse_trajectory(json.dumps(doc))
    assert detect_self_termination(trajectory, 1800.0) is False


def test_self_termination_error_token_is_false():
    doc = make_steps([0.1], times=[300.0],
                     environment="Traceback (most recent call last) ...")
    trajectory = parse_trajectory(json.dumps(doc))
    assert detect_self_termination(trajectory, 1800.0) is False


def test_self_termination_clean_run_is_true():
    doc = make_steps([0.1] * 3, times=[100.0] * 3, environment="done: wrote results")
    trajectory = parse_trajectory(json.dumps(doc))
    assert detect_self_termination(trajectory, 1800.0) is True


def test_self_termination_empty_trajectory():
    with pytest.raises(EmptyTrajectory):
        detect_self_termination(parse_trajectory("[]"), 1800.0)
