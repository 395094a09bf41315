"""Agent execution trajectories: parsing, ledger reconciliation, truncation.

A trajectory file is a JSON array of step objects, 0-based and consecutive,
each carrying the agent's thought/action, the environment response and two
usage ledgers (per-step and accumulated).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .errors import (
    EmptyTrajectory,
    LedgerMismatch,
    MalformedDocument,
    NonContiguousSteps,
    SchemaViolation,
)

DEFAULT_COST_TOLERANCE = 1e-9   # USD
DEFAULT_TIME_TOLERANCE = 1e-6   # seconds

ELISION_MARKER = "…[truncated]…"


@dataclass(frozen=True)
class StepUsage:
    input_tokens: int
    output_tokens: int
    model: str
    cost: float
    llm_inference_time: float
    step_execution_time: float

    def __post_init__(self) -> None:
        for name in ("input_tokens", "output_tokens", "cost",
                     "llm_inference_time", "step_execution_time"):
            if getattr(self, name) < 0:
                raise SchemaViolation(f"step_usage.{name} must be non-negative")


@dataclass(frozen=True)
class AccumulatedUsage:
    accumulated_cost: float
    accumulated_time: float

    def __post_init__(self) -> None:
        if self.accumulated_cost < 0 or self.accumulated_time < 0:
            raise SchemaViolation("accumulated usage must be non-negative")


@dataclass(frozen=True)
class TrajectoryStep:
    step: int
    user_message: str | None
    agent_thought: str
    agent_action: str | None
    agent_name: str | None
    environment: str | None
    step_usage: StepUsage
    accumulated_usage: AccumulatedUsage
    # unknown fields kept for lossless re-serialization
    extras: tuple[tuple[str, object], ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[TrajectoryStep, ...]

    def __len__(self) -> int:
        return len(self.steps)


class Cut(enum.Enum):
    HEAD = "head"
    MIDDLE = "middle"
    TAIL = "tail"
    NONE = "none"


@dataclass(frozen=True)
class TruncationStrategy:
    trajectory_cut: Cut = Cut.NONE
    step_cut: Cut = Cut.NONE
    budget: int = 32_000  # characters

    def __post_init__(self) -> None:
        if self.budget <= 0:
            raise ValueError("budget must be positive")

    def with_budget(self, budget: int) -> "TruncationStrategy":
        return TruncationStrategy(self.trajectory_cut, self.step_cut, budget)


def _require(doc: dict, key: str, where: str) -> object:
    if key not in doc:
        raise SchemaViolation(f"{where}: missing field {key!r}")
    return doc[key]


def _number(doc: dict, key: str, where: str) -> float:
    value = _require(doc, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"{where}: field {key!r} must be a number")
    return float(value)


def _integer(doc: dict, key: str, where: str) -> int:
    value = _require(doc, key, where)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{where}: field {key!r} must be an integer")
    return value


def _opt_str(doc: dict, key: str, where: str) -> str | None:
    value = doc.get(key)
    if value is not None and not isinstance(value, str):
        raise SchemaViolation(f"{where}: field {key!r} must be a string or null")
    return value


_STEP_FIELDS = {"step", "user_message", "agent", "environment", "step_usage",
                "accumulated_usage"}


def parse_trajectory(raw_document: str) -> Trajectory:
    try:
        doc = json.loads(raw_document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(str(exc)) from exc
    if not isinstance(doc, list):
        raise SchemaViolation("trajectory document must be a JSON array")

    steps: list[TrajectoryStep] = []
    for position, item in enumerate(doc):
        if not isinstance(item, dict):
            raise SchemaViolation(f"step {position}: not an object")
        where = f"step {position}"
        index = _integer(item, "step", where)
        if index != position:
            raise NonContiguousSteps(
                f"step at position {position} has index {index}; "
                "indices must be 0-based and consecutive"
            )
        agent = _require(item, "agent", where)
        if not isinstance(agent, dict):
            raise SchemaViolation(f"{where}: agent must be an object")
        thought = _require(agent, "thought", f"{where}.agent")
        if not isinstance(thought, str):
            raise SchemaViolation(f"{where}: agent.thought must be a string")

        usage_doc = _require(item, "step_usage", where)
        if not isinstance(usage_doc, dict):
            raise SchemaViolation(f"{where}: step_usage must be an object")
        model = _require(usage_doc, "model", f"{where}.step_usage")
        if not isinstance(model, str):
            raise SchemaViolation(f"{where}: step_usage.model must be a string")
        usage = StepUsage(
            input_tokens=_integer(usage_doc, "input_tokens", f"{where}.step_usage"),
            output_tokens=_integer(usage_doc, "output_tokens", f"{where}.step_usage"),
            model=model,
            cost=_number(usage_doc, "cost", f"{where}.step_usage"),
            llm_inference_time=_number(usage_doc, "llm_inference_time", f"{where}.step_usage"),
            step_execution_time=_number(usage_doc, "step_execution_time", f"{where}.step_usage"),
        )

        acc_doc = _require(item, "accumulated_usage", where)
        if not isinstance(acc_doc, dict):
            raise SchemaViolation(f"{where}: accumulated_usage must be an object")
        accumulated = AccumulatedUsage(
            accumulated_cost=_number(acc_doc, "accumulated_cost", f"{where}.accumulated_usage"),
            accumulated_time=_number(acc_doc, "accumulated_time", f"{where}.accumulated_usage"),
        )

        extras = tuple((k, v) for k, v in item.items() if k not in _STEP_FIELDS)
        steps.append(
            TrajectoryStep(
                step=index,
                user_message=_opt_str(item, "user_message", where),
                agent_thought=thought,
                agent_action=_opt_str(agent, "action", where),
                agent_name=_opt_str(agent, "agent_name", where),
                environment=_opt_str(item, "environment", where),
                step_usage=usage,
                accumulated_usage=accumulated,
                extras=extras,
            )
        )

    for prev, cur in zip(steps, steps[1:]):
        if cur.accumulated_usage.accumulated_cost < prev.accumulated_usage.accumulated_cost:
            raise SchemaViolation(
                f"step {cur.step}: accumulated_cost decreases"
            )
        if cur.accumulated_usage.accumulated_time < prev.accumulated_usage.accumulated_time:
            raise SchemaViolation(
                f"step {cur.step}: accumulated_time decreases"
            )

    return Trajectory(steps=tuple(steps))


def serialize_trajectory(trajectory: Trajectory, indent: int = 4) -> str:
    doc = []
    for s in trajectory.steps:
        agent: dict[str, object] = {"thought": s.agent_thought, "action": s.agent_action}
        if s.agent_name is not None:
            agent["agent_name"] = s.agent_name
        item: dict[str, object] = {
            "step": s.step,
            "user_message": s.user_message,
            "agent": agent,
            "environment": s.environment,
            "step_usage": {
                "input_tokens": s.step_usage.input_tokens,
                "output_tokens": s.step_usage.output_tokens,
                "model": s.step_usage.model,
                "cost": s.step_usage.cost,
                "llm_inference_time": s.step_usage.llm_inference_time,
                "step_execution_time": s.step_usage.step_execution_time,
            },
            "accumulated_usage": {
                "accumulated_cost": s.accumulated_usage.accumulated_cost,
                "accumulated_time": s.accumulated_usage.accumulated_time,
            },
        }
        for key, value in s.extras:
            item[key] = value
        doc.append(item)
    return json.dumps(doc, indent=indent, ensure_ascii=False)


def reconcile_usage(
    trajectory: Trajectory,
    cost_tolerance: float = DEFAULT_COST_TOLERANCE,
    time_tolerance: float = DEFAULT_TIME_TOLERANCE,
) -> None:
    """Check the accumulated ledgers against running sums of step usage.

    Raises LedgerMismatch at the first offending step.
    """
    running_cost = 0.0
    running_time = 0.0
    for step in trajectory.steps:
        running_cost += step.step_usage.cost
        running_time += step.step_usage.step_execution_time
        found_cost = step.accumulated_usage.accumulated_cost
        if abs(found_cost - running_cost) > cost_tolerance:
            raise LedgerMismatch(step.step, "accumulated_cost", running_cost, found_cost)
        found_time = step.accumulated_usage.accumulated_time
        if abs(found_time - running_time) > time_tolerance:
            raise LedgerMismatch(step.step, "accumulated_time", running_time, found_time)
        # trust the recorded accumulator to avoid compounding float drift
        running_cost = found_cost
        running_time = found_time


def render_step(step: TrajectoryStep) -> str:
    parts = [f"[step {step.step}] thought: {step.agent_thought}"]
    if step.agent_action is not None:
        parts.append(f"action: {step.agent_action}")
    if step.environment is not None:
        parts.append(f"environment: {step.environment}")
    return "\n".join(parts)


def render_trajectory(trajectory: Trajectory) -> str:
    return "\n\n".join(render_step(s) for s in trajectory.steps)


def _cut_text(text: str, cut: Cut, allowance: int) -> str:
    """Cut characters from one region of ``text`` down to ``allowance`` chars."""
    if len(text) <= allowance:
        return text
    if allowance <= 0:
        return ""
    marker = ELISION_MARKER
    if allowance <= len(marker) + 2:
        # no room for a marker; hard slice the chosen region
        if cut is Cut.HEAD:
            return text[-allowance:]
        if cut is Cut.TAIL:
            return text[:allowance]
        head = allowance // 2
        return text[:head] + text[len(text) - (allowance - head):]
    room = allowance - len(marker)
    if cut is Cut.HEAD:
        return marker + text[-room:]
    if cut is Cut.TAIL:
        return text[:room] + marker
    head = room // 2
    return text[:head] + marker + text[len(text) - (room - head):]


def _select_steps(rendered: list[str], cut: Cut, budget: int) -> list[str]:
    """Drop whole steps from the chosen region until the joined text fits,
    keeping at least one step."""

    def joined_len(parts: list[str]) -> int:
        return sum(len(p) for p in parts) + 2 * max(0, len(parts) - 1)

    kept = list(rendered)
    while len(kept) > 1 and joined_len(kept) > budget:
        if cut is Cut.HEAD:
            kept.pop(0)
        elif cut is Cut.TAIL:
            kept.pop()
        else:  # MIDDLE
            kept.pop(len(kept) // 2)
    return kept


def truncate(trajectory: Trajectory, strategy: TruncationStrategy) -> str:
    """Render the trajectory to text and cut it down to ``strategy.budget`` chars.

    Whole steps are removed per ``trajectory_cut``; per-step character cuts
    follow per ``step_cut``. The output never exceeds the budget; when the
    full rendering already fits, it is returned unmodified.
    """
    budget = strategy.budget
    full = render_trajectory(trajectory)
    if len(full) <= budget:
        return full

    rendered = [render_step(s) for s in trajectory.steps]
    if strategy.trajectory_cut is not Cut.NONE:
        rendered = _select_steps(rendered, strategy.trajectory_cut, budget)

    text = "\n\n".join(rendered)
    if len(text) > budget and strategy.step_cut is not Cut.NONE:
        separators = 2 * max(0, len(rendered) - 1)
        allowance = max(1, (budget - separators) // max(1, len(rendered)))
        rendered = [_cut_text(part, strategy.step_cut, allowance) for part in rendered]
        text = "\n\n".join(rendered)

    # last-resort clamp so every strategy combination honors the budget
    if len(text) > budget:
        text = text[:budget]
    return text


def detect_self_termination(trajectory: Trajectory, time_limit: float) -> bool:
    """Heuristic: the agent finished on its own rather than crashing or
    running out the clock.

    True iff the final accumulated time is below 95% of the limit, the final
    environment text carries no error/traceback token, and the final step has
    a non-empty thought.
    """
    if not trajectory.steps:
        raise EmptyTrajectory("cannot analyze an empty trajectory")
    last = trajectory.steps[-1]
    if last.accumulated_usage.accumulated_time >= 0.95 * time_limit:
        return False
    if last.environment is not None:
        lowered = last.environment.lower()
        if "error" in lowered or "traceback" in lowered:
            return False
    return bool(last.agent_thought)
