"""Aggregate statistics over verdicts: requirements met, alignment, shift,
agreement, PR curves, and cost/time savings."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import (
    EmptyInput,
    EmptyVector,
    FewerThanTwoJudges,
    KeyMismatch,
    KeyWithoutTask,
    ZeroBaseline,
)
from .tasks import Task, ancestors

# a requirement key is (task name, requirement_id)
Key = tuple[str, int]


@dataclass(frozen=True)
class VerdictVector:
    entries: dict[Key, bool]

    def keys(self) -> set[Key]:
        return set(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class VerdictMatrix:
    judges: list[str] = field(default_factory=list)
    vectors: dict[str, VerdictVector] = field(default_factory=dict)

    def add(self, judge: str, vector: VerdictVector) -> None:
        if self.vectors:
            reference = next(iter(self.vectors.values()))
            if vector.keys() != reference.keys():
                raise KeyMismatch(f"judge {judge!r} covers a different key set")
        if judge not in self.judges:
            self.judges.append(judge)
        self.vectors[judge] = vector


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def requirements_met_independent(v: VerdictVector) -> float:
    """Fraction of requirements judged satisfied, ignoring dependencies."""
    if not v.entries:
        raise EmptyVector("verdict vector is empty")
    return sum(v.entries.values()) / len(v.entries)


def _check_tasks_cover(tasks: list[Task], v: VerdictVector) -> dict[str, Task]:
    by_name = {t.name: t for t in tasks}
    for task_name, rid in v.entries:
        task = by_name.get(task_name)
        if task is None or rid >= len(task.requirements):
            raise KeyWithoutTask(f"no task definition for key ({task_name!r}, {rid})")
    return by_name


def requirements_met_dependent(tasks: list[Task], v: VerdictVector) -> float:
    """Fraction of requirements met under the dependency rule: a requirement
    counts only when it and every ancestor in its prerequisite DAG are
    satisfied."""
    if not v.entries:
        raise EmptyVector("verdict vector is empty")
    by_name = _check_tasks_cover(tasks, v)
    met = 0
    for (task_name, rid), value in v.entries.items():
        if not value:
            continue
        task = by_name[task_name]
        if all(
            v.entries.get((task_name, ancestor), False)
            for ancestor in ancestors(task, rid)
        ):
            met += 1
    return met / len(v.entries)


def task_solve_rate(tasks: list[Task], v: VerdictVector) -> float:
    """Fraction of tasks whose every requirement is met under the dependent
    rule (equivalently: every requirement judged satisfied)."""
    if not v.entries:
        raise EmptyVector("verdict vector is empty")
    by_name = _check_tasks_cover(tasks, v)
    names = {task_name for task_name, _ in v.entries}
    solved = 0
    for name in names:
        task = by_name[name]
        if all(
            v.entries.get((name, r.requirement_id), False)
            for r in task.requirements
        ):
            solved += 1
    return solved / len(names)


def alignment_rate(judge: VerdictVector, consensus: VerdictVector) -> float:
    """Fraction of per-requirement verdicts matching the consensus."""
    if judge.keys() != consensus.keys():
        raise KeyMismatch("vectors cover different key sets")
    if not judge.entries:
        raise EmptyVector("verdict vector is empty")
    matches = sum(
        judge.entries[key] == consensus.entries[key] for key in judge.entries
    )
    return matches / len(judge.entries)


def disagreement_rate(a: VerdictVector, b: VerdictVector) -> float:
    return 1.0 - alignment_rate(a, b)


def judge_shift(judge_metric: float, reference_metric: float) -> float:
    """Absolute deviation between two fractions, in percentage points."""
    return abs(judge_metric - reference_metric) * 100.0


def majority_vote(m: VerdictMatrix) -> VerdictVector:
    """Per-key majority across judges; even-split ties resolve to False."""
    if len(m.judges) < 2:
        raise FewerThanTwoJudges("majority vote needs at least two judges")
    reference = m.vectors[m.judges[0]]
    entries = {}
    for key in reference.entries:
        yes = sum(m.vectors[j].entries[key] for j in m.judges)
        entries[key] = yes * 2 > len(m.judges)
    return VerdictVector(entries=entries)


def pr_curve(
    confidences: list[tuple[float, bool]],
) -> tuple[list[PRPoint], float]:
    """Precision-recall curve over (confidence, ground truth) pairs.

    Thresholds are the distinct confidences in descending order; an item is
    predicted positive when its confidence is >= the threshold. Precision at
    zero predicted positives is 1.0 by convention. Average precision is the
    step-wise sum of precision times recall increments.
    """
    if not confidences:
        raise EmptyInput("pr_curve needs at least one item")
    total_positive = sum(1 for _, truth in confidences if truth)
    thresholds = sorted({conf for conf, _ in confidences}, reverse=True)

    points: list[PRPoint] = []
    average_precision = 0.0
    previous_recall = 0.0
    for threshold in thresholds:
        predicted = [(conf, truth) for conf, truth in confidences if conf >= threshold]
        true_positive = sum(1 for _, truth in predicted if truth)
        precision = true_positive / len(predicted) if predicted else 1.0
        recall = true_positive / total_positive if total_positive else 0.0
        points.append(PRPoint(threshold=threshold, precision=precision, recall=recall))
        average_precision += precision * (recall - previous_recall)
        previous_recall = recall
    return points, average_precision


def savings(
    ai_cost: float | None = None,
    human_cost: float | None = None,
    ai_time: float | None = None,
    human_time: float | None = None,
) -> tuple[float | None, float | None]:
    """Percent cost and time saved relative to the human baseline."""

    def saved(ai: float | None, human: float | None) -> float | None:
        if ai is None or human is None:
            return None
        if human <= 0:
            raise ZeroBaseline("human baseline must be positive")
        return 100.0 * (1.0 - ai / human)

    return saved(ai_cost, human_cost), saved(ai_time, human_time)


# --- delimited import/export ---

_TRUE_WORDS = {"true", "1", "yes", "satisfied", "t"}
_FALSE_WORDS = {"false", "0", "no", "unsatisfied", "f"}


def parse_matrix_csv(text: str) -> VerdictMatrix:
    """Read a delimited verdict table with columns judge, task,
    requirement_id, verdict."""
    matrix = VerdictMatrix()
    per_judge: dict[str, dict[Key, bool]] = {}
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if rows and rows[0][0].strip().lower() == "judge":
        rows = rows[1:]
    for row in rows:
        if len(row) < 4:
            raise KeyMismatch(f"malformed verdict row: {row!r}")
        judge, task_name, rid_raw, verdict_raw = (cell.strip() for cell in row[:4])
        word = verdict_raw.lower()
        if word in _TRUE_WORDS:
            value = True
        elif word in _FALSE_WORDS:
            value = False
        else:
            raise KeyMismatch(f"unparseable verdict value: {verdict_raw!r}")
        per_judge.setdefault(judge, {})[(task_name, int(rid_raw))] = value
    for judge, entries in per_judge.items():
        matrix.add(judge, VerdictVector(entries=entries))
    return matrix


def vector_to_csv(judge: str, vector: VerdictVector) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["judge", "task", "requirement_id", "verdict"])
    for (task_name, rid), value in sorted(vector.entries.items()):
        writer.writerow([judge, task_name, rid, "true" if value else "false"])
    return out.getvalue()


def pr_points_to_csv(points: list[PRPoint]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["threshold", "precision", "recall"])
    for point in points:
        writer.writerow([point.threshold, point.precision, point.recall])
    return out.getvalue()
