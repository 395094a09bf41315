"""Task documents: a user query plus a DAG of requirements and optional preferences.

A task file is a JSON object with fields ``name``, ``query``, ``tags``,
``requirements``, ``preferences`` and the three auxiliary boolean flags.
Requirement ids are 0-based list positions and prerequisites reference other
requirement ids, forming a directed acyclic graph.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .errors import (
    CycleDetected,
    MalformedDocument,
    SchemaViolation,
    UnknownCategory,
    UnknownPrerequisite,
)


class Category(enum.Enum):
    DATASET_OR_ENVIRONMENT = "Dataset or Environment"
    DATA_PRE_POST_PROCESSING = "Data preprocessing and postprocessing"
    MACHINE_LEARNING_METHOD = "Machine Learning Method"
    SAVE_TRAINED_MODEL = "Save Trained Model"
    PERFORMANCE_METRICS = "Performance Metrics"
    HUMAN_COMPUTER_INTERACTION = "Human Computer Interaction"
    VISUALIZATION = "Visualization"
    OTHER = "Other"

    @classmethod
    def from_string(cls, raw: str) -> "Category":
        # category names match case-insensitively
        folded = raw.strip().casefold()
        for member in cls:
            if member.value.casefold() == folded:
                return member
        raise UnknownCategory(f"unknown requirement category: {raw!r}")


@dataclass(frozen=True)
class Requirement:
    requirement_id: int
    prerequisites: tuple[int, ...]
    criteria: str
    category: Category
    satisfied: bool | None = None


@dataclass(frozen=True)
class Preference:
    preference_id: int
    criteria: str
    satisfied: bool | None = None


@dataclass(frozen=True)
class Task:
    name: str
    query: str
    tags: tuple[str, ...]
    requirements: tuple[Requirement, ...]
    preferences: tuple[Preference, ...]
    is_kaggle_api_needed: bool
    is_training_needed: bool
    is_web_navigation_needed: bool
    # unknown document fields, preserved for round-trip but ignored otherwise
    extras: tuple[tuple[str, object], ...] = field(default=(), compare=False)

    def requirement(self, requirement_id: int) -> Requirement:
        return self.requirements[requirement_id]


# Constraint paragraphs appended to the query before handing it to a
# developer agent. ``generic`` is unconditional, the other two are gated on
# the task's auxiliary flags.
@dataclass(frozen=True)
class ConstraintSet:
    generic: str
    is_training_needed: str = ""
    is_kaggle_api_needed: str = ""

    def __post_init__(self) -> None:
        if not self.generic:
            raise ValueError("generic constraint must be non-empty")


DEFAULT_CONSTRAINTS = ConstraintSet(
    generic=(
        "This is a task that requires you to write, execute, and save source "
        "code. You have a hard time limit of 30 minutes to produce your "
        "programmatic solution to the given task. This time limit includes "
        "execution time. The quality of your solution will be judged based on "
        "what you left in the working folder by the time 30 minutes expire. "
        "Additionally, the hardware you are running on is unknown, and the "
        "presence of a GPU is not guaranteed."
    ),
    is_training_needed=(
        "Keep the time limit in mind when setting hyperparameters for training."
    ),
    is_kaggle_api_needed=(
        "You can use the Kaggle API credentials stored in `kaggle.json` in "
        "your current working directory."
    ),
)


_TASK_FIELDS = {
    "name",
    "query",
    "tags",
    "requirements",
    "preferences",
    "is_kaggle_api_needed",
    "is_training_needed",
    "is_web_navigation_needed",
}


def _require(doc: dict, key: str, kinds: tuple[type, ...], where: str) -> object:
    if key not in doc:
        raise SchemaViolation(f"{where}: missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kinds) or isinstance(value, bool) and bool not in kinds:
        raise SchemaViolation(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _optional_bool(doc: dict, key: str, where: str) -> bool | None:
    value = doc.get(key)
    if value is None:
        return None
    if not isinstance(value, bool):
        raise SchemaViolation(f"{where}: field {key!r} must be boolean or null")
    return value


def parse_task(raw_document: str) -> Task:
    """Parse and validate a task document.

    Raises MalformedDocument, SchemaViolation, UnknownPrerequisite,
    UnknownCategory or CycleDetected.
    """
    try:
        doc = json.loads(raw_document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(str(exc)) from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("task document must be a JSON object")

    name = _require(doc, "name", (str,), "task")
    query = _require(doc, "query", (str,), "task")
    raw_tags = _require(doc, "tags", (list,), "task")
    if not all(isinstance(t, str) for t in raw_tags):
        raise SchemaViolation("task: tags must be strings")

    raw_reqs = _require(doc, "requirements", (list,), "task")
    requirements = []
    for position, item in enumerate(raw_reqs):
        if not isinstance(item, dict):
            raise SchemaViolation(f"requirement {position}: not an object")
        where = f"requirement {position}"
        rid = _require(item, "requirement_id", (int,), where)
        if rid != position:
            raise SchemaViolation(
                f"{where}: requirement_id {rid} does not equal list position"
            )
        prereqs = _require(item, "prerequisites", (list,), where)
        if not all(isinstance(p, int) and not isinstance(p, bool) for p in prereqs):
            raise SchemaViolation(f"{where}: prerequisites must be integers")
        if len(set(prereqs)) != len(prereqs):
            raise SchemaViolation(f"{where}: duplicate prerequisites")
        if rid in prereqs:
            raise CycleDetected([rid])
        criteria = _require(item, "criteria", (str,), where)
        category = Category.from_string(_require(item, "category", (str,), where))
        requirements.append(
            Requirement(
                requirement_id=rid,
                prerequisites=tuple(prereqs),
                criteria=criteria,
                category=category,
                satisfied=_optional_bool(item, "satisfied", where),
            )
        )

    known_ids = set(range(len(requirements)))
    for req in requirements:
        for pre in req.prerequisites:
            if pre not in known_ids:
                raise UnknownPrerequisite(
                    f"requirement {req.requirement_id}: prerequisite {pre} does not exist"
                )

    raw_prefs = doc.get("preferences", [])
    if not isinstance(raw_prefs, list):
        raise SchemaViolation("task: preferences must be a list")
    preferences = []
    for position, item in enumerate(raw_prefs):
        if not isinstance(item, dict):
            raise SchemaViolation(f"preference {position}: not an object")
        where = f"preference {position}"
        pid = _require(item, "preference_id", (int,), where)
        if pid != position:
            raise SchemaViolation(f"{where}: preference_id {pid} does not equal list position")
        preferences.append(
            Preference(
                preference_id=pid,
                criteria=_require(item, "criteria", (str,), where),
                satisfied=_optional_bool(item, "satisfied", where),
            )
        )

    extras = tuple((k, v) for k, v in doc.items() if k not in _TASK_FIELDS)

    task = Task(
        name=name,
        query=query,
        tags=tuple(raw_tags),
        requirements=tuple(requirements),
        preferences=tuple(preferences),
        is_kaggle_api_needed=bool(_require(doc, "is_kaggle_api_needed", (bool,), "task")),
        is_training_needed=bool(_require(doc, "is_training_needed", (bool,), "task")),
        is_web_navigation_needed=bool(
            _require(doc, "is_web_navigation_needed", (bool,), "task")
        ),
        extras=extras,
    )
    validate_dag(task)
    return task


def serialize_task(task: Task, indent: int = 4) -> str:
    doc: dict[str, object] = {
        "name": task.name,
        "query": task.query,
        "tags": list(task.tags),
        "requirements": [
            {
                "requirement_id": r.requirement_id,
                "prerequisites": list(r.prerequisites),
                "criteria": r.criteria,
                "category": r.category.value,
                "satisfied": r.satisfied,
            }
            for r in task.requirements
        ],
        "preferences": [
            {
                "preference_id": p.preference_id,
                "criteria": p.criteria,
                "satisfied": p.satisfied,
            }
            for p in task.preferences
        ],
        "is_kaggle_api_needed": task.is_kaggle_api_needed,
        "is_training_needed": task.is_training_needed,
        "is_web_navigation_needed": task.is_web_navigation_needed,
    }
    for key, value in task.extras:
        doc[key] = value
    return json.dumps(doc, indent=indent, ensure_ascii=False)


def validate_dag(task: Task) -> None:
    """Raise CycleDetected (with one witness cycle) unless prerequisites are acyclic."""
    adjacency = {r.requirement_id: r.prerequisites for r in task.requirements}
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {rid: WHITE for rid in adjacency}
    stack: list[int] = []

    def visit(node: int) -> None:
        color[node] = GRAY
        stack.append(node)
        for nxt in adjacency[node]:
            if color[nxt] == GRAY:
                idx = stack.index(nxt)
                raise CycleDetected(stack[idx:])
            if color[nxt] == WHITE:
                visit(nxt)
        stack.pop()
        color[node] = BLACK

    for rid in adjacency:
        if color[rid] == WHITE:
            visit(rid)


def topological_order(task: Task) -> list[int]:
    """Deterministic topological order of requirement ids, ties broken by ascending id.

    Requires validate_dag to have passed.
    """
    import heapq

    dependents: dict[int, list[int]] = {r.requirement_id: [] for r in task.requirements}
    indegree = {r.requirement_id: len(r.prerequisites) for r in task.requirements}
    for r in task.requirements:
        for pre in r.prerequisites:
            dependents[pre].append(r.requirement_id)

    ready = [rid for rid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        rid = heapq.heappop(ready)
        order.append(rid)
        for dep in dependents[rid]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, dep)
    return order


def ancestors(task: Task, requirement_id: int) -> set[int]:
    """Transitive closure of prerequisites for one requirement."""
    seen: set[int] = set()
    frontier = list(task.requirements[requirement_id].prerequisites)
    while frontier:
        rid = frontier.pop()
        if rid in seen:
            continue
        seen.add(rid)
        frontier.extend(task.requirements[rid].prerequisites)
    return seen


def extend_query(task: Task, constraints: ConstraintSet = DEFAULT_CONSTRAINTS) -> str:
    """Append constraint paragraphs to the query: generic, then training and
    kaggle paragraphs when the corresponding flags are set."""
    parts = [task.query, constraints.generic]
    if task.is_training_needed and constraints.is_training_needed:
        parts.append(constraints.is_training_needed)
    if task.is_kaggle_api_needed and constraints.is_kaggle_api_needed:
        parts.append(constraints.is_kaggle_api_needed)
    return "\n\n".join(parts)
