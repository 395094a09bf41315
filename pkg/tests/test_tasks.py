from __future__ import annotations

import itertools
import json
import random

import pytest

from conftest import dag_task_document, random_dag
from reqeval.errors import (
    CycleDetected,
    MalformedDocument,
    SchemaViolation,
    UnknownCategory,
    UnknownPrerequisite,
)
from reqeval.tasks import (
    DEFAULT_CONSTRAINTS,
    Category,
    ConstraintSet,
    ancestors,
    extend_query,
    parse_task,
    serialize_task,
    topological_order,
    validate_dag,
)


def make_doc(**overrides):
    doc = json.loads(dag_task_document("t", [[], [0]]))
    doc.update(overrides)
    return doc


def test_parse_seven_requirement_fixture(fixtures):
    task = parse_task((fixtures / "task_seven_req.json").read_text())
    assert len(task.requirements) == 7
    assert len(task.preferences) == 2
    assert task.is_kaggle_api_needed is True
    assert task.requirements[1].prerequisites == (0,)
    assert task.requirements[0].category is Category.DATASET_OR_ENVIRONMENT
    assert all(r.satisfied is None for r in task.requirements)


def test_parse_empty_requirements():
    task = parse_task(json.dumps(make_doc(requirements=[])))
    assert task.requirements == ()


def test_unknown_prerequisite():
    doc = make_doc()
    doc["requirements"][1]["prerequisites"] = [99]
    with pytest.raises(UnknownPrerequisite):
        parse_task(json.dumps(doc))


def test_unknown_category():
    doc = make_doc()
    doc["requirements"][0]["category"] = "Quantum"
    with pytest.raises(UnknownCategory):
        parse_task(json.dumps(doc))


def test_category_case_insensitive():
    doc = make_doc()
    doc["requirements"][0]["category"] = "dataset OR environment"
    task = parse_task(json.dumps(doc))
    assert task.requirements[0].category is Category.DATASET_OR_ENVIRONMENT


def test_malformed_document():
    with pytest.raises(MalformedDocument):
        parse_task("{not json")


def test_missing_field():
    doc = make_doc()
    del doc["query"]
    with pytest.raises(SchemaViolation):
        parse_task(json.dumps(doc))


def test_requirement_id_must_match_position():
    doc = make_doc()
    doc["requirements"][1]["requirement_id"] = 5
    with pytest.raises(SchemaViolation):
        parse_task(json.dumps(doc))


def test_self_loop_detected():
    doc = make_doc()
    doc["requirements"][0]["prerequisites"] = [0]
    with pytest.raises(CycleDetected) as info:
        parse_task(json.dumps(doc))
    assert info.value.cycle == [0]


def test_two_cycle_detected():
    doc = make_doc()
    doc["requirements"][0]["prerequisites"] = [1]
    with pytest.raises(CycleDetected) as info:
        parse_task(json.dumps(doc))
    assert sorted(info.value.cycle) == [0, 1]


def test_validate_dag_ok_on_chain(fixtures):
    task = parse_task((fixtures / "task_chain.json").read_text())
    validate_dag(task)  # must not raise


def test_round_trip_identity(fixtures):
    for name in ("task_seven_req.json", "task_chain.json", "task_diamond.json"):
        original = parse_task((fixtures / name).read_text())
        assert parse_task(serialize_task(original)) == original


def test_unknown_extra_fields_preserved():
    doc = make_doc(custom_note="keep me")
    task = parse_task(json.dumps(doc))
    assert ("custom_note", "keep me") in task.extras
    assert json.loads(serialize_task(task))["custom_note"] == "keep me"


def test_topological_order_chain():
    task = parse_task(dag_task_document("chain", [[], [0], [1]]))
    assert topological_order(task) == [0, 1, 2]


def test_topological_order_diamond():
    task = parse_task(dag_task_document("diamond", [[], [0], [0], [1, 2]]))
    # brute force: tie-break-minimal valid order among all permutations
    n = 4
    prereq = {0: set(), 1: {0}, 2: {0}, 3: {1, 2}}
    valid = [
        list(p)
        for p in itertools.permutations(range(n))
        if all(p.index(a) < p.index(b) for b in range(n) for a in prereq[b])
    ]
    assert topological_order(task) == min(valid)


def test_topological_order_independent_ties():
    task = parse_task(dag_task_document("pair", [[], []]))
    assert topological_order(task) == [0, 1]


def test_topological_order_random_dags_respect_precedence():
    rng = random.Random(7)
    for i in range(100):
        prereqs = random_dag(rng)
        task = parse_task(dag_task_document(f"r{i}", prereqs))
        order = topological_order(task)
        assert sorted(order) == list(range(len(prereqs)))
        position = {rid: idx for idx, rid in enumerate(order)}
        for rid, pre in enumerate(prereqs):
            for ancestor in ancestors(task, rid):
                assert position[ancestor] < position[rid]
            for p in pre:
                assert position[p] < position[rid]


def test_extend_query_all_flags(fixtures):
    task = parse_task((fixtures / "task_seven_req.json").read_text())
    extended = extend_query(task)
    parts = extended.split("\n\n")
    assert parts[0] == task.query
    assert parts[1] == DEFAULT_CONSTRAINTS.generic
    assert parts[2] == DEFAULT_CONSTRAINTS.is_training_needed
    assert parts[3] == DEFAULT_CONSTRAINTS.is_kaggle_api_needed
    assert len(parts) == 4


def test_extend_query_no_flags():
    task = parse_task(dag_task_document("plain", [[]]))
    extended = extend_query(task)
    assert extended == task.query + "\n\n" + DEFAULT_CONSTRAINTS.generic


def test_extend_query_kaggle_only():
    doc = make_doc(is_kaggle_api_needed=True, is_training_needed=False)
    task = parse_task(json.dumps(doc))
    parts = extend_query(task).split("\n\n")
    assert parts[1] == DEFAULT_CONSTRAINTS.generic
    assert parts[2] == DEFAULT_CONSTRAINTS.is_kaggle_api_needed
    assert len(parts) == 3


def test_extend_query_generic_appears_exactly_once(fixtures):
    task = parse_task((fixtures / "task_diamond.json").read_text())
    extended = extend_query(task)
    assert extended.count(DEFAULT_CONSTRAINTS.generic) == 1


def test_constraint_set_rejects_empty_generic():
    with pytest.raises(ValueError):
        ConstraintSet(generic="")
