from __future__ import annotations

import random
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def random_dag(rng: random.Random, max_nodes: int = 12) -> list[list[int]]:
    """Random prerequisite lists: node i may only depend on nodes < i, so the
    result is acyclic by construction."""
    n = rng.randint(1, max_nodes)
    return [
        sorted(rng.sample(range(i), rng.randint(0, min(i, 3))))
        for i in range(n)
    ]


def dag_task_document(name: str, prereqs: list[list[int]]) -> str:
    import json

    return json.dumps(
        {
            "name": name,
            "query": "synthetic",
            "tags": [],
            "requirements": [
                {
                    "requirement_id": i,
                    "prerequisites": pre,
                    "criteria": f"requirement {i}",
                    "category": "Other",
                    "satisfied": None,
                }
                for i, pre in enumerate(prereqs)
            ],
            "preferences": [],
            "is_kaggle_api_needed": False,
            "is_training_needed": False,
            "is_web_navigation_needed": False,
        }
    )
