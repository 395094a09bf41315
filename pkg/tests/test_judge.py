from __future__ import annotations

import json

import pytest

from reqeval.errors import MalformedJudgment, MissingTrajectory
from reqeval.evidence import Evidence, EvidenceItem, Source
from reqeval.judge import (
    Decision,
    JudgeConfig,
    RuleOracleBackend,
    Setting,
    UsageLedger,
    ask,
    apply_verdicts,
    judge_task,
    parse_verdict_reply,
)
from reqeval.tasks import parse_task, serialize_task


class ScriptedBackend:
    context_budget = 64_000

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0
        self._usage = UsageLedger()

    @property
    def usage(self):
        return self._usage

    def reset_usage(self):
        self._usage = UsageLedger()

    def chat(self, system_prompt, user_prompt):
        self.calls += 1
        self._usage = self._usage + UsageLedger(input_tokens=1, output_tokens=1)
        return self.replies.pop(0) if self.replies else ""


def evidence_of(text: str) -> Evidence:
    return Evidence(items=(EvidenceItem(Source.FILE_CONTENT, "f", text),))


def test_ask_satisfied():
    backend = ScriptedBackend(["<SATISFIED> the file src/model.py implements it"])
    verdict = ask("c", evidence_of("src/model.py"), backend)
    assert verdict.decision is Decision.SATISFIED
    assert verdict.confidence == 1.0
    assert "src/model.py" in verdict.justification


def test_ask_unsatisfied():
    backend = ScriptedBackend(["<UNSATISFIED> results/ folder missing"])
    verdict = ask("c", evidence_of("x"), backend)
    assert verdict.decision is Decision.UNSATISFIED
    assert verdict.confidence == 1.0


def test_ask_both_tokens_first_wins():
    verdict = parse_verdict_reply(
        "<UNSATISFIED> ... although one could argue <SATISFIED>", 0
    )
    assert verdict.decision is Decision.UNSATISFIED
    assert verdict.confidence == 0.5


def test_ask_malformed_after_retries():
    backend = ScriptedBackend(["the requirement seems met", "still no token"])
    with pytest.raises(MalformedJudgment):
        ask("c", evidence_of("x"), backend, max_retries=1)
    assert backend.calls == 2


def test_ask_retry_then_parse():
    backend = ScriptedBackend(["no token here", "<SATISFIED> fine"])
    verdict = ask("c", evidence_of("x"), backend, max_retries=2)
    assert verdict.decision is Decision.SATISFIED


def test_config_rejects_retrieve_in_black_box():
    with pytest.raises(ValueError):
        JudgeConfig(setting=Setting.BLACK_BOX,
                    enabled_modules=frozenset({"retrieve"}))


def test_judge_task_all_satisfied(fixtures):
    task = parse_task((fixtures / "task_chain.json").read_text())
    report = judge_task(task, fixtures / "workspaces" / "chain_demo",
                        backend=RuleOracleBackend())
    assert [v.is_satisfied() for v in report.verdicts] == [True, True, True]
    assert [v.requirement_id for v in report.verdicts] == [0, 1, 2]


def test_judge_task_sabotaged_chain(fixtures):
    task = parse_task((fixtures / "task_chain.json").read_text())
    report = judge_task(task, fixtures / "workspaces" / "chain_demo_sabotaged",
                        backend=RuleOracleBackend())
    # ask judges each requirement independently; dependency discounting is a
    # metrics-layer concern
    assert [v.is_satisfied() for v in report.verdicts] == [True, False, True]


def test_judge_task_empty_requirements(tmp_path, fixtures):
    doc = json.loads((fixtures / "task_chain.json").read_text())
    doc["requirements"] = []
    task = parse_task(json.dumps(doc))
    report = judge_task(task, fixtures / "workspaces" / "chain_demo",
                        backend=RuleOracleBackend())
    assert report.verdicts == ()
    assert report.usage == UsageLedger()


def test_judge_task_deterministic(fixtures):
    task = parse_task((fixtures / "task_diamond.json").read_text())
    workspace = fixtures / "workspaces" / "diamond_demo"
    first = judge_task(task, workspace, backend=RuleOracleBackend())
    second = judge_task(task, workspace, backend=RuleOracleBackend())
    assert first == second


def test_judge_task_gray_box_requires_trajectory(fixtures):
    task = parse_task((fixtures / "task_chain.json").read_text())
    config = JudgeConfig.default(Setting.GRAY_BOX)
    with pytest.raises(MissingTrajectory):
        judge_task(task, fixtures / "workspaces" / "chain_demo",
                   trajectory=None, config=config, backend=RuleOracleBackend())


def test_judge_task_usage_sums_backend_calls(fixtures):
    task = parse_task((fixtures / "task_chain.json").read_text())
    backend = RuleOracleBackend()
    report = judge_task(task, fixtures / "workspaces" / "chain_demo",
                        backend=backend)
    assert report.usage == backend.usage
    assert report.usage.input_tokens > 0
    assert report.usage.cost == 0.0


def test_order_independence_without_memory(fixtures):
    # judging the same requirements against the same workspace cannot depend
    # on ordering when memory is off: decisions derive only from the evidence
    task = parse_task((fixtures / "task_diamond.json").read_text())
    workspace = fixtures / "workspaces" / "diamond_demo_sabotaged"
    report = judge_task(task, workspace, backend=RuleOracleBackend())
    decisions = {v.requirement_id: v.is_satisfied() for v in report.verdicts}
    assert decisions == {0: True, 1: True, 2: False, 3: True}


def test_rule_file_overrides(tmp_path, fixtures):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps({
        "rules": [{"keyword": "classifier is trained", "decision": "unsatisfied"}]
    }))
    backend = RuleOracleBackend.from_rule_file(rules)
    task = parse_task((fixtures / "task_chain.json").read_text())
    report = judge_task(task, fixtures / "workspaces" / "chain_demo",
                        backend=backend)
    assert [v.is_satisfied() for v in report.verdicts] == [True, False, True]


def test_apply_verdicts_round_trips(fixtures):
    task = parse_task((fixtures / "task_chain.json").read_text())
    report = judge_task(task, fixtures / "workspaces" / "chain_demo_sabotaged",
                        backend=RuleOracleBackend())
    judged = apply_verdicts(task, report)
    assert [r.satisfied for r in judged.requirements] == [True, False, True]
    reparsed = parse_task(serialize_task(judged))
    assert reparsed == judged


def test_preferences_judged_only_on_request(fixtures):
    task = parse_task((fixtures / "task_seven_req.json").read_text())
    workspace = fixtures / "workspaces" / "chain_demo"
    report = judge_task(task, workspace, backend=RuleOracleBackend())
    assert report.preference_verdicts is None
    report = judge_task(task, workspace, backend=RuleOracleBackend(),
                        include_preferences=True)
    assert report.preference_verdicts is not None
    assert len(report.preference_verdicts) == 2


def test_usage_ledger_addition():
    a = UsageLedger(1, 2, 0.5, 1.0)
    b = UsageLedger(10, 20, 0.25, 2.0)
    assert a + b == UsageLedger(11, 22, 0.75, 3.0)
