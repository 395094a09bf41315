"""The ask step, judgment backends, and the per-task judging pipeline."""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, runtime_checkable

from .errors import (
    BackendUnavailable,
    MalformedJudgment,
    MissingTrajectory,
    ReqEvalError,
)
from .evidence import (
    DEFAULT_MODULE_ORDER,
    Evidence,
    EvidenceItem,
    JudgeMemory,
    Source,
    build_index,
    locate,
    plan_next,
    read,
    retrieve,
    search,
)
from .tasks import Category, Requirement, Task, topological_order
from .trajectory import Trajectory, TruncationStrategy
from .workspace import WorkspaceGraph, build_graph, snippet_text

log = logging.getLogger(__name__)

JUDGE_SYSTEM_PROMPT = """\
You are an advanced AI system serving as an impartial judge for intelligent code generation outputs. Your primary role is to rigorously evaluate whether the agent's outputs satisfy the specified requirements by thoroughly analyzing the provided code, data, and other relevant materials.

You will systematically assess aspects such as datasets, model implementations, training procedures, and any task-specific criteria outlined in the requirements. Your evaluations must be objective, detailed, and based solely on the evidence provided.

For each requirement, deliver one of the following judgments:

1. <SATISFIED>: Use this if the agent's output fully meets the requirement. Provide a brief and precise explanation demonstrating how the specific criteria are fulfilled.

2. <UNSATISFIED>: Use this if the agent's output does not meet the requirement. Provide a concise explanation indicating the deficiencies or omissions.

Your assessment should reference specific elements such as code snippets, data samples, or output results where appropriate. Ensure that your justifications are clear, precise, and directly related to the criteria.

Respond with either <SATISFIED> or <UNSATISFIED>, followed by your concise justification.
"""

ASK_PROMPT_TEMPLATE = """\
Provided below is relevant information about the project:
{evidence}

Kindly perform an evaluation of the following criteria:
{criteria}

As per the guidelines, respond with either <SATISFIED> or <UNSATISFIED>, followed by a concise justification that references specific elements from the project information, such as code snippets, data samples, or output results.
"""

SATISFIED_TOKEN = "<SATISFIED>"
UNSATISFIED_TOKEN = "<UNSATISFIED>"

DEFAULT_MAX_RETRIES = 2


class Decision(enum.Enum):
    SATISFIED = "satisfied"
    UNSATISFIED = "unsatisfied"


@dataclass(frozen=True)
class Verdict:
    requirement_id: int
    decision: Decision
    confidence: float
    justification: str
    evidence_used: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if not self.justification:
            raise ValueError("justification must be non-empty")

    def is_satisfied(self) -> bool:
        return self.decision is Decision.SATISFIED


@dataclass(frozen=True)
class UsageLedger:
    input_tokens: int = 0
    output_tokens: int = 0
    cost: float = 0.0
    wall_time: float = 0.0

    def __add__(self, other: "UsageLedger") -> "UsageLedger":
        return UsageLedger(
            input_tokens=self.input_tokens + other.input_tokens,
            output_tokens=self.output_tokens + other.output_tokens,
            cost=self.cost + other.cost,
            wall_time=self.wall_time + other.wall_time,
        )


class Setting(enum.Enum):
    BLACK_BOX = "black"
    GRAY_BOX = "gray"


ALL_MODULES = frozenset(
    {"graph", "locate", "read", "search", "retrieve", "planning", "memory"}
)

# Default module set: ask plus graph/locate/read; retrieve joins in gray-box.
# Search, planning, and memory exist but regressed in ablation runs, so they
# default off.
DEFAULT_BLACK_BOX_MODULES = frozenset({"graph", "locate", "read"})
DEFAULT_GRAY_BOX_MODULES = DEFAULT_BLACK_BOX_MODULES | {"retrieve"}


@dataclass(frozen=True)
class JudgeConfig:
    setting: Setting = Setting.BLACK_BOX
    enabled_modules: frozenset[str] = DEFAULT_BLACK_BOX_MODULES
    truncation: TruncationStrategy = TruncationStrategy()
    search_k: int = 3
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self) -> None:
        unknown = set(self.enabled_modules) - ALL_MODULES
        if unknown:
            raise ValueError(f"unknown modules: {sorted(unknown)}")
        if "retrieve" in self.enabled_modules and self.setting is not Setting.GRAY_BOX:
            raise ValueError("retrieve requires the gray-box setting")

    @classmethod
    def default(cls, setting: Setting) -> "JudgeConfig":
        modules = (
            DEFAULT_GRAY_BOX_MODULES
            if setting is Setting.GRAY_BOX
            else DEFAULT_BLACK_BOX_MODULES
        )
        return cls(setting=setting, enabled_modules=modules)


@dataclass(frozen=True)
class JudgeReport:
    task_name: str
    verdicts: tuple[Verdict, ...]
    usage: UsageLedger
    config: JudgeConfig
    preference_verdicts: tuple[Verdict, ...] | None = None


@runtime_checkable
class JudgmentBackend(Protocol):
    """Chat interface every judging backend implements."""

    context_budget: int

    def chat(self, system_prompt: str, user_prompt: str) -> str: ...

    @property
    def usage(self) -> UsageLedger: ...

    def reset_usage(self) -> None: ...


class OpenAICompatBackend:
    """Remote backend speaking the OpenAI-compatible chat-completions wire
    format. The API key comes from the environment, never from flags."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "REQEVAL_API_KEY",
        timeout: float = 120.0,
        context_budget: int = 128_000,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.timeout = timeout
        self.context_budget = context_budget
        self._usage = UsageLedger()

    @property
    def usage(self) -> UsageLedger:
        return self._usage

    def reset_usage(self) -> None:
        self._usage = UsageLedger()

    def chat(self, system_prompt: str, user_prompt: str) -> str:
        import httpx

        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        started = time.monotonic()
        try:
            response = httpx.post(
                f"{self.endpoint}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"chat-completions request failed: {exc}") from exc
        elapsed = time.monotonic() - started
        data = response.json()
        usage = data.get("usage") or {}
        self._usage = self._usage + UsageLedger(
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            cost=float(usage.get("cost", 0.0)),
            wall_time=elapsed,
        )
        choices = data.get("choices") or []
        if not choices:
            return ""
        return str((choices[0].get("message") or {}).get("content") or "")


_BACKTICK_PATH = re.compile(r"[`']([\w./-]+\.[A-Za-z0-9]+)[`']")


class RuleOracleBackend:
    """Deterministic test backend.

    Answers locate prompts with the backtick-quoted paths found in the
    criteria, retrieve prompts by echoing trajectory steps that share a
    keyword with the criteria, and ask prompts by checking that every path
    mentioned in the criteria appears in the evidence. Optional keyword rules
    (loaded from a JSON rule file) override the path-existence default."""

    def __init__(self, rules: list[dict] | None = None, context_budget: int = 64_000) -> None:
        self.rules = rules or []
        self.context_budget = context_budget
        self._usage = UsageLedger()

    @classmethod
    def from_rule_file(cls, path: str | Path) -> "RuleOracleBackend":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = doc.get("rules", []) if isinstance(doc, dict) else doc
        return cls(rules=rules)

    @property
    def usage(self) -> UsageLedger:
        return self._usage

    def reset_usage(self) -> None:
        self._usage = UsageLedger()

    def _meter(self, prompt: str, reply: str) -> None:
        # deterministic character-count proxy; no cost, no wall time
        self._usage = self._usage + UsageLedger(
            input_tokens=len(prompt) // 4,
            output_tokens=len(reply) // 4,
        )

    def chat(self, system_prompt: str, user_prompt: str) -> str:
        if "wrapped in dollar signs" in user_prompt:
            reply = self._locate_reply(user_prompt)
        elif "<RELEVANT STEPS>" in user_prompt:
            reply = self._retrieve_reply(user_prompt)
        elif "comma-separated" in user_prompt:
            reply = ", ".join(DEFAULT_MODULE_ORDER)
        else:
            reply = self._ask_reply(user_prompt)
        self._meter(system_prompt + user_prompt, reply)
        return reply

    @staticmethod
    def _criteria_section(prompt: str) -> str:
        marker = "criteria related to the task:"
        if marker in prompt:
            tail = prompt.split(marker, 1)[1]
            return tail.split("\n\n", 1)[0]
        marker = "evaluation of the following criteria:"
        if marker in prompt:
            tail = prompt.split(marker, 1)[1]
            return tail.split("\n\nAs per the guidelines", 1)[0]
        return prompt

    def _locate_reply(self, prompt: str) -> str:
        criteria = self._criteria_section(prompt)
        paths = _BACKTICK_PATH.findall(criteria)
        if not paths:
            return "no matching files"
        return "\n".join(f"${p}$" for p in dict.fromkeys(paths))

    def _retrieve_reply(self, prompt: str) -> str:
        criteria = self._criteria_section(prompt)
        trajectory_part = prompt.split("criteria related to the task:", 1)[0]
        keywords = {w.lower() for w in re.findall(r"[\w./-]{4,}", criteria)}
        hits = []
        for block in trajectory_part.split("\n\n"):
            lowered = block.lower()
            if any(word in lowered for word in keywords):
                hits.append(block.strip())
        body = "\n\n".join(hits) if hits else "none"
        return f"<RELEVANT STEPS>\n{body}"

    def _ask_reply(self, prompt: str) -> str:
        evidence_part, _, criteria_part = prompt.partition(
            "evaluation of the following criteria:"
        )
        criteria = criteria_part.split("\n\nAs per the guidelines", 1)[0]
        for rule in self.rules:
            keyword = rule.get("keyword", "")
            if keyword and keyword.lower() in criteria.lower():
                if str(rule.get("decision", "")).lower() in ("satisfied", "true", "yes"):
                    return f"{SATISFIED_TOKEN} rule match on {keyword!r}."
                return f"{UNSATISFIED_TOKEN} rule match on {keyword!r}."
        paths = _BACKTICK_PATH.findall(criteria)
        missing = [p for p in paths if p not in evidence_part]
        if missing:
            return (
                f"{UNSATISFIED_TOKEN} missing evidence for: "
                + ", ".join(sorted(missing))
            )
        return f"{SATISFIED_TOKEN} all referenced paths present in the evidence."


def parse_verdict_reply(reply: str, requirement_id: int,
                        evidence_used: tuple[str, ...] = ()) -> Verdict | None:
    """Map a backend reply to a Verdict; None when neither token appears."""
    pos_sat = reply.find(SATISFIED_TOKEN)
    pos_unsat = reply.find(UNSATISFIED_TOKEN)
    # <UNSATISFIED> contains <SATISFIED> as a substring only if malformed
    # markup; the tokens are distinct, but guard overlapping finds anyway.
    if pos_sat >= 0 and pos_unsat >= 0:
        first = min(pos_sat, pos_unsat)
        decision = Decision.SATISFIED if first == pos_sat else Decision.UNSATISFIED
        confidence = 0.5
        token = SATISFIED_TOKEN if decision is Decision.SATISFIED else UNSATISFIED_TOKEN
        tail = reply[first + len(token):]
    elif pos_sat >= 0:
        decision, confidence = Decision.SATISFIED, 1.0
        tail = reply[pos_sat + len(SATISFIED_TOKEN):]
    elif pos_unsat >= 0:
        decision, confidence = Decision.UNSATISFIED, 1.0
        tail = reply[pos_unsat + len(UNSATISFIED_TOKEN):]
    else:
        return None
    justification = tail.strip() or "(no justification given)"
    return Verdict(
        requirement_id=requirement_id,
        decision=decision,
        confidence=confidence,
        justification=justification,
        evidence_used=evidence_used,
    )


def ask(
    criteria: str,
    evidence: Evidence,
    backend: JudgmentBackend,
    max_retries: int = DEFAULT_MAX_RETRIES,
    requirement_id: int = 0,
) -> Verdict:
    """Send the judgment prompt and parse the first verdict token from the
    reply. Resends the identical prompt up to ``max_retries`` times when the
    reply carries neither token."""
    rendered = evidence.render() or "(no evidence collected)"
    prompt = ASK_PROMPT_TEMPLATE.format(evidence=rendered, criteria=criteria)
    refs = tuple(f"{item.source.value}:{item.path_or_ref}" for item in evidence.items)
    attempts = 1 + max(0, max_retries)
    for _ in range(attempts):
        reply = backend.chat(JUDGE_SYSTEM_PROMPT, prompt)
        verdict = parse_verdict_reply(reply, requirement_id, refs)
        if verdict is not None:
            return verdict
    raise MalformedJudgment(
        f"no verdict token in {attempts} replies for requirement {requirement_id}"
    )


def _gather_evidence(
    requirement: Requirement,
    graph: WorkspaceGraph,
    trajectory: Trajectory | None,
    config: JudgeConfig,
    backend: JudgmentBackend,
    memory: JudgeMemory | None,
) -> Evidence:
    enabled = config.enabled_modules
    if "planning" in enabled:
        order = plan_next(
            requirement.criteria,
            {m for m in enabled if m not in ("graph", "planning")},
            backend,
        )
    else:
        order = [m for m in DEFAULT_MODULE_ORDER if m in enabled]

    items: list[EvidenceItem] = []
    located: list[str] = []
    for module in order:
        try:
            if module == "locate":
                located = locate(requirement.criteria, graph, backend)
                if located:
                    items.append(
                        EvidenceItem(
                            Source.LOCATED_FILE,
                            "workspace",
                            "\n".join(located),
                        )
                    )
            elif module == "read":
                targets = located or [f.id for f in graph.files()]
                for path in targets:
                    node = graph.nodes.get(path)
                    if node is not None and node.kind.value == "file":
                        items.append(read(path, graph))
            elif module == "search":
                index = build_index(graph)
                if index.documents:
                    for ref, score in search(
                        requirement.criteria, index, k=config.search_k
                    ):
                        snippet = graph.nodes[ref]
                        items.append(
                            EvidenceItem(
                                Source.SEARCH_HIT,
                                ref,
                                f"score={score:.4f}\n" + snippet_text(graph, snippet),
                            )
                        )
            elif module == "retrieve":
                if trajectory is None:
                    raise MissingTrajectory(
                        "config enables retrieve but no trajectory was given"
                    )
                items.append(
                    retrieve(requirement.criteria, trajectory, config.truncation, backend)
                )
            elif module == "memory" and memory is not None:
                items.extend(memory.recall(requirement.prerequisites))
        except (BackendUnavailable, MissingTrajectory):
            raise
        except ReqEvalError as exc:
            # partial evidence beats no verdict; log and keep going
            log.warning("module %s failed for requirement %d: %s",
                        module, requirement.requirement_id, exc)
    return Evidence(items=tuple(items))


def judge_requirement(
    task: Task,
    requirement: Requirement,
    graph: WorkspaceGraph,
    trajectory: Trajectory | None,
    config: JudgeConfig,
    backend: JudgmentBackend,
    memory: JudgeMemory | None = None,
) -> Verdict:
    evidence = _gather_evidence(requirement, graph, trajectory, config, backend, memory)
    verdict = ask(
        requirement.criteria,
        evidence,
        backend,
        max_retries=config.max_retries,
        requirement_id=requirement.requirement_id,
    )
    if memory is not None and "memory" in config.enabled_modules:
        memory.record(verdict)
    return verdict


def judge_task(
    task: Task,
    workspace_root: str | Path,
    trajectory: Trajectory | None = None,
    config: JudgeConfig | None = None,
    backend: JudgmentBackend | None = None,
    include_preferences: bool = False,
) -> JudgeReport:
    """Judge every requirement of a task against a workspace, in dependency
    order, and aggregate verdicts plus backend usage."""
    if config is None:
        config = JudgeConfig.default(
            Setting.GRAY_BOX if trajectory is not None else Setting.BLACK_BOX
        )
    if backend is None:
        backend = RuleOracleBackend()
    if "retrieve" in config.enabled_modules and trajectory is None:
        raise MissingTrajectory("config enables retrieve but no trajectory was given")

    backend.reset_usage()
    graph = build_graph(workspace_root)
    memory = JudgeMemory()

    verdicts: dict[int, Verdict] = {}
    for rid in topological_order(task):
        requirement = task.requirement(rid)
        verdicts[rid] = judge_requirement(
            task, requirement, graph, trajectory, config, backend, memory
        )

    preference_verdicts: tuple[Verdict, ...] | None = None
    if include_preferences:
        prefs = []
        for pref in task.preferences:
            requirement = Requirement(
                requirement_id=pref.preference_id,
                prerequisites=(),
                criteria=pref.criteria,
                category=Category.OTHER,
            )
            evidence = _gather_evidence(requirement, graph, trajectory, config, backend, None)
            prefs.append(
                ask(pref.criteria, evidence, backend,
                    max_retries=config.max_retries, requirement_id=pref.preference_id)
            )
        preference_verdicts = tuple(prefs)

    ordered = tuple(verdicts[rid] for rid in sorted(verdicts))
    return JudgeReport(
        task_name=task.name,
        verdicts=ordered,
        usage=backend.usage,
        config=config,
        preference_verdicts=preference_verdicts,
    )


def apply_verdicts(task: Task, report: JudgeReport) -> Task:
    """Fill the satisfied slots of a task from a report, for round-trippable
    judged documents."""
    by_id = {v.requirement_id: v for v in report.verdicts}
    requirements = tuple(
        replace(r, satisfied=by_id[r.requirement_id].is_satisfied())
        if r.requirement_id in by_id
        else r
        for r in task.requirements
    )
    preferences = task.preferences
    if report.preference_verdicts is not None:
        pref_by_id = {v.requirement_id: v for v in report.preference_verdicts}
        preferences = tuple(
            replace(p, satisfied=pref_by_id[p.preference_id].is_satisfied())
            if p.preference_id in pref_by_id
            else p
            for p in task.preferences
        )
    return replace(task, requirements=requirements, preferences=preferences)
