"""Evidence-gathering modules: locate, read, search, retrieve, memory, planning.

Each module produces provenance-tagged EvidenceItems that the ask step
consumes. Search is BM25 over code snippets (k1=1.2, b=0.75 by default);
fuzzy search ranks snippets by normalized edit-distance similarity over
line-level windows.
"""

from __future__ import annotations

import enum
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import EmptyIndex, EmptyQuery, MissingTrajectory, PathNotInWorkspace
from .trajectory import (
    ELISION_MARKER,
    Trajectory,
    TruncationStrategy,
    truncate,
)
from .workspace import FileKind, Node, NodeKind, WorkspaceGraph, render_tree, snippet_text

if TYPE_CHECKING:
    from .judge import JudgmentBackend, Verdict

DEFAULT_READ_CAP = 64 * 1024  # bytes of rendered payload per file
MAX_LOCATED_PATHS = 5

BM25_K1 = 1.2
BM25_B = 0.75

DEFAULT_MODULE_ORDER = ("locate", "read", "search", "retrieve", "memory")


class Source(enum.Enum):
    LOCATED_FILE = "located_file"
    FILE_CONTENT = "file_content"
    SEARCH_HIT = "search_hit"
    TRAJECTORY_STEPS = "trajectory_steps"
    MEMORY_RECALL = "memory_recall"


@dataclass(frozen=True)
class EvidenceItem:
    source: Source
    path_or_ref: str
    payload: str

    def __post_init__(self) -> None:
        if not self.payload:
            raise ValueError("evidence payload must be non-empty")


@dataclass(frozen=True)
class Evidence:
    items: tuple[EvidenceItem, ...]

    @property
    def total_chars(self) -> int:
        return sum(len(item.payload) for item in self.items)

    def render(self) -> str:
        return "\n\n".join(
            f"[{item.source.value}: {item.path_or_ref}]\n{item.payload}"
            for item in self.items
        )


_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_WORD = re.compile(r"[A-Za-z0-9_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, splitting identifiers on underscores
    and camelCase."""
    tokens: list[str] = []
    for word in _WORD.findall(text):
        for piece in word.split("_"):
            if not piece:
                continue
            for sub in _CAMEL_SPLIT.split(piece):
                if sub:
                    tokens.append(sub.lower())
    return tokens


@dataclass
class _IndexedDoc:
    ref: str          # "path#start-end"
    path: str
    start_line: int
    text: str
    tokens: list[str]
    counts: Counter


@dataclass
class SearchIndex:
    documents: list[_IndexedDoc]
    k1: float = BM25_K1
    b: float = BM25_B
    avg_doc_len: float = 0.0
    idf: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValueError("k1 must be positive")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must lie in [0, 1]")


def build_index(
    graph: WorkspaceGraph,
    snippets: list[Node] | None = None,
    k1: float = BM25_K1,
    b: float = BM25_B,
) -> SearchIndex:
    """Index code snippets for BM25 search. Chunks every code file that has
    no snippets yet when ``snippets`` is not given."""
    from .workspace import chunk_code

    if snippets is None:
        snippets = list(graph.snippets())
        if not snippets:
            for file_node in graph.files():
                if file_node.file_kind is FileKind.CODE:
                    snippets.extend(chunk_code(graph, file_node.id))
    docs = []
    for snippet in snippets:
        text = snippet_text(graph, snippet)
        tokens = tokenize(text)
        docs.append(
            _IndexedDoc(
                ref=snippet.id,
                path=snippet.path,
                start_line=snippet.start_line,
                text=text,
                tokens=tokens,
                counts=Counter(tokens),
            )
        )
    return index_from_docs(docs, k1=k1, b=b)


def index_from_docs(docs: list[_IndexedDoc], k1: float = BM25_K1, b: float = BM25_B) -> SearchIndex:
    index = SearchIndex(documents=docs, k1=k1, b=b)
    n = len(docs)
    if n:
        index.avg_doc_len = sum(len(d.tokens) for d in docs) / n
        df: Counter = Counter()
        for doc in docs:
            df.update(doc.counts.keys())
        index.idf = {
            term: math.log(1.0 + (n - count + 0.5) / (count + 0.5))
            for term, count in df.items()
        }
    return index


def index_texts(texts: dict[str, str], k1: float = BM25_K1, b: float = BM25_B) -> SearchIndex:
    """Build an index directly from {ref: text}; used for tests and ad-hoc corpora."""
    docs = []
    for ref, text in texts.items():
        tokens = tokenize(text)
        docs.append(_IndexedDoc(ref=ref, path=ref, start_line=1, text=text,
                                tokens=tokens, counts=Counter(tokens)))
    return index_from_docs(docs, k1=k1, b=b)


def _bm25_score(index: SearchIndex, query_tokens: list[str], doc: _IndexedDoc) -> float:
    if not index.avg_doc_len:
        return 0.0
    score = 0.0
    dl = len(doc.tokens)
    norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_len)
    for term in query_tokens:
        tf = doc.counts.get(term, 0)
        if tf == 0:
            continue
        score += index.idf.get(term, 0.0) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def search(query: str, index: SearchIndex, k: int = 3) -> list[tuple[str, float]]:
    """Top-k snippets under BM25, descending score; ties broken by snippet
    path, then start line."""
    if not index.documents:
        raise EmptyIndex("search index holds no documents")
    if k < 1:
        raise ValueError("k must be at least 1")
    query_tokens = tokenize(query)
    scored = [
        (_bm25_score(index, query_tokens, doc), doc)
        for doc in index.documents
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].path, pair[1].start_line))
    return [(doc.ref, score) for score, doc in scored[:k]]


def _levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def _fuzzy_similarity(query: str, text: str) -> float:
    """Best normalized similarity of the query against any line of the text."""
    best = 0.0
    for line in text.splitlines() or [""]:
        line = line.strip()
        denom = max(len(query), len(line))
        if denom == 0:
            continue
        sim = 1.0 - _levenshtein(query, line) / denom
        if sim > best:
            best = sim
    return best


def fuzzy_search(query: str, index: SearchIndex, k: int = 3) -> list[tuple[str, float]]:
    """Rank snippets by edit-distance similarity between the query and their
    best-matching line; same tie-break rule as BM25 search."""
    if not query:
        raise EmptyQuery("fuzzy search requires a non-empty query")
    if not index.documents:
        raise EmptyIndex("search index holds no documents")
    if k < 1:
        raise ValueError("k must be at least 1")
    scored = [
        (_fuzzy_similarity(query, doc.text), doc)
        for doc in index.documents
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].path, pair[1].start_line))
    return [(doc.ref, score) for score, doc in scored[:k]]


# --- locate ---

LOCATE_SYSTEM_PROMPT = """\
You are an advanced AI system specializing in understanding project structures
and determining file locations based on provided criteria. Your task is to
locate specific files in the workspace based on the user's criteria and
workspace information.
"""

LOCATE_PROMPT_TEMPLATE = """\
Provided below is the structure of the workspace:
{workspace_info}

This is the criteria related to the task:
{criteria}

Follow the format in the example below and return only the file paths that match the criteria:

Example:

Suppose the criteria is:
'The database functionality is implemented in `src/db.py`, and the logging system is defined in `src/logging.py`.'

And the workspace information is:
/project
|-- src
|   |-- db.py
|   |-- logging.py
|   |-- utils.py
|-- tests
    |-- test_db.py
    |-- test_logging.py

Based on the criteria, the following paths (no more than 5) should be returned, each wrapped in dollar signs (`$`):
$/project/src/db.py$
$/project/src/logging.py$
"""

_DOLLAR_PATH = re.compile(r"\$([^$\n]+)\$")


def normalize_reply_path(raw: str, graph: WorkspaceGraph) -> str | None:
    """Map a backend-reported path to a workspace-relative one, stripping any
    invented leading prefix; None when nothing in the graph matches."""
    candidate = raw.strip().strip("`'\"").lstrip("/")
    parts = [p for p in candidate.split("/") if p not in ("", ".")]
    while parts:
        joined = "/".join(parts)
        node = graph.nodes.get(joined)
        if node is not None and node.kind is not NodeKind.SNIPPET:
            return joined
        parts.pop(0)
    return None


def parse_located_paths(reply: str, graph: WorkspaceGraph) -> list[str]:
    paths: list[str] = []
    for match in _DOLLAR_PATH.finditer(reply):
        normalized = normalize_reply_path(match.group(1), graph)
        if normalized is not None and normalized not in paths:
            paths.append(normalized)
        if len(paths) == MAX_LOCATED_PATHS:
            break
    return paths


def locate(criteria: str, graph: WorkspaceGraph, backend: "JudgmentBackend") -> list[str]:
    """Ask the backend which workspace paths a criteria refers to. Returns at
    most 5 existing paths in reply order; empty when nothing parses."""
    prompt = LOCATE_PROMPT_TEMPLATE.format(
        workspace_info=render_tree(graph), criteria=criteria
    )
    reply = backend.chat(LOCATE_SYSTEM_PROMPT, prompt)
    return parse_located_paths(reply, graph)


# --- read ---

def read(path: str, graph: WorkspaceGraph, cap: int = DEFAULT_READ_CAP) -> EvidenceItem:
    """Render one workspace file as evidence: numbered lines for code, raw
    text for text/data, a one-line descriptor for binaries. Oversized
    payloads are middle-truncated."""
    node = graph.nodes.get(path)
    if node is None or node.kind is not NodeKind.FILE:
        raise PathNotInWorkspace(path)

    if node.file_kind is FileKind.BINARY:
        return EvidenceItem(Source.FILE_CONTENT, path, f"binary file, {node.byte_size} bytes")

    text = (graph.root_path / path).read_text(encoding="utf-8", errors="replace")
    if node.file_kind is FileKind.CODE:
        payload = "\n".join(
            f"{i}: {line}" for i, line in enumerate(text.splitlines(), 1)
        )
    else:
        payload = text
    if not payload:
        payload = "(empty file)"
    if len(payload) > cap:
        half = (cap - len(ELISION_MARKER)) // 2
        payload = payload[:half] + ELISION_MARKER + payload[len(payload) - half:]
    return EvidenceItem(Source.FILE_CONTENT, path, payload)


# --- retrieve ---

RETRIEVE_SYSTEM_PROMPT = """\
You are an advanced AI system specializing in retrieving environmental feedback from project execution trajectories. Your task is to analyze the provided trajectory data and extract information about the most relevant files mentioned in the given criteria.

Focus on the following:

1. Identify the **most recent steps** where the files directly related to the criteria were involved in execution, loading, or saving operations.
2. Provide environmental feedback for these files, such as any errors, warnings, or issues encountered during their execution or processing.
3. Highlight whether any problems occurred that might affect the functionality or success of these files in the project.

Your output should be structured as follows:

- **<RELEVANT STEPS>**: List the specific steps involving the relevant files, including any environmental feedback such as error messages, execution results, or other issues encountered. Each step should concisely present the key information needed to assess the files' execution status.

Avoid including details about file contents or existence, as this information is already available. Focus solely on the environmental feedback related to the execution of the most relevant files.

Your goal is to provide clear and concise information that helps determine if there were any execution problems with the files mentioned in the criteria.
"""

RETRIEVE_PROMPT_TEMPLATE = """\
Provided below is the execution trajectory of the project:
{trajectory}

This is the criteria related to the task:
{criteria}

Return the relevant steps and their environmental feedback under a <RELEVANT STEPS> heading.
"""

_RELEVANT_STEPS = re.compile(r"<RELEVANT STEPS>\**:?\s*", re.I)


def parse_relevant_steps(reply: str) -> str:
    match = _RELEVANT_STEPS.search(reply)
    if match:
        return reply[match.end():].strip() or reply.strip()
    return reply.strip()


def retrieve(
    criteria: str,
    trajectory: Trajectory | None,
    strategy: TruncationStrategy,
    backend: "JudgmentBackend",
) -> EvidenceItem:
    """Gray-box module: truncate the trajectory to the context budget and ask
    the backend for the relevant steps."""
    if trajectory is None or not trajectory.steps:
        raise MissingTrajectory("retrieve requires a trajectory (gray-box setting)")
    overhead = len(RETRIEVE_PROMPT_TEMPLATE) + len(criteria)
    budget = min(strategy.budget, max(1, backend.context_budget - overhead))
    rendered = truncate(trajectory, strategy.with_budget(budget))
    prompt = RETRIEVE_PROMPT_TEMPLATE.format(trajectory=rendered, criteria=criteria)
    reply = backend.chat(RETRIEVE_SYSTEM_PROMPT, prompt)
    payload = parse_relevant_steps(reply)
    if not payload:
        payload = "(no relevant steps reported)"
    return EvidenceItem(Source.TRAJECTORY_STEPS, "trajectory", payload)


# --- memory ---

class JudgeMemory:
    """Per-session store of past verdicts, recalled for prerequisite
    requirements."""

    def __init__(self) -> None:
        self._verdicts: dict[int, "Verdict"] = {}

    def record(self, verdict: "Verdict") -> None:
        self._verdicts[verdict.requirement_id] = verdict

    def recall(self, prerequisites: tuple[int, ...] | list[int]) -> list[EvidenceItem]:
        items = []
        for rid in prerequisites:
            verdict = self._verdicts.get(rid)
            if verdict is None:
                continue
            decision = "satisfied" if verdict.is_satisfied() else "unsatisfied"
            items.append(
                EvidenceItem(
                    Source.MEMORY_RECALL,
                    f"requirement {rid}",
                    f"prior judgment for requirement {rid}: {decision}. "
                    f"{verdict.justification}",
                )
            )
        return items


# --- planning ---

PLAN_SYSTEM_PROMPT = """\
You are planning the evidence-gathering steps for judging one requirement of
a software project. Reply with a comma-separated ordering of the module names
you are given, most useful first.
"""

PLAN_PROMPT_TEMPLATE = """\
Available modules: {modules}

The requirement to judge:
{criteria}

Reply with a comma-separated list of module names in the order they should run.
"""


def plan_next(
    criteria: str,
    available_modules: set[str],
    backend: "JudgmentBackend",
) -> list[str]:
    """Ask the backend to order the evidence modules; fall back to the static
    default order on an unparseable reply."""
    if not available_modules:
        raise ValueError("available_modules must be non-empty")
    prompt = PLAN_PROMPT_TEMPLATE.format(
        modules=", ".join(sorted(available_modules)), criteria=criteria
    )
    reply = backend.chat(PLAN_SYSTEM_PROMPT, prompt)
    ordered = []
    for raw in re.split(r"[,\n]+", reply):
        name = raw.strip().strip(".").lower()
        if name in available_modules and name not in ordered:
            ordered.append(name)
    if not ordered:
        return [m for m in DEFAULT_MODULE_ORDER if m in available_modules]
    return ordered
