"""Workspace graphs: directories, files, code snippets and import edges.

The graph mirrors the filesystem tree of a generated workspace. Code files are
classified by an extension allowlist, import edges come from regex-level
scanning of import statements, and code files can be chunked into snippet
nodes for lexical search.
"""

from __future__ import annotations

import enum
import fnmatch
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NotACodeFile, PathNotInWorkspace, RootNotFound

CODE_EXTENSIONS = {
    ".py", ".rs", ".js", ".ts", ".jsx", ".tsx", ".java", ".cpp", ".cc",
    ".c", ".h", ".hpp", ".go", ".sh", ".rb",
}
TEXT_EXTENSIONS = {
    ".txt", ".md", ".rst", ".cfg", ".ini", ".toml", ".html", ".css", ".tex",
    ".log",
}
DATA_EXTENSIONS = {".json", ".csv", ".tsv", ".yaml", ".yml", ".xml", ".jsonl"}

DEFAULT_IGNORE_PATTERNS = (".git", "__pycache__", ".*")

DEFAULT_MAX_SNIPPET_LINES = 80


class NodeKind(enum.Enum):
    DIRECTORY = "directory"
    FILE = "file"
    SNIPPET = "snippet"


class FileKind(enum.Enum):
    CODE = "code"
    TEXT = "text"
    DATA = "data"
    BINARY = "binary"
    OTHER = "other"


class EdgeKind(enum.Enum):
    CONTAINS = "contains"
    IMPORTS = "imports"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    path: str  # workspace-relative, '/' separators; '' for the root
    file_kind: FileKind | None = None
    line_count: int = 0
    byte_size: int = 0
    start_line: int = 0  # snippets only, 1-based
    end_line: int = 0


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: EdgeKind


@dataclass
class WorkspaceGraph:
    root_path: Path
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    root_id: str = ""

    def node(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def files(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.FILE]

    def snippets(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.SNIPPET]

    def has_path(self, path: str) -> bool:
        return path in self.nodes

    def contains_children(self, node_id: str) -> list[Node]:
        return [
            self.nodes[e.dst]
            for e in self.edges
            if e.kind is EdgeKind.CONTAINS and e.src == node_id
        ]


@dataclass(frozen=True)
class WorkspaceStats:
    saved_code_files: int
    saved_code_lines: int
    saved_files: int


def classify_file(path: Path) -> FileKind:
    ext = path.suffix.lower()
    if ext in CODE_EXTENSIONS:
        return FileKind.CODE
    try:
        raw = path.read_bytes()
    except OSError:
        return FileKind.OTHER
    if b"\x00" in raw[:8192]:
        return FileKind.BINARY
    try:
        raw.decode("utf-8")
    except UnicodeDecodeError:
        return FileKind.BINARY
    if ext in DATA_EXTENSIONS:
        return FileKind.DATA
    if ext in TEXT_EXTENSIONS:
        return FileKind.TEXT
    return FileKind.TEXT


def _ignored(name: str, patterns: tuple[str, ...]) -> bool:
    return any(fnmatch.fnmatch(name, pat) for pat in patterns)


def _count_lines(path: Path) -> int:
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError:
        return 0
    if not text:
        return 0
    return text.count("\n") + (0 if text.endswith("\n") else 1)


# Regex-level import extraction; yields candidate module references.
_PY_IMPORT = re.compile(r"^\s*(?:import\s+([\w., ]+)|from\s+([\w.]+)\s+import\b)", re.M)
_JS_IMPORT = re.compile(r"""(?:import\s+.*?from\s+|require\s*\(\s*)['"]([^'"]+)['"]""")


def _import_refs(path: Path, file_kind_ext: str) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError:
        return []
    refs: list[str] = []
    if file_kind_ext == ".py":
        for match in _PY_IMPORT.finditer(text):
            if match.group(1):
                for part in match.group(1).split(","):
                    name = part.strip().split(" as ")[0].strip()
                    if name:
                        refs.append(name)
            elif match.group(2):
                refs.append(match.group(2))
    elif file_kind_ext in {".js", ".ts", ".jsx", ".tsx"}:
        refs.extend(_JS_IMPORT.findall(text))
    return refs


def _resolve_import(ref: str, importer: str, paths: set[str]) -> str | None:
    """Map an import reference to a workspace-relative file path, or None."""
    importer_dir = os.path.dirname(importer)
    module_path = ref.lstrip("./").replace(".", "/") if not ref.startswith(".") else ref
    candidates = []
    for base in (module_path, ref.strip("./")):
        for ext in ("", ".py", ".js", ".ts", ".jsx", ".tsx"):
            candidate = base + ext
            candidates.append(candidate)
            if importer_dir:
                candidates.append(f"{importer_dir}/{candidate}")
    for candidate in candidates:
        normalized = os.path.normpath(candidate).replace(os.sep, "/")
        if normalized in paths and normalized != importer:
            return normalized
    return None


def build_graph(
    root_path: str | Path,
    ignore_patterns: tuple[str, ...] = DEFAULT_IGNORE_PATTERNS,
) -> WorkspaceGraph:
    """Scan a directory tree into a WorkspaceGraph with containment and
    import edges."""
    root = Path(root_path)
    if not root.is_dir():
        raise RootNotFound(f"workspace root not found: {root}")

    graph = WorkspaceGraph(root_path=root, root_id="")
    graph.nodes[""] = Node(id="", kind=NodeKind.DIRECTORY, path="")

    file_paths: set[str] = set()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if not _ignored(d, ignore_patterns))
        rel_dir = os.path.relpath(dirpath, root)
        rel_dir = "" if rel_dir == "." else rel_dir.replace(os.sep, "/")
        for name in dirnames:
            rel = f"{rel_dir}/{name}" if rel_dir else name
            graph.nodes[rel] = Node(id=rel, kind=NodeKind.DIRECTORY, path=rel)
            graph.edges.append(Edge(rel_dir, rel, EdgeKind.CONTAINS))
        for name in sorted(filenames):
            if _ignored(name, ignore_patterns):
                continue
            rel = f"{rel_dir}/{name}" if rel_dir else name
            full = Path(dirpath) / name
            kind = classify_file(full)
            line_count = 0 if kind is FileKind.BINARY else _count_lines(full)
            graph.nodes[rel] = Node(
                id=rel,
                kind=NodeKind.FILE,
                path=rel,
                file_kind=kind,
                line_count=line_count,
                byte_size=full.stat().st_size,
            )
            graph.edges.append(Edge(rel_dir, rel, EdgeKind.CONTAINS))
            file_paths.add(rel)

    for rel in sorted(file_paths):
        node = graph.nodes[rel]
        if node.file_kind is not FileKind.CODE:
            continue
        ext = Path(rel).suffix.lower()
        seen: set[str] = set()
        for ref in _import_refs(root / rel, ext):
            target = _resolve_import(ref, rel, file_paths)
            if target and target not in seen:
                seen.add(target)
                graph.edges.append(Edge(rel, target, EdgeKind.IMPORTS))

    return graph


def chunk_code(
    graph: WorkspaceGraph,
    file_id: str,
    max_lines: int = DEFAULT_MAX_SNIPPET_LINES,
) -> list[Node]:
    """Partition a code file's lines into snippet nodes of at most
    ``max_lines`` lines, preferring blank-line boundaries within a 5-line
    window. Snippets are registered in the graph with Contains edges."""
    if max_lines <= 0:
        raise ValueError("max_lines must be positive")
    if file_id not in graph.nodes:
        raise PathNotInWorkspace(file_id)
    node = graph.nodes[file_id]
    if node.kind is not NodeKind.FILE or node.file_kind is not FileKind.CODE:
        raise NotACodeFile(file_id)

    text = (graph.root_path / file_id).read_text(encoding="utf-8", errors="replace")
    lines = text.splitlines()
    snippets: list[Node] = []
    start = 0
    while start < len(lines):
        end = min(start + max_lines, len(lines))
        if end < len(lines):
            # prefer splitting after a blank line near the hard boundary
            for candidate in range(end, max(start, end - 5), -1):
                if lines[candidate - 1].strip() == "":
                    end = candidate
                    break
        snippet_id = f"{file_id}#{start + 1}-{end}"
        body = "\n".join(lines[start:end])
        snippet = Node(
            id=snippet_id,
            kind=NodeKind.SNIPPET,
            path=file_id,
            line_count=end - start,
            byte_size=len(body.encode("utf-8")),
            start_line=start + 1,
            end_line=end,
        )
        snippets.append(snippet)
        graph.nodes[snippet_id] = snippet
        graph.edges.append(Edge(file_id, snippet_id, EdgeKind.CONTAINS))
        start = end
    return snippets


def snippet_text(graph: WorkspaceGraph, snippet: Node) -> str:
    text = (graph.root_path / snippet.path).read_text(encoding="utf-8", errors="replace")
    lines = text.splitlines()
    return "\n".join(lines[snippet.start_line - 1:snippet.end_line])


def workspace_stats(graph: WorkspaceGraph) -> WorkspaceStats:
    files = graph.files()
    code = [f for f in files if f.file_kind is FileKind.CODE]
    return WorkspaceStats(
        saved_code_files=len(code),
        saved_code_lines=sum(f.line_count for f in code),
        saved_files=len(files),
    )


def render_tree(graph: WorkspaceGraph, root_label: str = "/workspace") -> str:
    """Indented tree listing of directories and files, for locate prompts and
    debugging dumps."""
    lines = [root_label]

    def walk(node_id: str, depth: int) -> None:
        children = sorted(
            graph.contains_children(node_id),
            key=lambda n: (n.kind is not NodeKind.DIRECTORY, n.path),
        )
        for child in children:
            if child.kind is NodeKind.SNIPPET:
                continue
            name = child.path.rsplit("/", 1)[-1]
            lines.append("|   " * depth + "|-- " + name)
            if child.kind is NodeKind.DIRECTORY:
                walk(child.id, depth + 1)

    walk(graph.root_id, 0)
    return "\n".join(lines)


def dump_graph(graph: WorkspaceGraph) -> str:
    """Plain-text node and edge listing for debugging."""
    out = ["# nodes"]
    for node in sorted(graph.nodes.values(), key=lambda n: n.id):
        kind = node.kind.value
        extra = f" {node.file_kind.value}" if node.file_kind else ""
        out.append(f"{node.id or '.'} [{kind}{extra}] lines={node.line_count} bytes={node.byte_size}")
    out.append("# edges")
    for edge in graph.edges:
        out.append(f"{edge.src or '.'} -{edge.kind.value}-> {edge.dst}")
    return "\n".join(out)
