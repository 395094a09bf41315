"""Judge code-generating agents against hierarchical requirement DAGs."""

from .errors import ReqEvalError
from .judge import (
    Decision,
    JudgeConfig,
    JudgeReport,
    OpenAICompatBackend,
    RuleOracleBackend,
    Setting,
    UsageLedger,
    Verdict,
    ask,
    judge_requirement,
    judge_task,
)
from .tasks import (
    ConstraintSet,
    Preference,
    Requirement,
    Task,
    extend_query,
    parse_task,
    serialize_task,
    topological_order,
    validate_dag,
)
from .trajectory import (
    Cut,
    Trajectory,
    TruncationStrategy,
    detect_self_termination,
    parse_trajectory,
    reconcile_usage,
    serialize_trajectory,
    truncate,
)
from .workspace import WorkspaceGraph, build_graph, chunk_code, workspace_stats

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet",
    "Cut",
    "Decision",
    "JudgeConfig",
    "JudgeReport",
    "OpenAICompatBackend",
    "Preference",
    "ReqEvalError",
    "Requirement",
    "RuleOracleBackend",
    "Setting",
    "Task",
    "Trajectory",
    "TruncationStrategy",
    "UsageLedger",
    "Verdict",
    "WorkspaceGraph",
    "ask",
    "build_graph",
    "chunk_code",
    "detect_self_termination",
    "extend_query",
    "judge_requirement",
    "judge_task",
    "parse_task",
    "parse_trajectory",
    "reconcile_usage",
    "serialize_task",
    "serialize_trajectory",
    "topological_order",
    "truncate",
    "validate_dag",
    "workspace_stats",
]
