"""Command-line surface: validate documents, run batch judging, compute stats.

Exit codes: 0 success, 1 validation/domain error, 2 configuration error,
3 backend failure.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import metrics as m
from .errors import BackendUnavailable, ReqEvalError
from .judge import (
    JudgeConfig,
    JudgeReport,
    OpenAICompatBackend,
    RuleOracleBackend,
    Setting,
    apply_verdicts,
    judge_task,
)
from .tasks import Task, parse_task, serialize_task
from .trajectory import (
    Cut,
    Trajectory,
    TruncationStrategy,
    parse_trajectory,
    reconcile_usage,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3


@click.group()
def main() -> None:
    """Judge code-generating agents against requirement DAGs."""


@main.command("validate")
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(exists=False, path_type=Path))
def cmd_validate(paths: tuple[Path, ...]) -> None:
    """Validate task and trajectory files; print the first error per file."""
    failures = 0
    for path in paths:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            click.echo(f"{path}: unreadable ({exc})")
            failures += 1
            continue
        try:
            _validate_document(text)
        except ReqEvalError as exc:
            click.echo(f"{path}: {type(exc).__name__}: {exc}")
            failures += 1
            continue
        click.echo(f"{path}: ok")
    sys.exit(EXIT_DOMAIN if failures else EXIT_OK)


def _validate_document(text: str) -> None:
    stripped = text.lstrip()
    if stripped.startswith("["):
        trajectory = parse_trajectory(text)
        reconcile_usage(trajectory)
    else:
        parse_task(text)


def _parse_truncate_spec(spec: str) -> TruncationStrategy:
    try:
        traj_cut, step_cut, budget = spec.split(":")
        return TruncationStrategy(
            trajectory_cut=Cut(traj_cut.lower()),
            step_cut=Cut(step_cut.lower()),
            budget=int(budget),
        )
    except (ValueError, KeyError) as exc:
        raise click.UsageError(
            f"bad --truncate spec {spec!r}; expected <traj>:<step>:<budget> "
            "with cuts from head|middle|tail|none"
        ) from exc


def _build_backend(backend: str, endpoint: str | None, model: str | None,
                   rules: Path | None):
    if backend == "oracle":
        if rules is not None:
            return RuleOracleBackend.from_rule_file(rules)
        return RuleOracleBackend()
    if backend == "openai-compat":
        if not endpoint or not model:
            raise click.UsageError("--backend openai-compat needs --endpoint and --model")
        return OpenAICompatBackend(endpoint=endpoint, model=model)
    raise click.UsageError(f"unknown backend {backend!r}")


def _report_document(task: Task, report: JudgeReport) -> str:
    judged = apply_verdicts(task, report)
    doc = json.loads(serialize_task(judged))
    doc["judge"] = {
        "verdicts": [
            {
                "requirement_id": v.requirement_id,
                "decision": v.decision.value,
                "confidence": v.confidence,
                "justification": v.justification,
                "evidence_used": list(v.evidence_used),
            }
            for v in report.verdicts
        ],
        "usage": {
            "input_tokens": report.usage.input_tokens,
            "output_tokens": report.usage.output_tokens,
            "cost": report.usage.cost,
            "wall_time": report.usage.wall_time,
        },
        "config": {
            "setting": report.config.setting.value,
            "modules": sorted(report.config.enabled_modules),
        },
    }
    return json.dumps(doc, indent=4, ensure_ascii=False) + "\n"


@main.command("judge")
@click.argument("manifest", type=click.Path(exists=True, path_type=Path))
@click.option("--setting", type=click.Choice(["black", "gray"]), default=None)
@click.option("--modules", default=None, help="Comma list of evidence modules.")
@click.option("--truncate", "truncate_spec", default=None,
              help="<traj>:<step>:<budget> with cuts head|middle|tail|none.")
@click.option("--backend", "backend_name",
              type=click.Choice(["openai-compat", "oracle"]), default=None)
@click.option("--endpoint", default=None)
@click.option("--model", default=None)
@click.option("--rules", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--output", "output_dir", type=click.Path(path_type=Path), default=None)
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_judge(
    manifest: Path,
    setting: str | None,
    modules: str | None,
    truncate_spec: str | None,
    backend_name: str | None,
    endpoint: str | None,
    model: str | None,
    rules: Path | None,
    jobs: int,
    output_dir: Path | None,
    figures: bool,
) -> None:
    """Judge every task in a run manifest; write one report per task plus an
    aggregate summary."""
    try:
        spec = json.loads(manifest.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"cannot read manifest: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    base = manifest.parent
    task_paths = [base / p for p in spec.get("tasks", [])]
    if not task_paths:
        click.echo("manifest lists no tasks", err=True)
        sys.exit(EXIT_CONFIG)

    setting_name = setting or spec.get("setting", "black")
    config_setting = Setting.GRAY_BOX if setting_name == "gray" else Setting.BLACK_BOX
    module_list = (
        [p.strip() for p in modules.split(",") if p.strip()]
        if modules
        else spec.get("modules")
    )
    truncation = _parse_truncate_spec(truncate_spec or spec["truncate"]) \
        if (truncate_spec or spec.get("truncate")) else TruncationStrategy()
    try:
        if module_list:
            config = JudgeConfig(
                setting=config_setting,
                enabled_modules=frozenset(m for m in module_list if m != "ask"),
                truncation=truncation,
            )
        else:
            base_config = JudgeConfig.default(config_setting)
            config = JudgeConfig(
                setting=config_setting,
                enabled_modules=base_config.enabled_modules,
                truncation=truncation,
            )
    except ValueError as exc:
        click.echo(f"bad module configuration: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    backend_kind = backend_name or spec.get("backend", "oracle")
    rules_path = rules or (base / spec["rules"] if spec.get("rules") else None)
    out = output_dir or base / spec.get("output_dir", "reports")
    out.mkdir(parents=True, exist_ok=True)

    workspace_pattern = spec.get("workspace_root", "{task}")
    trajectory_pattern = spec.get("trajectory_root")

    def run_one(task_path: Path) -> tuple[Task | None, JudgeReport | None, str | None]:
        try:
            task = parse_task(task_path.read_text(encoding="utf-8"))
        except (OSError, ReqEvalError) as exc:
            return None, None, f"{task_path}: {type(exc).__name__}: {exc}"
        workspace = base / workspace_pattern.format(task=task.name)
        trajectory: Trajectory | None = None
        if trajectory_pattern:
            traj_path = base / trajectory_pattern.format(task=task.name)
            try:
                trajectory = parse_trajectory(traj_path.read_text(encoding="utf-8"))
            except (OSError, ReqEvalError) as exc:
                return task, None, f"{task.name}: trajectory unusable: {exc}"
        elif config_setting is Setting.GRAY_BOX:
            return task, None, f"{task.name}: gray-box run without a trajectory"
        try:
            backend = _build_backend(backend_kind, endpoint, model, rules_path)
            report = judge_task(task, workspace, trajectory, config, backend)
        except BackendUnavailable as exc:
            return task, None, f"{task.name}: backend unavailable: {exc}"
        except ReqEvalError as exc:
            return task, None, f"{task.name}: {type(exc).__name__}: {exc}"
        return task, report, None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, task_paths))
    else:
        results = [run_one(p) for p in task_paths]

    tasks: list[Task] = []
    entries: dict[m.Key, bool] = {}
    summary_rows = []
    failures: list[str] = []
    backend_down = False
    total_usage = {"input_tokens": 0, "output_tokens": 0, "cost": 0.0, "wall_time": 0.0}

    for task, report, error in results:
        if error is not None:
            failures.append(error)
            backend_down = backend_down or "backend unavailable" in error
            continue
        assert task is not None and report is not None
        (out / f"{task.name}.json").write_text(
            _report_document(task, report), encoding="utf-8"
        )
        tasks.append(task)
        for v in report.verdicts:
            entries[(task.name, v.requirement_id)] = v.is_satisfied()
        total_usage["input_tokens"] += report.usage.input_tokens
        total_usage["output_tokens"] += report.usage.output_tokens
        total_usage["cost"] += report.usage.cost
        total_usage["wall_time"] += report.usage.wall_time

    per_task: dict[str, tuple[float, float]] = {}
    summary: dict[str, object] = {"tasks_judged": len(tasks), "failures": failures,
                                  "usage": total_usage}
    if entries:
        vector = m.VerdictVector(entries=entries)
        summary["requirements_met_independent"] = m.requirements_met_independent(vector)
        summary["requirements_met_dependent"] = m.requirements_met_dependent(tasks, vector)
        summary["task_solve_rate"] = m.task_solve_rate(tasks, vector)
        for task in tasks:
            sub = m.VerdictVector(entries={
                key: value for key, value in entries.items() if key[0] == task.name
            })
            per_task[task.name] = (
                m.requirements_met_independent(sub),
                m.requirements_met_dependent([task], sub),
            )
        summary["per_task"] = {
            name: {"independent": i, "dependent": d}
            for name, (i, d) in per_task.items()
        }
        (out / "verdicts.csv").write_text(
            m.vector_to_csv("judge", vector), encoding="utf-8"
        )

    (out / "summary.json").write_text(
        json.dumps(summary, indent=4, sort_keys=True) + "\n", encoding="utf-8"
    )
    if figures and per_task:
        from .plots import plot_requirements_met

        plot_requirements_met(per_task, out / "requirements_met.png")

    for line in failures:
        click.echo(line, err=True)
    click.echo(f"judged {len(tasks)}/{len(task_paths)} tasks -> {out}")
    if failures:
        sys.exit(EXIT_BACKEND if backend_down else EXIT_DOMAIN)
    sys.exit(EXIT_OK)


@main.command("stats")
@click.argument("matrix_files", nargs=-1, required=True,
                type=click.Path(exists=True, path_type=Path))
@click.option("--consensus", required=True,
              help="Judge label inside the matrices, or a CSV file of consensus verdicts.")
@click.option("--output", "output_dir", type=click.Path(path_type=Path),
              default=Path("stats"), show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_stats(matrix_files: tuple[Path, ...], consensus: str,
              output_dir: Path, figures: bool) -> None:
    """Agreement statistics across judges: alignment, shift, disagreement,
    majority vote, PR curves (CSV plus figure)."""
    matrix = m.VerdictMatrix()
    try:
        for path in matrix_files:
            part = m.parse_matrix_csv(path.read_text(encoding="utf-8"))
            for judge in part.judges:
                matrix.add(judge, part.vectors[judge])
    except (OSError, ReqEvalError, ValueError) as exc:
        click.echo(f"cannot read matrices: {exc}", err=True)
        sys.exit(EXIT_DOMAIN)

    consensus_path = Path(consensus)
    if consensus in matrix.vectors:
        consensus_vector = matrix.vectors[consensus]
        judge_labels = [j for j in matrix.judges if j != consensus]
    elif consensus_path.exists():
        try:
            part = m.parse_matrix_csv(consensus_path.read_text(encoding="utf-8"))
            consensus_vector = part.vectors[part.judges[0]]
        except (OSError, ReqEvalError, ValueError, IndexError) as exc:
            click.echo(f"cannot read consensus file: {exc}", err=True)
            sys.exit(EXIT_DOMAIN)
        judge_labels = list(matrix.judges)
    else:
        click.echo(f"consensus {consensus!r} is neither a judge label nor a file",
                   err=True)
        sys.exit(EXIT_DOMAIN)

    output_dir.mkdir(parents=True, exist_ok=True)
    report: dict[str, object] = {"judges": judge_labels}
    curves: dict[str, tuple[list[m.PRPoint], float]] = {}
    try:
        consensus_i = m.requirements_met_independent(consensus_vector)
        alignment = {}
        shift = {}
        for judge in judge_labels:
            vector = matrix.vectors[judge]
            alignment[judge] = m.alignment_rate(vector, consensus_vector)
            shift[judge] = m.judge_shift(
                m.requirements_met_independent(vector), consensus_i
            )
            items = [
                (1.0 if vector.entries[key] else 0.0, consensus_vector.entries[key])
                for key in sorted(vector.entries)
            ]
            points, ap = m.pr_curve(items)
            curves[judge] = (points, ap)
            (output_dir / f"pr_{judge}.csv").write_text(
                m.pr_points_to_csv(points), encoding="utf-8"
            )
        report["alignment_rate"] = alignment
        report["judge_shift_pp"] = shift
        report["average_precision"] = {j: curves[j][1] for j in curves}

        disagreement = {}
        for i, a in enumerate(judge_labels):
            for b in judge_labels[i + 1:]:
                disagreement[f"{a}|{b}"] = m.disagreement_rate(
                    matrix.vectors[a], matrix.vectors[b]
                )
        report["disagreement_rate"] = disagreement

        if len(judge_labels) >= 2:
            vote_matrix = m.VerdictMatrix()
            for judge in judge_labels:
                vote_matrix.add(judge, matrix.vectors[judge])
            vote = m.majority_vote(vote_matrix)
            (output_dir / "majority_vote.csv").write_text(
                m.vector_to_csv("majority", vote), encoding="utf-8"
            )
            report["majority_vote_alignment"] = m.alignment_rate(vote, consensus_vector)
    except ReqEvalError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_DOMAIN)

    (output_dir / "report.json").write_text(
        json.dumps(report, indent=4, sort_keys=True) + "\n", encoding="utf-8"
    )
    if figures and curves:
        from .plots import plot_pr_curves

        plot_pr_curves(curves, output_dir / "pr_curves.png")

    for judge in judge_labels:
        click.echo(
            f"{judge}: alignment {report['alignment_rate'][judge]:.2%}, "  # type: ignore[index]
            f"shift {report['judge_shift_pp'][judge]:.2f}pp"  # type: ignore[index]
        )
    click.echo(f"stats written to {output_dir}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
