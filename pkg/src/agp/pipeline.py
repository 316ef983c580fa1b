"""End-to-end grading orchestration: ingest, static analysis, sandboxed
execution, embedding, prompt selection, feedback generation, and artifact
writing. Used by both the CLI and the HTTP service."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .contrastive import ProjectionHead
from .embeddings import EmbeddingProvider, EmbeddingVector, embed_texts
from .errors import AgpError, UnsupportedLanguage
from .feedback import FeedbackRecord, build_request, generate_feedback
from .models import AssignmentConfig, PerformanceTier, Submission, ingest_submissions
from .projection import ProjectionConfig, project_cohort, projection_to_json_dict
from .prompt_pool import PromptPool, select_prompt
from .reporting import GradedSubmission, render_class_csv, render_student_report
from .sandbox import DynamicReport, ExecStatus, ExecutionOutcome, run_all_tests
from .static_analysis import StaticReport, analyze
from .store import feedback_record_id, record_to_json_dict


FEEDBACK_PARALLELISM = 2


@dataclass
class PipelineOptions:
    parallelism: int = 1
    seed: int = 42
    generate_feedback: bool = True
    include_question: bool = True
    feedback_endpoint: str | None = None
    feedback_model: str = "default"
    sandbox_backend: str | None = None


@dataclass
class PipelineResult:
    graded: list[GradedSubmission]
    skipped: list[str]
    errors: list[str]


def _skipped_dynamic_report(config: AssignmentConfig, reason: str) -> DynamicReport:
    """Dynamic report for submissions gated out before execution (syntax errors)."""
    outcomes = tuple(
        ExecutionOutcome(
            test_id=test.id,
            status=ExecStatus.RUNTIME_ERROR,
            stdout="",
            stderr=f"not executed: {reason}",
            exit_code=None,
            wall_ms=0,
        )
        for test in config.test_cases
    )
    return DynamicReport(
        outcomes=outcomes,
        passed_count=0,
        total_count=len(outcomes),
        tier=PerformanceTier.FAIL,
    )


def grade_submission(
    submission: Submission,
    config: AssignmentConfig,
    options: PipelineOptions,
) -> tuple[StaticReport | None, DynamicReport]:
    """Static analysis gate, then sandboxed execution of every test."""
    static_report: StaticReport | None
    try:
        static_report = analyze(submission, config.constraints, config.language)
    except UnsupportedLanguage:
        static_report = None
    if static_report is not None and not static_report.syntax_ok:
        return static_report, _skipped_dynamic_report(config, "syntax error")
    dynamic = run_all_tests(
        submission, config, parallelism=options.parallelism, backend=options.sandbox_backend
    )
    return static_report, dynamic


def run_grading(
    config: AssignmentConfig,
    submissions_dir: Path | str,
    provider: EmbeddingProvider,
    pool: PromptPool | None,
    options: PipelineOptions,
) -> tuple[PipelineResult, list[EmbeddingVector]]:
    """Grade every submission in a directory and embed each source."""
    submissions, skipped = ingest_submissions(submissions_dir, config)
    errors = list(skipped)
    graded: list[GradedSubmission] = []
    embeddings: list[EmbeddingVector] = []
    if not submissions:
        return PipelineResult(graded, skipped, errors), embeddings

    reports = [grade_submission(sub, config, options) for sub in submissions]
    code_vectors = embed_texts(provider, [sub.source_text for sub in submissions])

    requests_to_send = []
    for submission, (static_report, dynamic), code_vec in zip(submissions, reports, code_vectors):
        selected = None
        score = 0.0
        if pool is not None:
            selected, score = select_prompt(code_vec, pool)
        record: FeedbackRecord | None = None
        if options.generate_feedback and options.feedback_endpoint:
            request = build_request(
                submission,
                dynamic,
                static_report,
                selected,
                config,
                include_question=options.include_question,
                model=options.feedback_model,
            )
            requests_to_send.append(
                (len(graded), request, submission, selected, score)
            )
        graded.append(
            GradedSubmission(
                submission=submission,
                assignment=config,
                static_report=static_report,
                dynamic_report=dynamic,
                feedback=record,
            )
        )
        embeddings.append(code_vec)

    if requests_to_send:
        def send(entry):
            index, request, submission, selected, score = entry
            try:
                return index, generate_feedback(
                    request,
                    options.feedback_endpoint,
                    submission_ref=(submission.student_id, submission.assignment_id),
                    prompt_used=(selected.id, score) if selected else None,
                )
            except AgpError as exc:
                return index, exc

        with ThreadPoolExecutor(max_workers=FEEDBACK_PARALLELISM) as pool_exec:
            for index, outcome in pool_exec.map(send, requests_to_send):
                if isinstance(outcome, AgpError):
                    errors.append(
                        f"{graded[index].submission.student_id}: feedback generation failed: {outcome}"
                    )
                else:
                    graded[index] = GradedSubmission(
                        submission=graded[index].submission,
                        assignment=graded[index].assignment,
                        static_report=graded[index].static_report,
                        dynamic_report=graded[index].dynamic_report,
                        feedback=outcome,
                    )

    return PipelineResult(graded, skipped, errors), embeddings


def dataset_jsonl_lines(graded: list[GradedSubmission], embeddings: list[EmbeddingVector]) -> list[str]:
    lines = []
    for item, vec in zip(graded, embeddings):
        lines.append(
            json.dumps(
                {
                    "student_id": item.submission.student_id,
                    "problem_id": item.assignment.id,
                    "tier": item.dynamic_report.tier.value,
                    "embedding": vec.values.tolist(),
                },
                sort_keys=True,
            )
        )
    return lines


def write_outputs(
    out_dir: Path | str,
    result: PipelineResult,
    embeddings: list[EmbeddingVector],
    config: AssignmentConfig,
    seed: int,
    head: ProjectionHead | None = None,
) -> None:
    """Write per-student reports, the class CSV, the embedding dataset, the
    2D projection (when the cohort is large enough), and feedback records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for item in result.graded:
        report = render_student_report(
            item.submission, item.static_report, item.dynamic_report, item.feedback, config
        )
        (out / f"{item.submission.student_id}.md").write_text(report, encoding="utf-8")
    (out / "class_summary.csv").write_text(render_class_csv(result.graded), encoding="utf-8")
    lines = dataset_jsonl_lines(result.graded, embeddings)
    (out / "dataset.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    cohort = [
        (item.submission.student_id, config.id, item.dynamic_report.tier, vec)
        for item, vec in zip(result.graded, embeddings)
    ]
    if head is not None:
        cohort = [
            (sid, pid, tier, _project_vec(head, vec)) for sid, pid, tier, vec in cohort
        ]
    if len(cohort) >= 3:
        proj_config = ProjectionConfig(k=min(15, len(cohort) - 1), seed=seed)
        points = project_cohort(cohort, proj_config)
        payload = projection_to_json_dict(config.id, points, proj_config)
        (out / "projection.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    else:
        result.errors.append(f"projection skipped: cohort of {len(cohort)} is too small")

    feedback_dir = out / "feedback"
    for item in result.graded:
        if item.feedback is not None:
            feedback_dir.mkdir(exist_ok=True)
            record_id = feedback_record_id(config.id, item.submission.student_id)
            (feedback_dir / f"{record_id}.json").write_text(
                json.dumps(record_to_json_dict(record_id, item.feedback), indent=2, sort_keys=True)
                + "\n",
                encoding="utf-8",
            )


def _project_vec(head: ProjectionHead, vec: EmbeddingVector) -> EmbeddingVector:
    projected = head.project(vec.values)[0]
    return EmbeddingVector(values=projected, dim=head.d_out, normalized=True)
