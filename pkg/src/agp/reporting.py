"""Per-student Markdown reports and the class-wide grade CSV."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

from .feedback import FeedbackRecord
from .models import AssignmentConfig, Submission
from .sandbox import DynamicReport, ExecStatus
from .static_analysis import StaticReport

FEEDBACK_PENDING_NOTE = "Feedback pending instructor review."


@dataclass(frozen=True)
class GradedSubmission:
    """Everything one pipeline run produced for a single student."""

    submission: Submission
    assignment: AssignmentConfig
    static_report: StaticReport | None
    dynamic_report: DynamicReport
    feedback: FeedbackRecord | None = None


def render_student_report(
    submission: Submission,
    static_rep: StaticReport | None,
    dyn: DynamicReport,
    feedback: FeedbackRecord | None,
    assignment: AssignmentConfig,
) -> str:
    """Markdown report: header, static analysis, test-by-test table with
    failure details, then feedback (only once instructor-approved)."""
    lines: list[str] = [
        f"# Report: {submission.student_id}",
        "",
        f"- Assignment: {assignment.id}",
        f"- Tier: **{dyn.tier.value}**",
        f"- Tests passed: {dyn.passed_count}/{dyn.total_count}",
        "",
        "## Static analysis",
        "",
    ]
    if static_rep is None:
        lines.append("Static analysis unavailable for this language.")
    elif not static_rep.syntax_ok:
        lines.append("Syntax check failed:")
        lines.extend(f"- {v.detail}" for v in static_rep.violations)
    else:
        lines.append("- Syntax: OK")
        lines.append(f"- Loops: {static_rep.loop_count}")
        lines.append(f"- Functions defined: {', '.join(static_rep.function_defs) or 'none'}")
        if static_rep.violations:
            lines.append("- Constraint violations:")
            lines.extend(f"  - {v.kind.value}: {v.detail}" for v in static_rep.violations)
        else:
            lines.append("- Constraint violations: none")

    lines += ["", "## Test results", "", "| Test | Status |", "|------|--------|"]
    for outcome in dyn.outcomes:
        lines.append(f"| {outcome.test_id} | {outcome.status.value} |")
    tests_by_id = {t.id: t for t in assignment.test_cases}
    failures = [o for o in dyn.outcomes if o.status is not ExecStatus.PASSED]
    for outcome in failures:
        test = tests_by_id.get(outcome.test_id)
        lines += ["", f"### Failure detail: {outcome.test_id}", ""]
        if test is not None:
            lines.append(f"- stdin: `{test.stdin!r}`")
            lines.append(f"- expected: `{test.expected_stdout!r}`")
        lines.append(f"- actual stdout: `{outcome.stdout!r}`")
        if outcome.stderr:
            lines.append(f"- stderr: `{outcome.stderr!r}`")

    lines += ["", "## Feedback", ""]
    if feedback is None:
        lines.append("No feedback was generated for this submission.")
    elif feedback.releasable:
        lines.append(feedback.released_text)
    else:
        lines.append(FEEDBACK_PENDING_NOTE)
    return "\n".join(lines) + "\n"


def render_class_csv(results: list[GradedSubmission]) -> str:
    """Class summary: one row per student, sorted by student id, RFC-4180
    quoting, scores fixed at 4 decimal places."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["student_id", "assignment_id", "passed", "total", "weighted_score", "tier", "static_violations"]
    )
    for graded in sorted(results, key=lambda g: g.submission.student_id):
        dyn = graded.dynamic_report
        writer.writerow(
            [
                graded.submission.student_id,
                graded.submission.assignment_id,
                dyn.passed_count,
                dyn.total_count,
                f"{weighted_score(graded):.4f}",
                dyn.tier.value,
                len(graded.static_report.violations) if graded.static_report else 0,
            ]
        )
    return buffer.getvalue()


def weighted_score(graded: GradedSubmission) -> float:
    """Fraction of total test weight earned by passing tests."""
    weights = {t.id: t.weight for t in graded.assignment.test_cases}
    total = sum(weights.get(o.test_id, Fraction(1)) for o in graded.dynamic_report.outcomes)
    if total == 0:
        return 0.0
    earned = sum(
        weights.get(o.test_id, Fraction(1))
        for o in graded.dynamic_report.outcomes
        if o.status is ExecStatus.PASSED
    )
    return float(Fraction(earned) / Fraction(total))
