import csv
import io
from pathlib import Path

from agp.feedback import FeedbackRecord, ReviewState
from agp.models import load_assignment_config, Submission
from agp.pipeline import PipelineOptions, grade_submission
from agp.reporting import (
    FEEDBACK_PENDING_NOTE,
    GradedSubmission,
    render_class_csv,
    render_student_report,
    weighted_score,
)


def grade(sample_dir, student: str):
    config = load_assignment_config(sample_dir / "assignment.json")
    path = sample_dir / "submissions" / f"{student}.py"
    submission = Submission(
        student_id=student,
        assignment_id=config.id,
        source_path=path,
        source_text=path.read_text(),
        received_at=0.0,
    )
    static_rep, dyn = grade_submission(submission, config, PipelineOptions())
    return config, submission, static_rep, dyn


def record(state: ReviewState, editor_text=None) -> FeedbackRecord:
    return FeedbackRecord(
        submission_ref=("bob", "fibonacci"),
        prompt_used=("loops", 0.4),
        raw_response="<output>model text</output>",
        extracted="model text",
        state=state,
        editor_text=editor_text,
        reviewed_by="ta" if state is not ReviewState.GENERATED else None,
    )


class TestStudentReport:
    def test_partial_run_table_and_failure_block(self, sample_dir):
        config, submission, static_rep, dyn = grade(sample_dir, "bob")
        report = render_student_report(submission, static_rep, dyn, None, config)
        table_rows = [line for line in report.splitlines() if line.startswith("| t")]
        assert len(table_rows) == 7
        assert report.count("### Failure detail") == 1
        assert "PARTIAL" in report
        assert "6/7" in report

    def test_generated_feedback_gated(self, sample_dir):
        config, submission, static_rep, dyn = grade(sample_dir, "bob")
        report = render_student_report(
            submission, static_rep, dyn, record(ReviewState.GENERATED), config
        )
        assert FEEDBACK_PENDING_NOTE in report
        assert "model text" not in report

    def test_approved_feedback_released(self, sample_dir):
        config, submission, static_rep, dyn = grade(sample_dir, "bob")
        report = render_student_report(
            submission, static_rep, dyn, record(ReviewState.APPROVED), config
        )
        assert "model text" in report

    def test_edited_feedback_uses_editor_text(self, sample_dir):
        config, submission, static_rep, dyn = grade(sample_dir, "bob")
        report = render_student_report(
            submission,
            static_rep,
            dyn,
            record(ReviewState.EDITED, editor_text="instructor wording"),
            config,
        )
        assert "instructor wording" in report
        assert "model text" not in report

    def test_rejected_feedback_not_released(self, sample_dir):
        config, submission, static_rep, dyn = grade(sample_dir, "bob")
        report = render_student_report(
            submission, static_rep, dyn, record(ReviewState.REJECTED), config
        )
        assert "model text" not in report


class TestClassCsv:
    def _graded(self, sample_dir, student):
        config, submission, static_rep, dyn = grade(sample_dir, student)
        return GradedSubmission(
            submission=submission,
            assignment=config,
            static_report=static_rep,
            dynamic_report=dyn,
        )

    def test_three_rows_sorted(self, sample_dir):
        rows = [self._graded(sample_dir, s) for s in ("chloe", "alice", "bob")]
        text = render_class_csv(rows)
        lines = text.strip().split("\n")
        assert len(lines) == 4
        assert lines[0] == (
            "student_id,assignment_id,passed,total,weighted_score,tier,static_violations"
        )
        assert [line.split(",")[0] for line in lines[1:]] == ["alice", "bob", "chloe"]

    def test_weighted_score_uniform_weights(self, sample_dir):
        graded = self._graded(sample_dir, "alice")
        assert weighted_score(graded) == 1.0
        text = render_class_csv([graded])
        assert ",1.0000," in text

    def test_weighted_score_non_uniform_weights(self):
        from fractions import Fraction

        from agp.models import AssignmentConfig, ConstraintSet, TestCase
        from agp.sandbox import DynamicReport, ExecStatus, ExecutionOutcome
        from agp.models import PerformanceTier

        assignment = AssignmentConfig(
            id="weighted",
            language="python",
            problem_description="x",
            entry_command=("python3", "{file}"),
            constraints=ConstraintSet(),
            test_cases=(
                TestCase(id="small", stdin="", expected_stdout="", weight=Fraction(1)),
                TestCase(id="big", stdin="", expected_stdout="", weight=Fraction(3)),
            ),
        )
        outcomes = (
            ExecutionOutcome("small", ExecStatus.WRONG_OUTPUT, "", "", 0, 1),
            ExecutionOutcome("big", ExecStatus.PASSED, "", "", 0, 1),
        )
        graded = GradedSubmission(
            submission=Submission(
                student_id="s1",
                assignment_id="weighted",
                source_path=Path("s1.py"),
                source_text="",
                received_at=0.0,
            ),
            assignment=assignment,
            static_report=None,
            dynamic_report=DynamicReport(
                outcomes=outcomes, passed_count=1, total_count=2, tier=PerformanceTier.PARTIAL
            ),
        )
        assert weighted_score(graded) == 0.75
        assert ",0.7500," in render_class_csv([graded])

    def test_comma_in_student_id_quoted(self, sample_dir):
        graded = self._graded(sample_dir, "alice")
        odd = GradedSubmission(
            submission=Submission(
                student_id='doe, jane "jd"',
                assignment_id=graded.assignment.id,
                source_path=Path("x.py"),
                source_text="",
                received_at=0.0,
            ),
            assignment=graded.assignment,
            static_report=graded.static_report,
            dynamic_report=graded.dynamic_report,
        )
        text = render_class_csv([odd])
        parsed = list(csv.reader(io.StringIO(text)))
        assert parsed[1][0] == 'doe, jane "jd"'

    def test_rerender_byte_identical(self, sample_dir):
        rows = [self._graded(sample_dir, s) for s in ("alice", "bob")]
        assert render_class_csv(rows) == render_class_csv(rows)

    def test_empty_results_header_only(self):
        assert render_class_csv([]).strip().split("\n") == [
            "student_id,assignment_id,passed,total,weighted_score,tier,static_violations"
        ]
