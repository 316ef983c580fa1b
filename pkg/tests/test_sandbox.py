import time
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from agp.models import (
    AssignmentConfig,
    ConstraintSet,
    PerformanceTier,
    Submission,
    TestCase,
)
from agp.sandbox import (
    ExecStatus,
    compare_output,
    run_all_tests,
    run_test_case,
)

ECHO_SOURCE = "import sys\nsys.stdout.write(sys.stdin.read().strip())\n"


def make_assignment(tests: list[TestCase], entry=("python3", "{file}")) -> AssignmentConfig:
    return AssignmentConfig(
        id="sandboxed",
        language="python",
        problem_description="echo",
        entry_command=tuple(entry),
        constraints=ConstraintSet(),
        test_cases=tuple(tests),
    )


def make_submission(source: str) -> Submission:
    return Submission(
        student_id="s1",
        assignment_id="sandboxed",
        source_path=Path("s1.py"),
        source_text=source,
        received_at=0.0,
    )


class TestCompareOutput:
    def test_trailing_newline_normalized(self):
        assert compare_output("5\n", "5")

    def test_trailing_spaces_normalized(self):
        assert compare_output("a \nb", "a\nb")

    def test_case_sensitive(self):
        assert not compare_output("Hello", "hello")

    def test_crlf_normalized(self):
        assert compare_output("a\r\nb\r\n", "a\nb")

    @given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80))
    def test_reflexive_and_newline_invariant(self, text):
        assert compare_output(text, text)
        assert compare_output(text + "\n", text)
        assert compare_output(text, text + "\n")


class TestRunTestCase:
    def test_echo_passes(self):
        test = TestCase(id="t", stdin="5", expected_stdout="5")
        outcome = run_test_case(make_submission(ECHO_SOURCE), test, make_assignment([test]))
        assert outcome.status is ExecStatus.PASSED
        assert outcome.exit_code == 0

    def test_infinite_loop_times_out(self):
        test = TestCase(id="t", stdin="", expected_stdout="", timeout_ms=1000)
        start = time.monotonic()
        outcome = run_test_case(
            make_submission("while True:\n    pass\n"), test, make_assignment([test])
        )
        elapsed = time.monotonic() - start
        assert outcome.status is ExecStatus.TIMEOUT
        assert 1000 <= outcome.wall_ms <= 1500
        assert elapsed < 2.5

    def test_sleeping_program_hits_wall_clock_watchdog(self):
        # a blocked (non-CPU-burning) program must still be cut off on wall time
        test = TestCase(id="t", stdin="", expected_stdout="", timeout_ms=500)
        start = time.monotonic()
        outcome = run_test_case(
            make_submission("import time\ntime.sleep(10)\n"), test, make_assignment([test])
        )
        elapsed = time.monotonic() - start
        assert outcome.status is ExecStatus.TIMEOUT
        assert elapsed < 1.5

    def test_wrong_output_keeps_stdout(self):
        test = TestCase(id="t", stdin="", expected_stdout="5")
        outcome = run_test_case(
            make_submission("print(4)"), test, make_assignment([test])
        )
        assert outcome.status is ExecStatus.WRONG_OUTPUT
        assert outcome.stdout.strip() == "4"

    def test_runtime_error_classified(self):
        test = TestCase(id="t", stdin="", expected_stdout="")
        outcome = run_test_case(
            make_submission("raise ValueError('boom')"), test, make_assignment([test])
        )
        assert outcome.status is ExecStatus.RUNTIME_ERROR
        assert outcome.exit_code != 0
        assert "ValueError" in outcome.stderr

    def test_memory_exceeded_classified(self):
        test = TestCase(id="t", stdin="", expected_stdout="", memory_mb=64, timeout_ms=10000)
        outcome = run_test_case(
            make_submission("x = bytearray(512 * 1024 * 1024)\nprint('ok')"),
            test,
            make_assignment([test]),
        )
        assert outcome.status is ExecStatus.MEMORY_EXCEEDED

    def test_missing_interpreter_is_sandbox_error(self):
        test = TestCase(id="t", stdin="", expected_stdout="")
        assignment = make_assignment([test], entry=("nonexistent-interpreter-xyz", "{file}"))
        outcome = run_test_case(make_submission("print(1)"), test, assignment)
        assert outcome.status is ExecStatus.SANDBOX_ERROR

    def test_scratch_paths_masked_in_streams(self):
        test = TestCase(id="t", stdin="", expected_stdout="")
        outcome = run_test_case(
            make_submission("import os\nraise RuntimeError(os.getcwd())"),
            test,
            make_assignment([test]),
        )
        assert "agp-sandbox-" not in outcome.stderr
        assert "<sandbox>" in outcome.stderr

    def test_stdout_truncated_at_cap(self):
        source = "import sys\nsys.stdout.write('x' * (2 * 1024 * 1024))\n"
        test = TestCase(id="t", stdin="", expected_stdout="", timeout_ms=20000)
        outcome = run_test_case(make_submission(source), test, make_assignment([test]))
        assert len(outcome.stdout) == 1 << 20
        assert "truncated" in outcome.stderr


C_DOUBLER = (
    "#include <stdio.h>\n"
    "int main(void) {\n"
    "    int x;\n"
    "    if (scanf(\"%d\", &x) == 1) printf(\"%d\\n\", x * 2);\n"
    "    return 0;\n"
    "}\n"
)


class TestCompiledLanguage:
    def test_c_compile_and_run_via_entry_command(self):
        test = TestCase(id="t", stdin="21\n", expected_stdout="42\n", memory_mb=1024)
        assignment = AssignmentConfig(
            id="c-task",
            language="c",
            problem_description="double it",
            entry_command=("bash", "-c", "gcc {file} -o prog && ./prog"),
            constraints=ConstraintSet(),
            test_cases=(test,),
        )
        submission = Submission(
            student_id="s1",
            assignment_id="c-task",
            source_path=Path("s1.c"),
            source_text=C_DOUBLER,
            received_at=0.0,
        )
        outcome = run_test_case(submission, test, assignment)
        assert outcome.status is ExecStatus.PASSED, outcome

    def test_c_compile_failure_is_runtime_error(self):
        test = TestCase(id="t", stdin="", expected_stdout="", memory_mb=1024)
        assignment = AssignmentConfig(
            id="c-task",
            language="c",
            problem_description="broken",
            entry_command=("bash", "-c", "gcc {file} -o prog && ./prog"),
            constraints=ConstraintSet(),
            test_cases=(test,),
        )
        submission = Submission(
            student_id="s1",
            assignment_id="c-task",
            source_path=Path("s1.c"),
            source_text="int main( {",
            received_at=0.0,
        )
        outcome = run_test_case(submission, test, assignment)
        assert outcome.status is ExecStatus.RUNTIME_ERROR
        assert outcome.exit_code != 0


class TestIsolation:
    def test_file_artifacts_do_not_leak_between_tests(self):
        writer_then_checker = (
            "import os, sys\n"
            "if os.path.exists('marker.txt'):\n"
            "    print('LEAKED')\n"
            "else:\n"
            "    open('marker.txt', 'w').write('x')\n"
            "    print('CLEAN')\n"
        )
        tests = [
            TestCase(id=f"t{i}", stdin="", expected_stdout="CLEAN") for i in range(3)
        ]
        report = run_all_tests(make_submission(writer_then_checker), make_assignment(tests))
        assert report.passed_count == 3


class TestRunAllTests:
    def test_six_of_seven_partial(self):
        tests = [
            TestCase(id=f"t{i}", stdin=str(i), expected_stdout=str(i) if i < 6 else "nope")
            for i in range(7)
        ]
        report = run_all_tests(make_submission(ECHO_SOURCE), make_assignment(tests))
        assert report.passed_count == 6
        assert report.total_count == 7
        assert report.tier is PerformanceTier.PARTIAL

    def test_zero_of_four_fail(self):
        tests = [
            TestCase(id=f"t{i}", stdin=str(i), expected_stdout="unreachable") for i in range(4)
        ]
        report = run_all_tests(make_submission(ECHO_SOURCE), make_assignment(tests))
        assert report.passed_count == 0
        assert report.tier is PerformanceTier.FAIL

    def test_parallelism_preserves_order_and_result(self):
        tests = [TestCase(id=f"t{i}", stdin=str(i), expected_stdout=str(i)) for i in range(6)]
        assignment = make_assignment(tests)
        serial = run_all_tests(make_submission(ECHO_SOURCE), assignment, parallelism=1)
        parallel = run_all_tests(make_submission(ECHO_SOURCE), assignment, parallelism=4)
        assert [o.test_id for o in serial.outcomes] == [f"t{i}" for i in range(6)]
        assert [(o.test_id, o.status, o.stdout) for o in serial.outcomes] == [
            (o.test_id, o.status, o.stdout) for o in parallel.outcomes
        ]

    def test_sandbox_error_does_not_abort_other_tests(self):
        tests = [TestCase(id=f"t{i}", stdin="1", expected_stdout="1") for i in range(3)]
        assignment = make_assignment(tests)
        report = run_all_tests(make_submission(ECHO_SOURCE), assignment, backend="bogus")
        assert all(o.status is ExecStatus.SANDBOX_ERROR for o in report.outcomes)
        assert report.total_count == 3

    def test_parallelism_must_be_positive(self):
        tests = [TestCase(id="t", stdin="", expected_stdout="")]
        with pytest.raises(ValueError):
            run_all_tests(make_submission(ECHO_SOURCE), make_assignment(tests), parallelism=0)
