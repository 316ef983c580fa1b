"""Core domain types: assignment configs, submissions, and performance tiers.

All values here are immutable after construction and safe to share across
threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path

from .errors import (
    AmbiguousSubmission,
    DuplicateTestId,
    EmptySubmissionDir,
    InvalidCount,
    MalformedConfig,
)

DEFAULT_TIMEOUT_MS = 5000
DEFAULT_MEMORY_MB = 256

LANGUAGES = ("python", "c", "cpp")

SOURCE_EXTENSIONS = {
    "python": (".py",),
    "c": (".c",),
    "cpp": (".cpp", ".cc", ".cxx"),
}


class PerformanceTier(Enum):
    PASS = "PASS"
    PARTIAL = "PARTIAL"
    FAIL = "FAIL"


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # domain type, not a pytest class

    id: str
    stdin: str
    expected_stdout: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    memory_mb: int = DEFAULT_MEMORY_MB
    weight: Fraction = Fraction(1)

    def __post_init__(self):
        if self.timeout_ms < 1:
            raise MalformedConfig(f"test {self.id!r}: timeout_ms must be >= 1")
        if self.memory_mb < 1:
            raise MalformedConfig(f"test {self.id!r}: memory_mb must be >= 1")
        if self.weight < 0:
            raise MalformedConfig(f"test {self.id!r}: weight must be >= 0")


@dataclass(frozen=True)
class ConstraintSet:
    required_functions: tuple[str, ...] = ()
    forbidden_imports: tuple[str, ...] = ()
    max_loops: int | None = None

    def __post_init__(self):
        if self.max_loops is not None and self.max_loops < 0:
            raise MalformedConfig("constraints.max_loops must be >= 0")


@dataclass(frozen=True)
class AssignmentConfig:
    id: str
    language: str
    problem_description: str
    entry_command: tuple[str, ...]
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    test_cases: tuple[TestCase, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise MalformedConfig("assignment id must be non-empty")
        if self.language not in LANGUAGES:
            raise MalformedConfig(f"language must be one of {LANGUAGES}, got {self.language!r}")
        if not self.test_cases:
            raise MalformedConfig("assignment must define at least one test case")
        seen = set()
        for test in self.test_cases:
            if test.id in seen:
                raise DuplicateTestId(f"duplicate test id {test.id!r}")
            seen.add(test.id)

    def to_json_dict(self) -> dict:
        """Serialize back to the on-disk config schema (round-trip safe)."""
        constraints: dict = {
            "required_functions": list(self.constraints.required_functions),
            "forbidden_imports": list(self.constraints.forbidden_imports),
        }
        if self.constraints.max_loops is not None:
            constraints["max_loops"] = self.constraints.max_loops
        return {
            "id": self.id,
            "language": self.language,
            "problem_description": self.problem_description,
            "entry_command": list(self.entry_command),
            "constraints": constraints,
            "test_cases": [
                {
                    "id": t.id,
                    "stdin": t.stdin,
                    "expected_stdout": t.expected_stdout,
                    "timeout_ms": t.timeout_ms,
                    "memory_mb": t.memory_mb,
                    "weight": _weight_to_json(t.weight),
                }
                for t in self.test_cases
            ],
        }


@dataclass(frozen=True)
class Submission:
    student_id: str
    assignment_id: str
    source_path: Path
    source_text: str
    received_at: float


def _weight_to_json(weight: Fraction) -> int | float:
    if weight.denominator == 1:
        return int(weight)
    return float(weight)


def _expect(mapping: dict, key: str, kind, ctx: str):
    if key not in mapping:
        raise MalformedConfig(f"{ctx}: missing field {key!r}")
    value = mapping[key]
    if not isinstance(value, kind):
        raise MalformedConfig(f"{ctx}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _parse_test_case(raw: dict, index: int) -> TestCase:
    ctx = f"test_cases[{index}]"
    if not isinstance(raw, dict):
        raise MalformedConfig(f"{ctx}: must be an object")
    test_id = _expect(raw, "id", str, ctx)
    stdin = _expect(raw, "stdin", str, ctx)
    expected = _expect(raw, "expected_stdout", str, ctx)
    timeout_ms = raw.get("timeout_ms", DEFAULT_TIMEOUT_MS)
    memory_mb = raw.get("memory_mb", DEFAULT_MEMORY_MB)
    if not isinstance(timeout_ms, int) or isinstance(timeout_ms, bool):
        raise MalformedConfig(f"{ctx}: field 'timeout_ms' must be an integer")
    if not isinstance(memory_mb, int) or isinstance(memory_mb, bool):
        raise MalformedConfig(f"{ctx}: field 'memory_mb' must be an integer")
    weight_raw = raw.get("weight", 1)
    if isinstance(weight_raw, bool) or not isinstance(weight_raw, (int, float)):
        raise MalformedConfig(f"{ctx}: field 'weight' must be a number")
    weight = Fraction(weight_raw).limit_denominator(10**9)
    return TestCase(
        id=test_id,
        stdin=stdin,
        expected_stdout=expected,
        timeout_ms=timeout_ms,
        memory_mb=memory_mb,
        weight=weight,
    )


def _parse_constraints(raw: dict | None) -> ConstraintSet:
    if raw is None:
        return ConstraintSet()
    if not isinstance(raw, dict):
        raise MalformedConfig("constraints: must be an object")
    required = raw.get("required_functions", [])
    forbidden = raw.get("forbidden_imports", [])
    max_loops = raw.get("max_loops")
    if not isinstance(required, list) or not all(isinstance(x, str) for x in required):
        raise MalformedConfig("constraints: field 'required_functions' must be a list of strings")
    if not isinstance(forbidden, list) or not all(isinstance(x, str) for x in forbidden):
        raise MalformedConfig("constraints: field 'forbidden_imports' must be a list of strings")
    if max_loops is not None and (not isinstance(max_loops, int) or isinstance(max_loops, bool)):
        raise MalformedConfig("constraints: field 'max_loops' must be an integer")
    return ConstraintSet(
        required_functions=tuple(required),
        forbidden_imports=tuple(forbidden),
        max_loops=max_loops,
    )


def parse_assignment_config(raw: dict) -> AssignmentConfig:
    """Validate a parsed JSON object against the assignment config schema."""
    if not isinstance(raw, dict):
        raise MalformedConfig("config root must be a JSON object")
    config_id = _expect(raw, "id", str, "config")
    language = _expect(raw, "language", str, "config")
    description = _expect(raw, "problem_description", str, "config")
    entry_command = _expect(raw, "entry_command", list, "config")
    if not entry_command or not all(isinstance(x, str) for x in entry_command):
        raise MalformedConfig("config: field 'entry_command' must be a non-empty list of strings")
    tests_raw = _expect(raw, "test_cases", list, "config")
    tests = tuple(_parse_test_case(t, i) for i, t in enumerate(tests_raw))
    return AssignmentConfig(
        id=config_id,
        language=language,
        problem_description=description,
        entry_command=tuple(entry_command),
        constraints=_parse_constraints(raw.get("constraints")),
        test_cases=tests,
    )


def load_assignment_config(path: Path | str) -> AssignmentConfig:
    """Load and validate an assignment config JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MalformedConfig(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"config is not valid JSON: {exc}") from None
    return parse_assignment_config(raw)


def read_source_text(path: Path) -> str:
    """Read student source as UTF-8, replacing invalid bytes (never raises)."""
    return path.read_bytes().decode("utf-8", errors="replace")


def _candidate_sources(directory: Path, language: str) -> list[Path]:
    exts = SOURCE_EXTENSIONS[language]
    return sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in exts
    )


def ingest_submissions(
    directory: Path | str, assignment: AssignmentConfig
) -> tuple[list[Submission], list[str]]:
    """Collect one submission per immediate child of `directory`.

    Accepts flat files `<student_id>.<ext>` and per-student directories
    containing exactly one source file of the assignment language. Returns
    submissions sorted by student_id plus a list of skipped entries
    (directories with zero or multiple candidate sources).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptySubmissionDir(f"not a directory: {directory}")
    entries = sorted(directory.iterdir(), key=lambda p: p.name)
    if not entries:
        raise EmptySubmissionDir(f"no submissions in {directory}")

    exts = SOURCE_EXTENSIONS[assignment.language]
    submissions: list[Submission] = []
    skipped: list[str] = []
    for entry in entries:
        if entry.is_file() and entry.suffix.lower() in exts:
            source = entry
            student_id = entry.stem
        elif entry.is_dir():
            candidates = _candidate_sources(entry, assignment.language)
            if len(candidates) != 1:
                skipped.append(
                    f"{entry.name}: expected exactly 1 {assignment.language} source, "
                    f"found {len(candidates)}"
                )
                continue
            source = candidates[0]
            student_id = entry.name
        else:
            continue
        submissions.append(
            Submission(
                student_id=student_id,
                assignment_id=assignment.id,
                source_path=source,
                source_text=read_source_text(source),
                received_at=source.stat().st_mtime,
            )
        )
    if not submissions and not skipped:
        raise EmptySubmissionDir(f"no recognizable submissions in {directory}")
    submissions.sort(key=lambda s: s.student_id)
    return submissions, skipped


def ingest_or_raise(directory: Path | str, assignment: AssignmentConfig) -> list[Submission]:
    """Like ingest_submissions but raises if an entry is ambiguous."""
    submissions, skipped = ingest_submissions(directory, assignment)
    if skipped:
        raise AmbiguousSubmission("; ".join(skipped))
    return submissions


def assign_tier(passed: int, total: int) -> PerformanceTier:
    """Map a passed/total test count to a performance tier.

    All tests passing is PASS, none passing is FAIL, anything in between is
    PARTIAL.
    """
    if total < 1 or passed < 0 or passed > total:
        raise InvalidCount(f"invalid counts: passed={passed}, total={total}")
    if passed == total:
        return PerformanceTier.PASS
    if passed == 0:
        return PerformanceTier.FAIL
    return PerformanceTier.PARTIAL
