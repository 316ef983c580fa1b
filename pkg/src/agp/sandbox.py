"""Sandboxed test execution with per-test scratch dirs and resource limits.

Two backends share one interface: a process backend (fresh process, OS
resource limits, wall-clock watchdog) and an optional container backend.
The process backend is the default so grading works without a container
runtime; only the container backend guarantees network isolation.
"""
from __future__ import annotations

import os
import resource
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .models import AssignmentConfig, PerformanceTier, Submission, TestCase, assign_tier

STREAM_CAP_BYTES = 1 << 20  # 1 MiB per stream
TRUNCATION_NOTE = "[sandbox] stream truncated at 1 MiB"

# stderr signatures that indicate the allocator gave up rather than a plain bug
_OOM_SIGNATURES = ("MemoryError", "std::bad_alloc", "Cannot allocate memory", "OutOfMemoryError")

_SOURCE_STAGE_NAMES = {"python": "solution.py", "c": "solution.c", "cpp": "solution.cpp"}


class ExecStatus(Enum):
    PASSED = "Passed"
    WRONG_OUTPUT = "WrongOutput"
    RUNTIME_ERROR = "RuntimeError"
    TIMEOUT = "Timeout"
    MEMORY_EXCEEDED = "MemoryExceeded"
    SANDBOX_ERROR = "SandboxError"


@dataclass(frozen=True)
class ExecutionOutcome:
    test_id: str
    status: ExecStatus
    stdout: str
    stderr: str
    exit_code: int | None
    wall_ms: int


@dataclass(frozen=True)
class DynamicReport:
    outcomes: tuple[ExecutionOutcome, ...]
    passed_count: int
    total_count: int
    tier: PerformanceTier


def compare_output(actual: str, expected: str) -> bool:
    """Case-sensitive equality after whitespace normalization.

    CRLF becomes LF, trailing whitespace is stripped per line, and trailing
    blank lines are dropped.
    """
    return _normalize(actual) == _normalize(expected)


def _normalize(text: str) -> str:
    lines = [line.rstrip() for line in text.replace("\r\n", "\n").split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def _substitute_command(entry_command: tuple[str, ...], staged: Path) -> list[str]:
    return [token.replace("{file}", str(staged)) for token in entry_command]


def _make_limit_setter(timeout_ms: int, memory_mb: int):
    cpu_seconds = max(1, (timeout_ms + 999) // 1000)

    def set_limits():
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds + 1))
        cap = memory_mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (cap, cap))
        os.setsid()

    return set_limits


class _CappedReader(threading.Thread):
    """Drains a pipe, keeping the first STREAM_CAP_BYTES and counting the rest."""

    def __init__(self, stream):
        super().__init__(daemon=True)
        self.stream = stream
        self.chunks: list[bytes] = []
        self.kept = 0
        self.truncated = False
        self.start()

    def run(self):
        try:
            while True:
                chunk = self.stream.read(65536)
                if not chunk:
                    break
                if self.kept < STREAM_CAP_BYTES:
                    take = chunk[: STREAM_CAP_BYTES - self.kept]
                    self.chunks.append(take)
                    self.kept += len(take)
                    if len(take) < len(chunk):
                        self.truncated = True
                else:
                    self.truncated = True
        finally:
            self.stream.close()

    def text(self) -> str:
        return b"".join(self.chunks).decode("utf-8", errors="replace")


def _run_process(
    command: list[str], stdin: str, timeout_ms: int, memory_mb: int, cwd: Path
) -> tuple[int | None, str, str, int, bool]:
    """Returns (exit_code, stdout, stderr, wall_ms, timed_out)."""
    start = time.monotonic()
    proc = subprocess.Popen(
        command,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        cwd=str(cwd),
        preexec_fn=_make_limit_setter(timeout_ms, memory_mb),
        env={"PATH": os.environ.get("PATH", "/usr/bin:/bin"), "HOME": str(cwd)},
    )
    out_reader = _CappedReader(proc.stdout)
    err_reader = _CappedReader(proc.stderr)
    timed_out = False
    try:
        proc.stdin.write(stdin.encode("utf-8"))
        proc.stdin.close()
    except (BrokenPipeError, OSError):
        pass  # program exited before reading stdin
    deadline = start + timeout_ms / 1000.0
    while proc.poll() is None:
        if time.monotonic() >= deadline:
            timed_out = True
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            proc.wait()
            break
        time.sleep(0.005)
    out_reader.join(timeout=5)
    err_reader.join(timeout=5)
    wall_ms = int((time.monotonic() - start) * 1000)

    stdout = out_reader.text()
    stderr = err_reader.text()
    notes = []
    if out_reader.truncated:
        notes.append(f"{TRUNCATION_NOTE} (stdout)")
    if err_reader.truncated:
        notes.append(f"{TRUNCATION_NOTE} (stderr)")
    if notes:
        stderr = stderr + ("\n" if stderr and not stderr.endswith("\n") else "") + "\n".join(notes)
    exit_code = proc.returncode
    # a SIGXCPU/SIGKILL death after exceeding the CPU rlimit is a timeout too
    if exit_code is not None and exit_code < 0 and -exit_code in (signal.SIGXCPU,):
        timed_out = True
    return exit_code, stdout, stderr, wall_ms, timed_out


def _run_container(
    command: list[str], stdin: str, timeout_ms: int, memory_mb: int, cwd: Path
) -> tuple[int | None, str, str, int, bool]:
    """One-shot container per test: no network, hard memory cap, auto-removed."""
    image = os.environ.get("AGP_SANDBOX_IMAGE")
    if not image:
        raise FileNotFoundError("AGP_SANDBOX_IMAGE not set for container backend")
    docker_cmd = [
        "docker", "run", "--rm", "-i",
        "--network", "none",
        "--memory", f"{memory_mb}m",
        "-v", f"{cwd}:/work",
        "-w", "/work",
        image,
    ] + [token.replace(str(cwd), "/work") for token in command]
    start = time.monotonic()
    timed_out = False
    try:
        proc = subprocess.run(
            docker_cmd,
            input=stdin.encode("utf-8"),
            capture_output=True,
            timeout=timeout_ms / 1000.0 + 10,  # allow container startup overhead
        )
        exit_code = proc.returncode
        stdout = proc.stdout[:STREAM_CAP_BYTES].decode("utf-8", errors="replace")
        stderr = proc.stderr[:STREAM_CAP_BYTES].decode("utf-8", errors="replace")
    except subprocess.TimeoutExpired as exc:
        timed_out = True
        exit_code = None
        stdout = (exc.stdout or b"")[:STREAM_CAP_BYTES].decode("utf-8", errors="replace")
        stderr = (exc.stderr or b"")[:STREAM_CAP_BYTES].decode("utf-8", errors="replace")
    wall_ms = int((time.monotonic() - start) * 1000)
    # docker reports 137 for an OOM kill
    if exit_code == 137:
        stderr = stderr + ("\n" if stderr else "") + "Cannot allocate memory (container OOM kill)"
    return exit_code, stdout, stderr, wall_ms, timed_out


_BACKENDS = {"process": _run_process, "container": _run_container}


def run_test_case(
    submission: Submission,
    test: TestCase,
    config: AssignmentConfig,
    backend: str | None = None,
) -> ExecutionOutcome:
    """Run one test case in a fresh scratch sandbox and classify the result."""
    backend = backend or os.environ.get("AGP_SANDBOX_BACKEND", "process")
    runner = _BACKENDS.get(backend)
    if runner is None:
        return ExecutionOutcome(
            test.id, ExecStatus.SANDBOX_ERROR, "", f"unknown sandbox backend {backend!r}", None, 0
        )
    scratch = Path(tempfile.mkdtemp(prefix="agp-sandbox-"))
    try:
        staged = scratch / _SOURCE_STAGE_NAMES.get(config.language, "solution.txt")
        staged.write_text(submission.source_text, encoding="utf-8")
        command = _substitute_command(config.entry_command, staged)
        try:
            exit_code, stdout, stderr, wall_ms, timed_out = runner(
                command, test.stdin, test.timeout_ms, test.memory_mb, scratch
            )
        except (FileNotFoundError, PermissionError) as exc:
            return ExecutionOutcome(
                test.id, ExecStatus.SANDBOX_ERROR, "", f"environment failure: {exc}", None, 0
            )
        # scratch paths differ per run; mask them so reports stay reproducible
        stdout = stdout.replace(str(scratch), "<sandbox>")
        stderr = stderr.replace(str(scratch), "<sandbox>")
        if timed_out:
            return ExecutionOutcome(
                test.id,
                ExecStatus.TIMEOUT,
                stdout,
                stderr,
                exit_code,
                max(wall_ms, test.timeout_ms),
            )
        if exit_code != 0:
            if any(sig in stderr for sig in _OOM_SIGNATURES):
                status = ExecStatus.MEMORY_EXCEEDED
            else:
                status = ExecStatus.RUNTIME_ERROR
            return ExecutionOutcome(test.id, status, stdout, stderr, exit_code, wall_ms)
        if compare_output(stdout, test.expected_stdout):
            return ExecutionOutcome(test.id, ExecStatus.PASSED, stdout, stderr, exit_code, wall_ms)
        return ExecutionOutcome(
            test.id, ExecStatus.WRONG_OUTPUT, stdout, stderr, exit_code, wall_ms
        )
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def run_all_tests(
    submission: Submission,
    config: AssignmentConfig,
    parallelism: int = 1,
    backend: str | None = None,
) -> DynamicReport:
    """Run every test case; outcomes keep config order regardless of completion order."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    tests = config.test_cases
    outcomes: list[ExecutionOutcome | None] = [None] * len(tests)

    def run_one(index: int) -> None:
        try:
            outcomes[index] = run_test_case(submission, tests[index], config, backend=backend)
        except Exception as exc:  # a broken sandbox must not abort the other tests
            outcomes[index] = ExecutionOutcome(
                tests[index].id, ExecStatus.SANDBOX_ERROR, "", str(exc), None, 0
            )

    if parallelism == 1:
        for i in range(len(tests)):
            run_one(i)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(run_one, range(len(tests))))

    final = tuple(o for o in outcomes if o is not None)
    passed = sum(1 for o in final if o.status is ExecStatus.PASSED)
    return DynamicReport(
        outcomes=final,
        passed_count=passed,
        total_count=len(final),
        tier=assign_tier(passed, len(final)),
    )
