"""Feedback generation: assembles the three-part chat request (persona,
code + failing-test logs, injected instructional prompt), calls a
chat-completion endpoint, and extracts the student-facing text."""
from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, replace
from enum import Enum

import requests

from .errors import EmptyCompletion, ProviderUnavailable
from .models import AssignmentConfig, Submission
from .prompt_pool import InstructionalPrompt
from .sandbox import DynamicReport, ExecStatus
from .static_analysis import StaticReport

MAX_RETRIES = 3

DEFAULT_SYSTEM_PROMPT = (
    "You are a programming teaching assistant. Diagnose the conceptual cause "
    "of the error. Do not write the corrected solution."
)

_OUTPUT_SPAN = re.compile(r"<output>(.*?)</output>", re.DOTALL)


class ReviewState(Enum):
    GENERATED = "GENERATED"
    APPROVED = "APPROVED"
    EDITED = "EDITED"
    REJECTED = "REJECTED"


@dataclass(frozen=True)
class FeedbackRequest:
    system_prompt: str
    user_prompt: str
    instructional_prompt: str
    model: str
    max_tokens: int = 512
    temperature: float = 0.0


@dataclass(frozen=True)
class FeedbackRecord:
    submission_ref: tuple[str, str]  # (student_id, assignment_id)
    prompt_used: tuple[str, float] | None  # (prompt id, score)
    raw_response: str
    extracted: str
    state: ReviewState = ReviewState.GENERATED
    editor_text: str | None = None
    reviewed_by: str | None = None

    def __post_init__(self):
        if self.state is ReviewState.EDITED and not self.editor_text:
            raise ValueError("EDITED records must carry editor_text")

    @property
    def releasable(self) -> bool:
        return self.state in (ReviewState.APPROVED, ReviewState.EDITED)

    @property
    def released_text(self) -> str:
        if self.state is ReviewState.EDITED:
            return self.editor_text or ""
        return self.extracted


def build_request(
    submission: Submission,
    dyn: DynamicReport,
    static_rep: StaticReport | None,
    selected: InstructionalPrompt | None,
    assignment: AssignmentConfig,
    include_question: bool = True,
    model: str = "default",
) -> FeedbackRequest:
    """Assemble the user prompt: question (optional), fenced source, then one
    block per failing test with expected versus actual output."""
    sections: list[str] = []
    if include_question:
        sections.append(f"Problem:\n{assignment.problem_description}")
    sections.append(f"Student code:\n```\n{submission.source_text}\n```")
    if static_rep is not None and static_rep.violations:
        notes = "\n".join(f"- {v.kind.value}: {v.detail}" for v in static_rep.violations)
        sections.append(f"Static analysis findings:\n{notes}")
    tests_by_id = {t.id: t for t in assignment.test_cases}
    failing = [o for o in dyn.outcomes if o.status is not ExecStatus.PASSED]
    for outcome in failing:
        test = tests_by_id.get(outcome.test_id)
        block = [
            f"Failing test {outcome.test_id} ({outcome.status.value}):",
            f"  stdin: {test.stdin!r}" if test else "",
            f"  expected: {test.expected_stdout!r}" if test else "",
            f"  actual stdout: {outcome.stdout!r}",
        ]
        if outcome.stderr:
            block.append(f"  stderr: {outcome.stderr!r}")
        sections.append("\n".join(line for line in block if line))
    sections.append(f"Result: {dyn.passed_count}/{dyn.total_count} tests passed.")
    return FeedbackRequest(
        system_prompt=DEFAULT_SYSTEM_PROMPT,
        user_prompt="\n\n".join(sections),
        instructional_prompt=selected.text if selected else "",
        model=model,
    )


def extract_output(raw: str) -> str:
    """Content of the first <output>...</output> span, trimmed; falls back to
    the whole text trimmed when no well-formed span exists."""
    match = _OUTPUT_SPAN.search(raw)
    if match:
        return match.group(1).strip()
    return raw.strip()


def generate_feedback(
    req: FeedbackRequest,
    endpoint: str,
    submission_ref: tuple[str, str] = ("", ""),
    prompt_used: tuple[str, float] | None = None,
) -> FeedbackRecord:
    """Send the chat request and wrap the completion in a GENERATED record."""
    messages = [{"role": "system", "content": req.system_prompt}]
    user_content = req.user_prompt
    if req.instructional_prompt:
        user_content = f"{user_content}\n\n{req.instructional_prompt}"
    messages.append({"role": "user", "content": user_content})
    body = {
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    headers = {}
    api_key = os.environ.get("AGP_LLM_API_KEY")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_error: Exception | None = None
    for attempt in range(MAX_RETRIES):
        try:
            response = requests.post(endpoint, json=body, headers=headers, timeout=120)
            if response.status_code >= 500:
                raise ProviderUnavailable(f"server error {response.status_code}")
            response.raise_for_status()
            payload = response.json()
            break
        except (requests.ConnectionError, requests.Timeout, ProviderUnavailable) as exc:
            last_error = exc
            time.sleep(min(0.2 * (2**attempt), 2.0))
    else:
        raise ProviderUnavailable(f"chat endpoint failed after {MAX_RETRIES} attempts: {last_error}")

    try:
        raw_text = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise EmptyCompletion(f"no assistant text in response: {payload!r}") from None
    if not raw_text or not raw_text.strip():
        raise EmptyCompletion("assistant returned empty text")
    return FeedbackRecord(
        submission_ref=submission_ref,
        prompt_used=prompt_used,
        raw_response=raw_text,
        extracted=extract_output(raw_text),
        state=ReviewState.GENERATED,
    )


def apply_review(
    record: FeedbackRecord, action: str, editor_text: str | None, reviewer: str
) -> FeedbackRecord:
    """Single review transition from GENERATED; terminal states never change."""
    from .errors import InvalidTransition, MissingEditorText

    if record.state is not ReviewState.GENERATED:
        raise InvalidTransition(f"record is {record.state.value}, not GENERATED")
    if action == "approve":
        return replace(record, state=ReviewState.APPROVED, reviewed_by=reviewer)
    if action == "edit":
        if not editor_text:
            raise MissingEditorText("edit action requires editor_text")
        return replace(
            record, state=ReviewState.EDITED, editor_text=editor_text, reviewed_by=reviewer
        )
    if action == "reject":
        return replace(record, state=ReviewState.REJECTED, reviewed_by=reviewer)
    raise ValueError(f"unknown review action {action!r}")
