"""Directory-of-JSON persistence for the HTTP service.

Zero external dependencies and diffable on disk. Every mutation goes through
an atomic write (temp file + rename) guarded by a per-family lock, so a
crash mid-write never leaves a half-written record.
"""
from __future__ import annotations

import json
import os
import re
import tempfile
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from .errors import MissingEditorText, NotFound
from .feedback import FeedbackRecord, ReviewState, apply_review

_SAFE_CHARS = re.compile(r"[^A-Za-z0-9._-]")

FAMILIES = ("assignments", "submissions", "results", "feedback", "projections", "jobs", "heads")


def safe_name(value: str) -> str:
    return _SAFE_CHARS.sub("-", value) or "unnamed"


def feedback_record_id(assignment_id: str, student_id: str) -> str:
    return f"{safe_name(assignment_id)}__{safe_name(student_id)}"


@dataclass(frozen=True)
class ReviewAction:
    action: str  # approve | edit | reject
    reviewer: str
    editor_text: str | None = None

    def __post_init__(self):
        if self.action not in ("approve", "edit", "reject"):
            raise ValueError(f"unknown review action {self.action!r}")
        if self.action == "edit" and not self.editor_text:
            raise MissingEditorText("edit action requires non-empty editor_text")


def record_to_json_dict(record_id: str, record: FeedbackRecord) -> dict:
    return {
        "id": record_id,
        "student_id": record.submission_ref[0],
        "assignment_id": record.submission_ref[1],
        "prompt_id": record.prompt_used[0] if record.prompt_used else None,
        "prompt_score": record.prompt_used[1] if record.prompt_used else None,
        "raw_response": record.raw_response,
        "extracted": record.extracted,
        "state": record.state.value,
        "editor_text": record.editor_text,
        "reviewed_by": record.reviewed_by,
    }


def record_from_json_dict(raw: dict) -> FeedbackRecord:
    prompt_used = None
    if raw.get("prompt_id") is not None:
        prompt_used = (raw["prompt_id"], raw.get("prompt_score", 0.0))
    return FeedbackRecord(
        submission_ref=(raw["student_id"], raw["assignment_id"]),
        prompt_used=prompt_used,
        raw_response=raw["raw_response"],
        extracted=raw["extracted"],
        state=ReviewState(raw["state"]),
        editor_text=raw.get("editor_text"),
        reviewed_by=raw.get("reviewed_by"),
    )


class Store:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._locks = {family: threading.Lock() for family in FAMILIES}
        for family in FAMILIES:
            (self.root / family).mkdir(parents=True, exist_ok=True)

    def _family_dir(self, family: str) -> Path:
        return self.root / family

    def atomic_write_json(self, family: str, name: str, payload: dict) -> Path:
        """Serialize to a temp file in the target directory, then rename."""
        target = self._family_dir(family) / f"{name}.json"
        with self._locks[family]:
            handle, temp_path = tempfile.mkstemp(
                dir=str(target.parent), prefix=f".{name}.", suffix=".tmp"
            )
            try:
                with os.fdopen(handle, "w", encoding="utf-8") as fh:
                    json.dump(payload, fh, indent=2)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(temp_path, target)
            except BaseException:
                if os.path.exists(temp_path):
                    os.unlink(temp_path)
                raise
        return target

    def read_json(self, family: str, name: str) -> dict:
        target = self._family_dir(family) / f"{name}.json"
        if not target.exists():
            raise NotFound(f"{family}/{name} does not exist")
        return json.loads(target.read_text(encoding="utf-8"))

    def exists(self, family: str, name: str) -> bool:
        return (self._family_dir(family) / f"{name}.json").exists()

    def list_json(self, family: str) -> list[dict]:
        directory = self._family_dir(family)
        payloads = []
        for path in sorted(directory.glob("*.json")):
            payloads.append(json.loads(path.read_text(encoding="utf-8")))
        return payloads

    # -- assignments -------------------------------------------------------

    def save_assignment(self, config_dict: dict) -> None:
        self.atomic_write_json("assignments", safe_name(config_dict["id"]), config_dict)

    def load_assignment(self, assignment_id: str) -> dict:
        return self.read_json("assignments", safe_name(assignment_id))

    # -- submissions -------------------------------------------------------

    def submission_dir(self, assignment_id: str) -> Path:
        path = self._family_dir("submissions") / safe_name(assignment_id)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def save_submission_source(self, assignment_id: str, student_id: str, ext: str, source: str) -> Path:
        target = self.submission_dir(assignment_id) / f"{safe_name(student_id)}{ext}"
        with self._locks["submissions"]:
            handle, temp_path = tempfile.mkstemp(dir=str(target.parent), suffix=".tmp")
            with os.fdopen(handle, "w", encoding="utf-8") as fh:
                fh.write(source)
            os.replace(temp_path, target)
        return target

    # -- results -----------------------------------------------------------

    def results_dir(self, assignment_id: str) -> Path:
        path = self._family_dir("results") / safe_name(assignment_id)
        path.mkdir(parents=True, exist_ok=True)
        return path

    # -- feedback ----------------------------------------------------------

    def save_feedback(self, record_id: str, record: FeedbackRecord) -> None:
        self.atomic_write_json("feedback", record_id, record_to_json_dict(record_id, record))

    def load_feedback(self, record_id: str) -> FeedbackRecord:
        return record_from_json_dict(self.read_json("feedback", record_id))

    def list_feedback(self, state: str | None = None) -> list[dict]:
        records = self.list_json("feedback")
        if state is not None:
            records = [r for r in records if r.get("state") == state]
        return records

    def review_feedback(self, record_id: str, action: ReviewAction) -> FeedbackRecord:
        """Apply a single review transition and persist it atomically.

        Only GENERATED records may transition; APPROVED, EDITED, and REJECTED
        are terminal.
        """
        record = self.load_feedback(record_id)  # raises NotFound
        updated = apply_review(record, action.action, action.editor_text, action.reviewer)
        self.save_feedback(record_id, updated)
        return updated

    # -- jobs ----------------------------------------------------------------

    def create_job(self, kind: str, payload: dict | None = None) -> str:
        job_id = uuid.uuid4().hex[:12]
        self.atomic_write_json(
            "jobs", job_id, {"id": job_id, "kind": kind, "state": "queued", **(payload or {})}
        )
        return job_id

    def update_job(self, job_id: str, **fields) -> None:
        job = self.read_json("jobs", job_id)
        job.update(fields)
        self.atomic_write_json("jobs", job_id, job)

    def get_job(self, job_id: str) -> dict:
        return self.read_json("jobs", job_id)
