import json
import os
from unittest import mock

import pytest

from agp.errors import InvalidTransition, MissingEditorText, NotFound
from agp.feedback import FeedbackRecord, ReviewState
from agp.store import ReviewAction, Store, feedback_record_id, record_from_json_dict, record_to_json_dict


def make_record() -> FeedbackRecord:
    return FeedbackRecord(
        submission_ref=("bob", "fibonacci"),
        prompt_used=("loops", 0.41),
        raw_response="<output>x</output>",
        extracted="x",
    )


class TestAtomicWrites:
    def test_round_trip(self, tmp_path):
        store = Store(tmp_path)
        store.atomic_write_json("jobs", "j1", {"id": "j1", "state": "queued"})
        assert store.read_json("jobs", "j1")["state"] == "queued"

    def test_crash_mid_write_preserves_previous_record(self, tmp_path):
        store = Store(tmp_path)
        store.atomic_write_json("feedback", "r1", {"version": 1})

        original_dump = json.dump

        def exploding_dump(obj, fh, **kwargs):
            fh.write('{"version": 2, "partial', )
            raise OSError("simulated crash mid-write")

        with mock.patch("agp.store.json.dump", exploding_dump):
            with pytest.raises(OSError):
                store.atomic_write_json("feedback", "r1", {"version": 2})

        recovered = store.read_json("feedback", "r1")
        assert recovered == {"version": 1}
        leftovers = [p for p in (tmp_path / "feedback").iterdir() if p.suffix == ".tmp"]
        assert leftovers == []
        json.dump = original_dump

    def test_replace_is_atomic_rename(self, tmp_path):
        store = Store(tmp_path)
        calls = []
        real_replace = os.replace

        def spying_replace(src, dst):
            calls.append((src, dst))
            return real_replace(src, dst)

        with mock.patch("agp.store.os.replace", spying_replace):
            store.atomic_write_json("results", "x", {"a": 1})
        assert len(calls) == 1


class TestFeedbackStore:
    def test_save_load_round_trip(self, tmp_path):
        store = Store(tmp_path)
        record = make_record()
        record_id = feedback_record_id("fibonacci", "bob")
        store.save_feedback(record_id, record)
        assert store.load_feedback(record_id) == record

    def test_record_json_round_trip(self):
        record = make_record()
        as_dict = record_to_json_dict("id1", record)
        assert record_from_json_dict(as_dict) == record

    def test_list_filtered_by_state(self, tmp_path):
        store = Store(tmp_path)
        store.save_feedback("a", make_record())
        approved = FeedbackRecord(
            submission_ref=("amy", "fibonacci"),
            prompt_used=None,
            raw_response="y",
            extracted="y",
            state=ReviewState.APPROVED,
            reviewed_by="ta",
        )
        store.save_feedback("b", approved)
        generated = store.list_feedback(state="GENERATED")
        assert [r["id"] for r in generated] == ["a"]
        assert len(store.list_feedback()) == 2

    def test_review_approve_persists(self, tmp_path):
        store = Store(tmp_path)
        store.save_feedback("r1", make_record())
        updated = store.review_feedback("r1", ReviewAction(action="approve", reviewer="ta"))
        assert updated.state is ReviewState.APPROVED
        assert store.load_feedback("r1").state is ReviewState.APPROVED

    def test_review_rejected_then_approve_conflict(self, tmp_path):
        store = Store(tmp_path)
        store.save_feedback("r1", make_record())
        store.review_feedback("r1", ReviewAction(action="reject", reviewer="ta"))
        with pytest.raises(InvalidTransition):
            store.review_feedback("r1", ReviewAction(action="approve", reviewer="ta"))

    def test_review_edit_without_text(self, tmp_path):
        with pytest.raises(MissingEditorText):
            ReviewAction(action="edit", reviewer="ta")

    def test_review_missing_record(self, tmp_path):
        store = Store(tmp_path)
        with pytest.raises(NotFound):
            store.review_feedback("ghost", ReviewAction(action="approve", reviewer="ta"))


class TestJobs:
    def test_lifecycle(self, tmp_path):
        store = Store(tmp_path)
        job_id = store.create_job("grade", {"assignment_id": "a1"})
        assert store.get_job(job_id)["state"] == "queued"
        store.update_job(job_id, state="running")
        store.update_job(job_id, state="done", graded=3)
        job = store.get_job(job_id)
        assert job["state"] == "done"
        assert job["graded"] == 3
