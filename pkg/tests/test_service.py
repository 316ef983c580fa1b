import json
import time

import pytest
from fastapi.testclient import TestClient

from agp.service import create_app

SAMPLE_CONFIG = None  # loaded lazily from the sample dir


@pytest.fixture()
def client(tmp_path, sample_dir):
    app = create_app(tmp_path / "data")
    with TestClient(app) as test_client:
        test_client.sample_config = json.loads((sample_dir / "assignment.json").read_text())
        yield test_client


def post_assignment(client) -> str:
    response = client.post("/assignments", json=client.sample_config)
    assert response.status_code == 200, response.text
    return response.json()["id"]


def add_submission(client, assignment_id, student_id, source):
    response = client.post(
        f"/assignments/{assignment_id}/submissions",
        json={"student_id": student_id, "source": source},
    )
    assert response.status_code == 200, response.text


def run_grade_job(client, assignment_id, deadline_s=60.0):
    response = client.post(f"/assignments/{assignment_id}/grade", json={})
    assert response.status_code == 200, response.text
    job_id = response.json()["job_id"]
    deadline = time.monotonic() + deadline_s
    while time.monotonic() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["state"] in ("done", "failed"):
            return job
        time.sleep(0.2)
    raise AssertionError("grading job did not finish in time")


def grade_sample_cohort(client, sample_dir):
    assignment_id = post_assignment(client)
    for student in ("alice", "bob", "chloe"):
        source = (sample_dir / "submissions" / f"{student}.py").read_text()
        add_submission(client, assignment_id, student, source)
    job = run_grade_job(client, assignment_id)
    assert job["state"] == "done", job
    return assignment_id


class TestAssignments:
    def test_round_trip(self, client):
        assignment_id = post_assignment(client)
        fetched = client.get(f"/assignments/{assignment_id}")
        assert fetched.status_code == 200
        assert fetched.json()["id"] == assignment_id

    def test_malformed_config_structured_error(self, client):
        response = client.post("/assignments", json={"id": "x"})
        assert response.status_code == 400
        body = response.json()
        assert set(body) == {"error", "code"}
        assert body["code"] == "malformed_config"

    def test_missing_assignment_404(self, client):
        response = client.get("/assignments/ghost")
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"


class TestGradingFlow:
    def test_full_flow_reports_and_projection(self, client, sample_dir):
        assignment_id = grade_sample_cohort(client, sample_dir)

        csv_response = client.get(f"/assignments/{assignment_id}/report.csv")
        assert csv_response.status_code == 200
        lines = csv_response.text.strip().split("\n")
        assert len(lines) == 4  # header + 3 students
        assert "alice" in lines[1] and "PASS" in lines[1]
        assert "bob" in lines[2] and "PARTIAL" in lines[2]
        assert "chloe" in lines[3] and "FAIL" in lines[3]

        report = client.get(f"/submissions/bob/report.md?assignment={assignment_id}")
        assert report.status_code == 200
        assert "bob" in report.text and "PARTIAL" in report.text

        unscoped = client.get("/submissions/bob/report.md")
        assert unscoped.status_code == 200

        projection = client.get(f"/assignments/{assignment_id}/projection?seed=7&source=raw")
        assert projection.status_code == 200
        payload = projection.json()
        assert payload["seed"] == 7
        assert len(payload["points"]) == 3
        assert {p["student_id"] for p in payload["points"]} == {"alice", "bob", "chloe"}

        repeat = client.get(f"/assignments/{assignment_id}/projection?seed=7&source=raw")
        assert repeat.json() == payload  # deterministic given seed

    def test_projection_without_results_404(self, client):
        assignment_id = post_assignment(client)
        response = client.get(f"/assignments/{assignment_id}/projection")
        assert response.status_code == 404

    def test_projected_source_requires_head(self, client, sample_dir):
        assignment_id = grade_sample_cohort(client, sample_dir)
        response = client.get(f"/assignments/{assignment_id}/projection?source=projected")
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"

    def test_grade_missing_assignment_404(self, client):
        response = client.post("/assignments/ghost/grade", json={})
        assert response.status_code == 404


class TestReviewEndpoints:
    def _seed_record(self, client):
        # go through the store so the service sees a GENERATED record
        from agp.feedback import FeedbackRecord
        from agp.store import Store, feedback_record_id

        record = FeedbackRecord(
            submission_ref=("bob", "fibonacci"),
            prompt_used=("loops", 0.4),
            raw_response="<output>model text</output>",
            extracted="model text",
        )
        store = Store(client.app_state_dir)
        record_id = feedback_record_id("fibonacci", "bob")
        store.save_feedback(record_id, record)
        return record_id

    @pytest.fixture(autouse=True)
    def _capture_data_dir(self, client, tmp_path):
        client.app_state_dir = tmp_path / "data"

    def test_queue_lists_generated(self, client):
        record_id = self._seed_record(client)
        response = client.get("/feedback?state=GENERATED")
        assert response.status_code == 200
        records = response.json()["records"]
        assert [r["id"] for r in records] == [record_id]

    def test_approve_then_queue_empties(self, client):
        record_id = self._seed_record(client)
        response = client.post(
            f"/feedback/{record_id}/review", json={"action": "approve", "reviewer": "ta"}
        )
        assert response.status_code == 200
        assert response.json()["state"] == "APPROVED"
        assert client.get("/feedback?state=GENERATED").json()["records"] == []

    def test_double_review_conflict(self, client):
        record_id = self._seed_record(client)
        client.post(f"/feedback/{record_id}/review", json={"action": "reject", "reviewer": "ta"})
        response = client.post(
            f"/feedback/{record_id}/review", json={"action": "approve", "reviewer": "ta"}
        )
        assert response.status_code == 409
        assert response.json()["code"] == "invalid_transition"

    def test_edit_without_text_400(self, client):
        record_id = self._seed_record(client)
        response = client.post(
            f"/feedback/{record_id}/review", json={"action": "edit", "reviewer": "ta"}
        )
        assert response.status_code == 400
        assert response.json()["code"] == "missing_editor_text"

    def test_unknown_record_404(self, client):
        response = client.post(
            "/feedback/ghost/review", json={"action": "approve", "reviewer": "ta"}
        )
        assert response.status_code == 404


class TestAuthToken:
    def test_token_enforced_when_configured(self, tmp_path, sample_dir, monkeypatch):
        monkeypatch.setenv("AGP_API_TOKEN", "sekrit")
        app = create_app(tmp_path / "data")
        with TestClient(app) as client:
            denied = client.get("/feedback")
            assert denied.status_code == 401
            allowed = client.get("/feedback", headers={"Authorization": "Bearer sekrit"})
            assert allowed.status_code == 200
