"""HTTP service: grading jobs, analytics, and the instructor review workflow
over the file-backed store. All errors are structured JSON."""
from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import pipeline
from .contrastive import ProjectionHead, load_head
from .embeddings import EmbeddingVector, deterministic_provider, remote_provider_from_env
from .errors import AgpError, MissingEditorText, NotFound, TooFewPoints
from .models import PerformanceTier, SOURCE_EXTENSIONS, parse_assignment_config
from .projection import ProjectionConfig, project_cohort, projection_to_json_dict
from .store import ReviewAction, Store, feedback_record_id, safe_name

_STATUS_BY_CODE = {
    "not_found": 404,
    "invalid_transition": 409,
    "missing_editor_text": 400,
    "malformed_config": 400,
    "duplicate_test_id": 400,
    "too_few_points": 400,
    "empty_submission_dir": 400,
    "unknown_problem": 400,
}


def _error_response(exc: AgpError) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_BY_CODE.get(exc.code, 400),
        content={"error": str(exc), "code": exc.code},
    )


def _provider():
    if os.environ.get("AGP_EMBED_ENDPOINT"):
        return remote_provider_from_env()
    return deterministic_provider(dim=int(os.environ.get("AGP_EMBED_DIM", "64")))


def create_app(data_dir: Path | str, ui_dir: Path | str | None = None) -> FastAPI:
    store = Store(data_dir)
    app = FastAPI(title="agp", docs_url=None, redoc_url=None)

    @app.exception_handler(AgpError)
    async def handle_agp_error(_request: Request, exc: AgpError):
        return _error_response(exc)

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        token = os.environ.get("AGP_API_TOKEN")
        if token and not request.url.path.startswith("/ui"):
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse(
                    status_code=401,
                    content={"error": "missing or invalid bearer token", "code": "unauthorized"},
                )
        return await call_next(request)

    # -- assignments -------------------------------------------------------

    @app.post("/assignments")
    async def create_assignment(request: Request):
        body = await request.json()
        config = parse_assignment_config(body)  # raises MalformedConfig on bad input
        store.save_assignment(config.to_json_dict())
        return {"id": config.id}

    @app.get("/assignments/{assignment_id}")
    def get_assignment(assignment_id: str):
        return store.load_assignment(assignment_id)

    # -- submissions -------------------------------------------------------

    @app.post("/assignments/{assignment_id}/submissions")
    async def add_submission(assignment_id: str, request: Request):
        config = parse_assignment_config(store.load_assignment(assignment_id))
        body = await request.json()
        student_id = body.get("student_id")
        source = body.get("source")
        if not student_id or not isinstance(source, str):
            return JSONResponse(
                status_code=400,
                content={"error": "body must carry student_id and source", "code": "bad_request"},
            )
        ext = SOURCE_EXTENSIONS[config.language][0]
        store.save_submission_source(assignment_id, student_id, ext, source)
        return {"student_id": student_id, "assignment_id": assignment_id}

    # -- grading jobs ------------------------------------------------------

    def _run_grade_job(job_id: str, assignment_id: str, options: pipeline.PipelineOptions):
        try:
            store.update_job(job_id, state="running")
            config = parse_assignment_config(store.load_assignment(assignment_id))
            result, embeddings = pipeline.run_grading(
                config,
                store.submission_dir(assignment_id),
                _provider(),
                pool=None,
                options=options,
            )
            out_dir = store.results_dir(assignment_id)
            pipeline.write_outputs(out_dir, result, embeddings, config, seed=options.seed)
            for item in result.graded:
                if item.feedback is not None:
                    record_id = feedback_record_id(config.id, item.submission.student_id)
                    store.save_feedback(record_id, item.feedback)
            store.update_job(
                job_id,
                state="done",
                graded=len(result.graded),
                errors=result.errors,
            )
        except Exception as exc:
            store.update_job(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")

    @app.post("/assignments/{assignment_id}/grade")
    async def start_grading(assignment_id: str, request: Request):
        store.load_assignment(assignment_id)  # 404 when missing
        try:
            body = await request.json()
        except Exception:
            body = {}
        options = pipeline.PipelineOptions(
            parallelism=int(body.get("parallelism", 1)),
            seed=int(body.get("seed", 42)),
            generate_feedback=bool(body.get("feedback", bool(os.environ.get("AGP_LLM_ENDPOINT")))),
            feedback_endpoint=os.environ.get("AGP_LLM_ENDPOINT"),
            feedback_model=os.environ.get("AGP_LLM_MODEL", "default"),
        )
        job_id = store.create_job("grade", {"assignment_id": assignment_id})
        thread = threading.Thread(
            target=_run_grade_job, args=(job_id, assignment_id, options), daemon=True
        )
        thread.start()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return store.get_job(job_id)

    # -- reports -----------------------------------------------------------

    @app.get("/assignments/{assignment_id}/report.csv")
    def class_csv(assignment_id: str):
        path = store.results_dir(assignment_id) / "class_summary.csv"
        if not path.exists():
            raise NotFound(f"no grading results for {assignment_id}")
        return PlainTextResponse(path.read_text(encoding="utf-8"), media_type="text/csv")

    @app.get("/submissions/{student_id}/report.md")
    def student_report(student_id: str, assignment: str | None = Query(default=None)):
        results_root = store.root / "results"
        if assignment is not None:
            candidates = [results_root / safe_name(assignment) / f"{student_id}.md"]
        else:
            candidates = sorted(results_root.glob(f"*/{student_id}.md"))
        existing = [c for c in candidates if c.exists()]
        if not existing:
            raise NotFound(f"no report for student {student_id}")
        return PlainTextResponse(existing[0].read_text(encoding="utf-8"), media_type="text/markdown")

    # -- projection --------------------------------------------------------

    @app.get("/assignments/{assignment_id}/projection")
    def projection(
        assignment_id: str,
        seed: int = Query(default=42),
        source: str = Query(default="raw"),
    ):
        if source not in ("raw", "projected"):
            return JSONResponse(
                status_code=400,
                content={"error": "source must be raw or projected", "code": "bad_request"},
            )
        dataset_path = store.results_dir(assignment_id) / "dataset.jsonl"
        if not dataset_path.exists():
            raise NotFound(f"no embedding dataset for {assignment_id}; grade first")
        records = [
            json.loads(line)
            for line in dataset_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        head: ProjectionHead | None = None
        if source == "projected":
            head_path = store.root / "heads" / f"{safe_name(assignment_id)}.json"
            if not head_path.exists():
                raise NotFound(f"no trained head stored for {assignment_id}")
            head = load_head(head_path)
        cohort = []
        for raw in records:
            vec = EmbeddingVector(
                values=raw["embedding"], dim=len(raw["embedding"]), normalized=False
            )
            if head is not None:
                projected = head.project(vec.values)[0]
                vec = EmbeddingVector(values=projected, dim=head.d_out, normalized=True)
            cohort.append(
                (raw["student_id"], raw["problem_id"], PerformanceTier(raw["tier"]), vec)
            )
        if len(cohort) < 3:
            raise TooFewPoints(f"cohort of {len(cohort)} is too small to project")
        config = ProjectionConfig(k=min(15, len(cohort) - 1), seed=seed)
        points = project_cohort(cohort, config)
        payload = projection_to_json_dict(assignment_id, points, config)
        store.atomic_write_json(
            "projections", f"{safe_name(assignment_id)}_{seed}_{source}", payload
        )
        return payload

    # -- feedback review ---------------------------------------------------

    @app.get("/feedback")
    def feedback_queue(state: str | None = Query(default=None)):
        return {"records": store.list_feedback(state)}

    @app.post("/feedback/{record_id}/review")
    async def review(record_id: str, request: Request):
        body = await request.json()
        action = body.get("action")
        if action not in ("approve", "edit", "reject"):
            return JSONResponse(
                status_code=400,
                content={"error": f"unknown action {action!r}", "code": "bad_request"},
            )
        if action == "edit" and not body.get("editor_text"):
            raise MissingEditorText("edit action requires non-empty editor_text")
        review_action = ReviewAction(
            action=action,
            reviewer=body.get("reviewer", "unknown"),
            editor_text=body.get("editor_text"),
        )
        updated = store.review_feedback(record_id, review_action)
        from .store import record_to_json_dict

        return record_to_json_dict(record_id, updated)

    # -- static UI ---------------------------------------------------------

    resolved_ui = ui_dir or os.environ.get("AGP_UI_DIR")
    if resolved_ui and Path(resolved_ui).is_dir():
        app.mount("/ui", StaticFiles(directory=str(resolved_ui), html=True), name="ui")

    return app


def serve(port: int, data_dir: Path | str, ui_dir: Path | str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(data_dir, ui_dir=ui_dir), host="127.0.0.1", port=port)
