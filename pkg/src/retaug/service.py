"""HTTP service for pipeline jobs, duplicate review, and reports.

Thin JSON layer over CuratorStore and JobManager: handlers validate input,
translate store exceptions to HTTP status codes, and never block on job
completion. When a built review UI is available its static assets are served
under /ui.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import Response, StreamingResponse
from pydantic import BaseModel

from .dedup import Verdict
from .errors import (
    BadParams,
    InvalidVerdict,
    UnknownDataset,
    UnknownImage,
    UnknownJob,
    UnknownPair,
)
from .store import CuratorStore, JobManager

_MAGIC_TYPES = [
    (b"\xff\xd8\xff", "image/jpeg"),
    (b"\x89PNG\r\n\x1a\n", "image/png"),
    (b"RIFF", "image/webp"),
]


def _sniff_media_type(data: bytes) -> str:
    for magic, media in _MAGIC_TYPES:
        if data.startswith(magic):
            return media
    return "application/octet-stream"


class JobSubmission(BaseModel):
    kind: str
    params: dict
    idempotency_key: Optional[str] = None


class VerdictSubmission(BaseModel):
    verdict: str
    reviewer: Optional[str] = None


def create_app(store_dir, workers: int = 2, static_dir=None) -> FastAPI:
    from contextlib import asynccontextmanager

    store = CuratorStore(store_dir)
    jobs = JobManager(store, workers=workers)

    @asynccontextmanager
    async def lifespan(_app):
        yield
        jobs.shutdown()
        store.close()

    app = FastAPI(title="retaug curator", lifespan=lifespan)
    app.state.store = store
    app.state.jobs = jobs

    @app.post("/v1/jobs", status_code=201)
    def submit_job(body: JobSubmission):
        try:
            job = jobs.submit(body.kind, body.params, body.idempotency_key)
        except BadParams as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return job.as_dict()

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return jobs.get(job_id).as_dict()
        except UnknownJob as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/v1/pairs")
    def list_pairs(status: str = Query("pending"), limit: int = Query(50, ge=1, le=1000)):
        try:
            wanted = None if status == "all" else Verdict(status)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown status {status!r}")
        entries = store.pairs(status=wanted, limit=limit)
        return {"pairs": [e.as_dict() for e in entries]}

    @app.post("/v1/pairs/{key}/verdict")
    def post_verdict(key: str, body: VerdictSubmission):
        try:
            entry = store.post_verdict(key, body.verdict, body.reviewer)
        except UnknownPair as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except InvalidVerdict as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return entry.as_dict()

    @app.get("/v1/reports/leakage")
    def get_leakage_report():
        return store.leakage_report().as_dict()

    @app.get("/v1/datasets/{dataset_id}/manifest")
    def get_manifest(dataset_id: str):
        try:
            path = store.manifest_path(dataset_id)
        except UnknownDataset as exc:
            raise HTTPException(status_code=404, detail=str(exc))

        def stream(chunk_size: int = 65536):
            with open(path, "rb") as fh:
                while chunk := fh.read(chunk_size):
                    yield chunk

        return StreamingResponse(stream(), media_type="application/jsonl")

    @app.get("/v1/images/{image_id}")
    def get_image(image_id: str):
        try:
            path = store.image_path(image_id)
        except UnknownImage as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        data = path.read_bytes()
        return Response(content=data, media_type=_sniff_media_type(data))

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
