"""HTTP/JSON surface of the marking service (everything under /api/v1).

    GET  /api/v1/schedule/{subject}                      work plan, all databases
    GET  /api/v1/images/{db}/{finger}/{impression}.png   image + scale headers
    GET  /api/v1/templates/{db}/{finger}/{impression}    current template state
    PUT  /api/v1/templates/{db}/{finger}/{impression}    submit a marked template
    POST /api/v1/templates/{db}/{finger}/{impression}/reviews
    GET  /api/v1/export/{db}.zip                         final templates archive
    GET  /api/v1/stats/{db}

Markers and reviewers identify themselves with the X-Subject-Id header;
anything beyond that (real authentication, TLS) is a deployment concern.
"""

from __future__ import annotations

import io
import tempfile
import zipfile
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Response

from minumark.dataset import ImageRef
from minumark.marking.store import (
    AuthorizationError,
    ConflictError,
    InvalidStateError,
    MarkingError,
    MarkingService,
    ServiceConfig,
    TemplateState,
    ValidationFailure,
    record_to_json,
)

__all__ = ["create_app"]


def _state_json(state: TemplateState) -> dict:
    return {
        "db": state.image.db_id,
        "finger": state.image.finger_id,
        "impression": state.image.impression_id,
        "revision": state.revision,
        "status": state.status,
        "marker": state.marker,
        "perceived_quality": state.perceived_quality,
        "warning": state.warning,
        "reviews": [
            {"reviewer": r.reviewer, "action": r.action, "revision": r.revision, "timestamp": r.timestamp}
            for r in state.reviews
        ],
        "template": None if state.record is None else record_to_json(state.record),
    }


def _subject(raw: str | None) -> int:
    if raw is None:
        raise HTTPException(status_code=401, detail="X-Subject-Id header required")
    try:
        return int(raw)
    except ValueError:
        raise HTTPException(status_code=401, detail="X-Subject-Id must be an integer") from None


def create_app(service: MarkingService | ServiceConfig) -> FastAPI:
    if isinstance(service, ServiceConfig):
        service = MarkingService(service)

    app = FastAPI(title="minutiae marking service", docs_url=None, redoc_url=None)
    app.state.service = service

    def run(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationFailure as exc:
            raise HTTPException(
                status_code=422,
                detail=[{"path": v.path, "code": v.code, "message": v.message} for v in exc.violations],
            ) from exc
        except AuthorizationError as exc:
            raise HTTPException(status_code=403, detail=str(exc)) from exc
        except (ConflictError, InvalidStateError) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except MarkingError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/api/v1/schedule/{subject}")
    def get_schedule(subject: int):
        days = []
        for db_id in service.databases():
            for a in run(service.schedule_for_subject, db_id, subject):
                days.append(
                    {
                        "db": db_id,
                        "day": a.day_index,
                        "images": [
                            {"db": r.db_id, "finger": r.finger_id, "impression": r.impression_id}
                            for r in a.images
                        ],
                    }
                )
        return {"subject": subject, "days": days}

    @app.get("/api/v1/images/{db}/{finger}/{impression}.png")
    def get_image(db: str, finger: int, impression: int, x_subject_id: str | None = Header(default=None)):
        subject = _subject(x_subject_id)
        png, meta = run(service.view_image, subject, ImageRef(db, finger, impression))
        return Response(
            content=png,
            media_type="image/png",
            headers={
                "X-Px-Per-Cm": str(meta.px_per_cm),
                "X-Image-Width-Px": str(meta.width_px),
                "X-Image-Height-Px": str(meta.height_px),
                "X-Target-Display-Cm": str(meta.target_display_cm),
            },
        )

    @app.get("/api/v1/templates/{db}/{finger}/{impression}")
    def get_template(db: str, finger: int, impression: int):
        return _state_json(run(service.get_template, ImageRef(db, finger, impression)))

    @app.put("/api/v1/templates/{db}/{finger}/{impression}")
    def put_template(
        db: str,
        finger: int,
        impression: int,
        body: dict,
        x_subject_id: str | None = Header(default=None),
    ):
        subject = _subject(x_subject_id)
        state = run(
            service.submit_template,
            subject,
            ImageRef(db, finger, impression),
            {"minutiae": body.get("minutiae", []), "singular_points": body.get("singular_points", [])},
            body.get("perceived_quality"),
            expected_revision=body.get("expected_revision"),
            draft=bool(body.get("draft", False)),
            day_index=body.get("day_index"),
            fingerprint_type=body.get("fingerprint_type"),
            completeness=body.get("completeness"),
        )
        return _state_json(state)

    @app.post("/api/v1/templates/{db}/{finger}/{impression}/reviews")
    def post_review(
        db: str,
        finger: int,
        impression: int,
        body: dict,
        x_subject_id: str | None = Header(default=None),
    ):
        reviewer = _subject(x_subject_id)
        modified = None
        if body.get("action") == "modify":
            modified = {
                "minutiae": body.get("minutiae", []),
                "singular_points": body.get("singular_points", []),
            }
        state = run(
            service.submit_review,
            reviewer,
            ImageRef(db, finger, impression),
            body.get("action"),
            modified_payload=modified,
            perceived_quality=body.get("perceived_quality"),
            expected_revision=body.get("expected_revision"),
        )
        return _state_json(state)

    @app.get("/api/v1/export/{db}.zip")
    def export_zip(db: str):
        with tempfile.TemporaryDirectory() as tmp:
            report = run(service.export_database, db, Path(tmp))
            buf = io.BytesIO()
            with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as archive:
                for name in sorted(p.name for p in Path(tmp).iterdir()):
                    archive.write(Path(tmp) / name, arcname=f"{db}/{name}")
        return Response(
            content=buf.getvalue(),
            media_type="application/zip",
            headers={"X-Exported": str(report.exported), "X-Total": str(report.total)},
        )

    @app.get("/api/v1/stats/{db}")
    def get_stats(db: str):
        return run(service.stats, db)

    return app
