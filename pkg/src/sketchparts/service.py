"""JSON HTTP API over editing sessions.

Error codes map to statuses: empty_sketch 422, empty_shape 422,
bad_selection 400, no_session 404, bad_request 400, internal 500."""

from __future__ import annotations

import base64
import io

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image

from .editing import Editor
from .errors import (
    BadSelectionError,
    EmptyShapeError,
    EmptySketchError,
    SessionNotFoundError,
)
from .render import Camera

STATUS_BY_CODE = {
    "empty_sketch": 422,
    "empty_shape": 422,
    "bad_selection": 400,
    "no_session": 404,
    "bad_request": 400,
    "internal": 500,
}


def _error(code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=STATUS_BY_CODE[code],
                        content={"code": code, "message": message})


def _decode_png(payload: dict) -> np.ndarray:
    if not isinstance(payload, dict) or "sketch_png_base64" not in payload:
        raise ValueError("body must carry sketch_png_base64")
    try:
        raw = base64.b64decode(payload["sketch_png_base64"], validate=True)
        img = Image.open(io.BytesIO(raw)).convert("L")
    except Exception as exc:
        raise ValueError(f"not a decodable PNG: {exc}") from exc
    return np.asarray(img, dtype=np.float64) / 255.0


def _encode_png(pixels: np.ndarray) -> str:
    img = Image.fromarray(np.round(np.clip(pixels, 0.0, 1.0) * 255).astype(np.uint8), "L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _edit_payload(res) -> dict:
    return {
        "mesh": res.mesh.to_json_dict(),
        "presence": res.presence,
        "completed": res.completed,
        "empty": res.empty,
    }


def create_app(editor: Editor) -> FastAPI:
    app = FastAPI(title="sketchparts service")

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return _error("bad_request", str(exc.errors()[:1]))

    @app.exception_handler(EmptySketchError)
    async def empty_sketch(request: Request, exc: EmptySketchError):
        return _error("empty_sketch", str(exc))

    @app.exception_handler(EmptyShapeError)
    async def empty_shape(request: Request, exc: EmptyShapeError):
        return _error("empty_shape", str(exc))

    @app.exception_handler(BadSelectionError)
    async def bad_selection(request: Request, exc: BadSelectionError):
        return _error("bad_selection", str(exc))

    @app.exception_handler(SessionNotFoundError)
    async def no_session(request: Request, exc: SessionNotFoundError):
        return _error("no_session", str(exc.args[0] if exc.args else exc))

    @app.exception_handler(ValueError)
    async def bad_request(request: Request, exc: ValueError):
        return _error("bad_request", str(exc))

    @app.exception_handler(Exception)
    async def internal(request: Request, exc: Exception):
        return _error("internal", f"{type(exc).__name__}: {exc}")

    @app.get("/api/health")
    async def health():
        return {"status": "ok", "model": "loaded"}

    @app.post("/api/sessions", status_code=201)
    async def create_session():
        session = editor.create_session()
        return {"session_id": session.id}

    @app.delete("/api/sessions/{session_id}")
    async def delete_session(session_id: str):
        editor.drop(session_id)
        return {"deleted": session_id}

    @app.post("/api/sessions/{session_id}/generate")
    async def generate(session_id: str, body: dict):
        session = editor.get(session_id)
        return _edit_payload(editor.generate(session, _decode_png(body)))

    @app.post("/api/sessions/{session_id}/select")
    async def select(session_id: str, body: dict):
        session = editor.get(session_id)
        ids = body.get("part_ids")
        if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
            raise ValueError("part_ids must be a list of integers")
        chosen = editor.select_parts(session, ids)
        return {"selected": sorted(chosen)}

    @app.post("/api/sessions/{session_id}/refine")
    async def refine(session_id: str):
        session = editor.get(session_id)
        return _edit_payload(editor.refine_selected(session))

    @app.post("/api/sessions/{session_id}/blend")
    async def blend(session_id: str, body: dict):
        session = editor.get(session_id)
        return _edit_payload(editor.blend(session, _decode_png(body)))

    @app.get("/api/sessions/{session_id}/outline")
    async def outline(session_id: str, azimuth: float | None = None,
                      elevation: float | None = None):
        session = editor.get(session_id)
        camera = None
        if azimuth is not None or elevation is not None:
            base = session.camera
            camera = Camera(
                azimuth=base.azimuth if azimuth is None else float(azimuth),
                elevation=base.elevation if elevation is None else float(elevation),
                distance=base.distance,
            )
        sketch = editor.outline_current(session, camera)
        return {"sketch_png_base64": _encode_png(sketch.pixels)}

    @app.post("/api/sessions/{session_id}/undo")
    async def undo(session_id: str):
        session = editor.get(session_id)
        return _edit_payload(editor.undo(session))

    return app


def build_editor(model_path: str, refiner_path: str, grid_res: int = 48) -> Editor:
    from .trainer import load_model

    model = load_model(model_path, "sketch2shape")
    refiner = load_model(refiner_path, "refiner")
    if model.cfg.m != refiner.cfg.m or model.cfg.d_model != refiner.cfg.d_model:
        raise ValueError("model and refiner checkpoints disagree on slot shape")
    return Editor(model, refiner, grid_res=grid_res)


def serve(bind: str, model_path: str, refiner_path: str, grid_res: int = 48) -> None:
    import uvicorn

    host, _, port = bind.partition(":")
    app = create_app(build_editor(model_path, refiner_path, grid_res))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")
