"""HTTP service for interactive matte prediction.

Endpoints:
  POST /api/session              multipart PNG -> {session_id, width, height}
  POST /api/predict              PredictRequest -> PredictResponse
  GET  /api/session/{id}/history prior interactions and outputs, in order
  GET  /api/health               {status, model_id}

Sessions live in memory and are evicted after an idle timeout. Inference
requests funnel through a single lock, so identical requests always return
pixel-identical responses.
"""

from __future__ import annotations

import base64
import hashlib
import io
import threading
import time
import uuid

import numpy as np
from fastapi import FastAPI, File, HTTPException, UploadFile
from PIL import Image as PILImage
from pydantic import BaseModel

from .interactions import Interaction
from .model import MattingNetwork, load_checkpoint, predict

DEFAULT_MAX_PIXELS = 4_194_304  # 2048 x 2048
DEFAULT_IDLE_TIMEOUT_S = 1800.0


class PredictRequest(BaseModel):
    session_id: str
    interaction: dict


class PredictResponse(BaseModel):
    mask: str
    alpha: str
    latency_ms: float
    model_id: str


class SessionInfo(BaseModel):
    session_id: str
    width: int
    height: int


class HistoryEntry(BaseModel):
    interaction: dict
    response: PredictResponse


class _Session:
    def __init__(self, session_id: str, image: np.ndarray):
        self.session_id = session_id
        self.image = image
        self.history: list[HistoryEntry] = []
        self.last_used = time.monotonic()


def _encode_gray_png(field: np.ndarray) -> str:
    arr = np.rint(np.clip(field, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def model_digest(model: MattingNetwork) -> str:
    h = hashlib.sha256()
    for key, tensor in model.state_dict().items():
        h.update(key.encode())
        h.update(tensor.numpy().tobytes())
    return h.hexdigest()[:12]


def create_app(
    model: MattingNetwork,
    model_id: str | None = None,
    max_pixels: int = DEFAULT_MAX_PIXELS,
    idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
) -> FastAPI:
    app = FastAPI(title="unimatte")
    model.eval()
    model_id = model_id or model_digest(model)
    sessions: dict[str, _Session] = {}
    store_lock = threading.Lock()
    infer_lock = threading.Lock()

    def evict_idle() -> None:
        now = time.monotonic()
        with store_lock:
            stale = [k for k, s in sessions.items() if now - s.last_used > idle_timeout_s]
            for k in stale:
                del sessions[k]

    def get_session(session_id: str) -> _Session:
        with store_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session: {session_id}")
        session.last_used = time.monotonic()
        return session

    @app.get("/api/health")
    def health():
        return {"status": "ok", "model_id": model_id}

    @app.post("/api/session", response_model=SessionInfo)
    async def create_session(file: UploadFile = File(...)):
        evict_idle()
        raw = await file.read()
        try:
            pil = PILImage.open(io.BytesIO(raw)).convert("RGB")
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"not a decodable image: {exc}")
        if pil.width * pil.height > max_pixels:
            raise HTTPException(
                status_code=413,
                detail=f"image has {pil.width * pil.height} pixels, limit is {max_pixels}",
            )
        image = np.asarray(pil, dtype=np.float64) / 255.0
        session_id = uuid.uuid4().hex
        with store_lock:
            sessions[session_id] = _Session(session_id, image)
        return SessionInfo(session_id=session_id, width=pil.width, height=pil.height)

    @app.post("/api/predict", response_model=PredictResponse)
    def predict_endpoint(request: PredictRequest):
        evict_idle()
        session = get_session(request.session_id)
        try:
            interaction = Interaction.from_dict(request.interaction)
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"interaction: {exc}")
        h, w = session.image.shape[:2]
        started = time.perf_counter()
        with infer_lock:
            try:
                from .interactions import encode_guidance

                guidance = encode_guidance(interaction, h, w)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=f"interaction: {exc}")
            mask, alpha = predict(model, session.image, guidance)
        latency_ms = (time.perf_counter() - started) * 1000.0
        response = PredictResponse(
            mask=_encode_gray_png(mask),
            alpha=_encode_gray_png(alpha),
            latency_ms=latency_ms,
            model_id=model_id,
        )
        session.history.append(
            HistoryEntry(interaction=interaction.to_dict(), response=response)
        )
        return response

    @app.get("/api/session/{session_id}/history")
    def history(session_id: str):
        session = get_session(session_id)
        return {"session_id": session_id, "history": [e.model_dump() for e in session.history]}

    return app


def create_app_from_checkpoint(checkpoint_path, **kwargs) -> FastAPI:
    model, _ = load_checkpoint(checkpoint_path)
    with open(checkpoint_path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()[:12]
    return create_app(model, model_id=kwargs.pop("model_id", digest), **kwargs)
