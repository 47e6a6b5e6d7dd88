"""HTTP inference service: loads one frozen bundle at startup, answers
stateless prediction requests, and serves the class table. Optionally
hosts a static web UI directory. Works fully offline.

POST /predict accepts raw PNG/JPEG bytes, or multipart/form-data with
an `image` field. GET /classes lists all classes. GET /health is a
liveness probe.
"""
import email
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from leafcnn.data import ClassInfo, decode_resize, load_class_table, normalize
from leafcnn.errors import DecodeError
from leafcnn.model import FrozenModel, load_frozen, predict

DEFAULT_MAX_UPLOAD = 10 * 1024 * 1024
MODEL_PATH_ENV = "LEAFCNN_MODEL"

HEALTHY_EMOJI = "🌿"
DISEASED_EMOJI = "🦠"


@dataclass
class ServiceConfig:
    model_path: str = None
    port: int = 8000
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD
    top_k: int = 5
    static_dir: str = None


def class_display(info: ClassInfo):
    """(plant_emoji, status_emoji, status_color) for one class."""
    if info.healthy:
        return info.plant_emoji, HEALTHY_EMOJI, "green"
    return info.plant_emoji, DISEASED_EMOJI, "red"


def _extract_image(body: bytes, content_type: str) -> bytes:
    """Raw image bytes from the request body; unwraps the `image` field
    of a multipart form."""
    if content_type and content_type.lower().startswith("multipart/"):
        msg = email.message_from_bytes(
            b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
        )
        for part in msg.walk():
            if part.is_multipart():
                continue
            if part.get_param("name", header="content-disposition") == "image":
                payload = part.get_payload(decode=True)
                if payload:
                    return payload
        raise DecodeError("multipart body has no usable 'image' field")
    return body


def run_prediction(model: FrozenModel, image_bytes: bytes, top_k: int = 5) -> dict:
    """Decode, preprocess, forward, and assemble the prediction record."""
    size = model.network.input_shape[0]
    img = normalize(decode_resize(io.BytesIO(image_bytes), size))
    probs = predict(model, img)
    index = int(np.argmax(probs))
    info = model.classes[index]
    plant_emoji, status_emoji, status_color = class_display(info)
    order = np.argsort(-probs, kind="stable")[:top_k]
    return {
        "class_index": index,
        "plant": info.plant,
        "condition": info.condition,
        "healthy": info.healthy,
        "confidence": float(probs[index]),
        "plant_emoji": plant_emoji,
        "status_emoji": status_emoji,
        "status_color": status_color,
        "top_k": [
            {
                "class_index": int(i),
                "plant": model.classes[int(i)].plant,
                "condition": model.classes[int(i)].condition,
                "probability": float(probs[int(i)]),
            }
            for i in order
        ],
    }


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="leaf disease inference service")
    model = None
    if config.model_path and Path(config.model_path).is_file():
        model = load_frozen(config.model_path)
    app.state.model = model

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/classes")
    def classes():
        table = app.state.model.classes if app.state.model else load_class_table()
        return JSONResponse([c.to_dict() for c in table])

    @app.post("/predict")
    async def predict_endpoint(request: Request):
        if app.state.model is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        declared = request.headers.get("content-length", "")
        if declared.isdigit() and int(declared) > config.max_upload_bytes:
            raise HTTPException(status_code=413, detail="upload too large")
        body = await request.body()
        if len(body) > config.max_upload_bytes:
            raise HTTPException(status_code=413, detail="upload too large")
        if not body:
            raise HTTPException(status_code=400, detail="empty body")
        try:
            image_bytes = _extract_image(body, request.headers.get("content-type", ""))
            result = run_prediction(app.state.model, image_bytes, config.top_k)
        except DecodeError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        return JSONResponse(result)

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")
    return app


def run_service(config: ServiceConfig, host: str = "127.0.0.1"):
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=config.port, log_level="info")
