"""HTTP scoring service.

POST /score takes {"image": <server path or "base64:<payload>">, "texts":
[...]} and returns {"scores": [...], "model_name": "..."} with one score in
[0, 1] per text, in request order. GET /health reports readiness. Status
codes follow the wire contract: 400 malformed request, 404 image not found,
422 undecodable image, 503 model not loaded.

Request handling is stateless; the model handle is loaded once and shared
read-only, so concurrent requests are safe.
"""

from __future__ import annotations

import base64
import binascii
import os
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .model import ImageDecodeError, LITE_MODEL_NAME, load_model

MODEL_ENV = "SCORER_MODEL"
DEVICE_ENV = "SCORER_DEVICE"
PORT_ENV = "SCORER_PORT"

BASE64_PREFIX = "base64:"


class ScoreRequest(BaseModel):
    image: str = Field(min_length=1)
    texts: list[str] = Field(min_length=1)


class ModelHolder:
    """Shared model handle; /score and /health run 503 until load() ran."""

    def __init__(self, model_name: str, device: str):
        self.model_name = model_name
        self.device = device
        self.model = None

    def load(self) -> None:
        if self.model is None:
            self.model = load_model(self.model_name)

    @property
    def loaded(self) -> bool:
        return self.model is not None


def _resolve_image_bytes(image: str) -> bytes:
    if image.startswith(BASE64_PREFIX):
        try:
            return base64.b64decode(image[len(BASE64_PREFIX):], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ImageDecodeError(f"invalid base64 payload: {exc}") from exc
    path = Path(image)
    if not path.is_file():
        raise FileNotFoundError(image)
    return path.read_bytes()


def create_app(
    model_name: str | None = None,
    device: str | None = None,
    holder: ModelHolder | None = None,
) -> FastAPI:
    """Build the service; pass a holder to control load timing in tests."""
    if holder is None:
        holder = ModelHolder(
            model_name=model_name or os.environ.get(MODEL_ENV, LITE_MODEL_NAME),
            device=device or os.environ.get(DEVICE_ENV, "cpu"),
        )
        holder.load()
    app = FastAPI(title="scorer-service")
    app.state.holder = holder

    @app.exception_handler(RequestValidationError)
    async def malformed_request(_: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/health")
    async def health():
        if not holder.loaded:
            return JSONResponse(
                status_code=503,
                content={"status": "loading", "model_name": holder.model_name, "device": holder.device},
            )
        return {"status": "ok", "model_name": holder.model_name, "device": holder.device}

    @app.post("/score")
    async def score(request: ScoreRequest):
        if not holder.loaded:
            return JSONResponse(status_code=503, content={"detail": "model not loaded"})
        try:
            image_bytes = _resolve_image_bytes(request.image)
        except FileNotFoundError as exc:
            return JSONResponse(status_code=404, content={"detail": f"image not found: {exc}"})
        except ImageDecodeError as exc:
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        try:
            scores = holder.model.score(image_bytes, request.texts)
        except ImageDecodeError as exc:
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        return {"scores": scores, "model_name": holder.model_name}

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get(PORT_ENV, "8400"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port)


if __name__ == "__main__":
    main()
