"""FastAPI app exposing POST /v1/nli and /v1/generate over real checkpoints.

The wire shapes mirror the client exactly: non-200 responses carry
{"error": str}, schema violations are 400, and 503 means the models are
still loading (or failed to load). Requests serialize on one model
instance per kind.
"""

import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from .config import SidecarConfig
from .modeling import load_backends


class NliBody(BaseModel):
    premise: str
    hypotheses: list[str] = Field(min_length=1)

    @field_validator("premise")
    @classmethod
    def _premise_non_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("premise must be non-blank")
        return value

    @field_validator("hypotheses")
    @classmethod
    def _hypotheses_non_blank(cls, value: list[str]) -> list[str]:
        if any(not h.strip() for h in value):
            raise ValueError("hypotheses must be non-blank")
        return value


class GenBody(BaseModel):
    prompt: str
    n: int = Field(default=1, ge=1, le=64)
    max_new_tokens: int = Field(default=16, ge=1, le=512)
    temperature: float = Field(default=0.0, ge=0.0)
    seed: int | None = None

    @field_validator("prompt")
    @classmethod
    def _prompt_non_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("prompt must be non-blank")
        return value


class _State:
    def __init__(self):
        self.nli = None
        self.gen = None
        self.error: str | None = None
        self.lock = threading.Lock()

    @property
    def ready(self) -> bool:
        return self.nli is not None and self.gen is not None


def build_app(config: SidecarConfig, loader=None) -> FastAPI:
    """App factory. `loader` overrides checkpoint loading in tests."""
    state = _State()
    load = loader or (lambda: load_backends(config))

    def _load():
        try:
            state.nli, state.gen = load()
        except Exception as exc:  # surfaced as 503 on every request
            state.error = f"model loading failed: {exc}"

    @asynccontextmanager
    async def lifespan(app):
        thread = threading.Thread(target=_load, daemon=True)
        thread.start()
        yield

    app = FastAPI(title="ztail sidecar", lifespan=lifespan)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        del request
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def _unavailable() -> JSONResponse:
        message = state.error or "models are still loading"
        return JSONResponse(status_code=503, content={"error": message})

    @app.get("/healthz")
    def healthz():
        if state.error:
            return {"status": "failed", "error": state.error}
        return {"status": "ready" if state.ready else "loading"}

    @app.post("/v1/nli")
    def nli(body: NliBody):
        if not state.ready:
            return _unavailable()
        with state.lock:
            scores = state.nli.score(body.premise, body.hypotheses)
        return {"scores": scores}

    @app.post("/v1/generate")
    def generate(body: GenBody):
        if not state.ready:
            return _unavailable()
        with state.lock:
            outputs = state.gen.generate(
                body.prompt, body.n, body.max_new_tokens, body.temperature, body.seed
            )
        return {"outputs": outputs}

    return app
