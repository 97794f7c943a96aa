"""Reward-scoring service: a thin FastAPI shell over the reward engine.

Request and response bodies mirror the line-record file schemas field for
field, so anything that can score a file can score over the wire and vice
versa. Handlers are stateless and pure over the shared lexicon; scoring
through the service is bit-identical to calling the library.

Endpoints:
    POST /score        one instance + one response -> reward breakdown
    POST /score-group  one instance + G responses  -> rewards + advantages
    GET  /healthz      liveness probe

Errors always carry a machine-readable ``error`` object; malformed bodies get
a 4xx, never a crash. Bodies over the configured size limit are rejected.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator
from starlette.exceptions import HTTPException as StarletteHTTPException

from .core import Segment, TaskInstance, TaskKind
from .grpo import normalize_advantages
from .records import RecordError, instance_from_record
from .rewards import RewardBreakdown, combined_reward

DEFAULT_MAX_BODY_BYTES = 1 << 20


class InstanceModel(BaseModel):
    """Wire form of a task instance; identical to the instance-file record."""

    kind: str
    video: str
    clip: tuple[float, float]
    prompt: str
    target: dict
    source_id: str

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value not in {k.value for k in TaskKind}:
            raise ValueError(f"unknown task kind {value!r}")
        return value

    def to_instance(self) -> TaskInstance:
        return instance_from_record(
            {
                "kind": self.kind,
                "video": self.video,
                "clip": list(self.clip),
                "prompt": self.prompt,
                "target": self.target,
                "source_id": self.source_id,
            }
        )


class BreakdownModel(BaseModel):
    kind: str
    r_format: int
    r_task: float
    r_total: float
    alpha: int
    beta: int

    @classmethod
    def from_breakdown(cls, b: RewardBreakdown) -> "BreakdownModel":
        return cls(
            kind=b.kind.value,
            r_format=b.r_format,
            r_task=b.r_task,
            r_total=b.r_total,
            alpha=b.alpha,
            beta=b.beta,
        )


class ScoreRequest(BaseModel):
    instance: InstanceModel
    response: str


class ScoreGroupRequest(BaseModel):
    instance: InstanceModel
    responses: list[str] = Field(min_length=2)
    adv_epsilon: float = 1e-8


class ScoreGroupResponse(BaseModel):
    rewards: list[float]
    advantages: list[float]
    breakdowns: list[BreakdownModel]


def create_app(max_body_bytes: int | None = None) -> FastAPI:
    if max_body_bytes is None:
        max_body_bytes = int(os.environ.get("TVGLAB_MAX_BODY_BYTES", DEFAULT_MAX_BODY_BYTES))
    app = FastAPI(title="tvglab reward service", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def validation_error(_: Request, exc: RequestValidationError) -> JSONResponse:
        detail = [
            {"loc": [str(p) for p in e.get("loc", ())], "msg": str(e.get("msg", "")),
             "type": str(e.get("type", ""))}
            for e in exc.errors()
        ]
        return JSONResponse(
            status_code=422,
            content={"error": {"type": "validation", "detail": detail}},
        )

    @app.exception_handler(RecordError)
    async def record_error(_: Request, exc: RecordError) -> JSONResponse:
        return JSONResponse(
            status_code=422, content={"error": {"type": "record", "detail": str(exc)}}
        )

    @app.exception_handler(StarletteHTTPException)
    async def http_error(_: Request, exc: StarletteHTTPException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": {"type": "http", "detail": str(exc.detail)}},
        )

    @app.middleware("http")
    async def reject_oversized(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > max_body_bytes:
            return JSONResponse(
                status_code=413,
                content={"error": {"type": "oversized", "detail": f"body over {max_body_bytes} bytes"}},
            )
        return await call_next(request)

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/score", response_model=BreakdownModel)
    def score(request: ScoreRequest) -> BreakdownModel:
        breakdown = combined_reward(request.instance.to_instance(), request.response)
        return BreakdownModel.from_breakdown(breakdown)

    @app.post("/score-group", response_model=ScoreGroupResponse)
    def score_group(request: ScoreGroupRequest) -> ScoreGroupResponse:
        instance = request.instance.to_instance()
        breakdowns = [combined_reward(instance, r) for r in request.responses]
        rewards = [b.r_total for b in breakdowns]
        advantages = normalize_advantages(rewards, request.adv_epsilon)
        return ScoreGroupResponse(
            rewards=rewards,
            advantages=advantages,
            breakdowns=[BreakdownModel.from_breakdown(b) for b in breakdowns],
        )

    return app


app = create_app()


def serve_rewards(host: str = "127.0.0.1", port: int = 8710) -> None:
    """Run the reward service until interrupted."""
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


# Segment is re-exported for service clients that build clips programmatically.
__all__ = [
    "InstanceModel",
    "BreakdownModel",
    "ScoreRequest",
    "ScoreGroupRequest",
    "ScoreGroupResponse",
    "create_app",
    "app",
    "serve_rewards",
    "Segment",
]
