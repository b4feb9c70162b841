"""HTTP inference service over a frozen checkpoint.

Every response body is the canonical JSON form (sorted keys, compact,
trailing newline), so a response compares bit-for-bit against the
corresponding CLI output.  The model is loaded once at startup and only
read afterwards.
"""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from sketchembed.embedding import EmbeddingIndex, knn, load_embeddings
from sketchembed.pipeline import PipelineError, SketchPipeline, load_pipeline
from sketchembed.quickdraw import ParseError, canonical_json, drawing_payload, parse_quickdraw
from sketchembed.sketch import Sketch

Strokes = list[list[list[float]]]


@dataclasses.dataclass
class ServiceConfig:
    """What to load; checkpoint and codebook must use the same scheme."""

    checkpoint: str | None = None
    codebook: str | None = None
    index: str | None = None
    joint: str | None = None
    max_points: int = 20_000
    cors_origins: tuple[str, ...] = ("*",)

    def __post_init__(self):
        if self.max_points <= 0:
            raise ValueError("max_points must be positive")


class StrokesBody(BaseModel):
    strokes: Strokes


class InterpolateBody(BaseModel):
    a: Strokes
    b: Strokes
    steps: int = Field(default=10, ge=2, le=100)


class RetrieveBody(BaseModel):
    strokes: Strokes
    k: int = Field(default=10, ge=1)


class PerturbBody(BaseModel):
    strokes: Strokes
    sigma: float = Field(ge=0.0)
    seed: int = 0


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _json_response(payload, status: int = 200) -> Response:
    return Response(content=canonical_json(payload) + "\n", status_code=status,
                    media_type="application/json")


def create_app(cfg: ServiceConfig) -> FastAPI:
    pipeline: SketchPipeline | None = None
    checkpoint_sha = None
    if cfg.checkpoint:
        pipeline = load_pipeline(cfg.checkpoint, cfg.codebook)
        checkpoint_sha = hashlib.sha256(Path(cfg.checkpoint).read_bytes()).hexdigest()
    index: EmbeddingIndex | None = load_embeddings(cfg.index) if cfg.index else None
    joint_heads = None
    if cfg.joint:
        from sketchembed.crossmodal.store import load_joint

        _, joint_heads, _ = load_joint(cfg.joint)

    app = FastAPI(title="sketchembed", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cfg.cors_origins),
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    def need_pipeline() -> SketchPipeline:
        if pipeline is None:
            raise ApiError(503, "model not loaded")
        return pipeline

    def to_sketch(strokes: Strokes) -> Sketch:
        try:
            sketch = parse_quickdraw(strokes)
        except ParseError as exc:
            raise ApiError(400, str(exc)) from exc
        points = sum(len(s) for s in sketch.strokes)
        if points > cfg.max_points:
            raise ApiError(413, f"sketch has {points} points, limit {cfg.max_points}")
        return sketch

    @app.exception_handler(RequestValidationError)
    async def on_validation(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(part) for part in err["loc"] if part != "body"),
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return _json_response({"error": "validation", "detail": detail}, status=400)

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return _json_response({"error": str(exc)}, status=exc.status)

    @app.exception_handler(PipelineError)
    async def on_pipeline_error(request: Request, exc: PipelineError):
        return _json_response({"error": str(exc)}, status=400)

    @app.exception_handler(ValueError)
    async def on_value_error(request: Request, exc: ValueError):
        return _json_response({"error": str(exc)}, status=400)

    @app.get("/api/health")
    async def health():
        return _json_response({"status": "ok", "checkpoint_sha256": checkpoint_sha})

    @app.get("/api/config")
    async def config():
        pipe = need_pipeline()
        mc = pipe.model.cfg
        return _json_response({
            "mode": mc.mode,
            "scheme": pipe.scheme,
            "d_model": mc.d_model,
            "n_layers": mc.n_layers,
            "n_heads": mc.n_heads,
            "d_ff": mc.d_ff,
            "max_len": mc.max_len,
            "vocab_size": mc.vocab_size,
            "n_classes": mc.n_classes,
            "class_names": list(pipe.class_names),
            "canvas": list(pipe.canvas),
            "rdp_epsilon": pipe.rdp_epsilon,
            "offset_scale": pipe.offset_scale,
            "checkpoint_sha256": checkpoint_sha,
            "has_index": index is not None,
            "has_joint": joint_heads is not None,
        })

    @app.post("/api/encode")
    async def encode(body: StrokesBody):
        pipe = need_pipeline()
        z = pipe.embed(to_sketch(body.strokes))
        return _json_response({"embedding": [float(v) for v in z]})

    @app.post("/api/reconstruct")
    async def reconstruct(body: StrokesBody):
        pipe = need_pipeline()
        out = pipe.reconstruct(to_sketch(body.strokes))
        return _json_response({"strokes": drawing_payload(out)})

    @app.post("/api/interpolate")
    async def interpolate(body: InterpolateBody):
        pipe = need_pipeline()
        frames = pipe.interpolate(to_sketch(body.a), to_sketch(body.b), steps=body.steps)
        return _json_response({"frames": [drawing_payload(f) for f in frames]})

    @app.post("/api/classify")
    async def classify(body: StrokesBody):
        pipe = need_pipeline()
        if pipe.model.classifier is None:
            raise ApiError(503, "checkpoint has no classifier head")
        name, probs = pipe.classify_sketch(to_sketch(body.strokes))
        return _json_response({"class": name, "probabilities": [float(p) for p in probs]})

    @app.post("/api/retrieve")
    async def retrieve(body: RetrieveBody):
        pipe = need_pipeline()
        if index is None:
            raise ApiError(503, "no retrieval index loaded")
        z = pipe.embed(to_sketch(body.strokes))
        if joint_heads is not None:
            z = joint_heads.embed_vector(z[None])[0]
        results = knn(index, z, body.k)
        return _json_response({"results": [{"id": rid, "score": s} for rid, s in results]})

    @app.post("/api/perturb")
    async def perturb(body: PerturbBody):
        pipe = need_pipeline()
        out = pipe.perturb_sketch(to_sketch(body.strokes), body.sigma, seed=body.seed)
        return _json_response({"strokes": drawing_payload(out)})

    return app
