"""HTTP surface implementing the scoring wire protocol:

    POST /score  {"task", "prompts"}                      -> {"scores": [...]}
    POST /train  {"task", "examples", "epochs", ...}      -> {"final_loss": ...}
    GET  /health                                          -> {"status", "identity"}

Malformed bodies get 400; /score and concurrent /train get 503 while a
training run holds the lock.
"""

from __future__ import annotations

import threading
from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServiceConfig
from .model import NeuralScorer

Task = Literal["event_conceptualization", "triple_conceptualization"]


class ScoreRequest(BaseModel):
    task: Task
    prompts: list[str] = Field(min_length=1)


class TrainExample(BaseModel):
    prompt: str
    label: Literal[0, 1]


class TrainRequest(BaseModel):
    task: Task
    examples: list[TrainExample] = Field(min_length=1)
    epochs: int = Field(default=1, ge=1)
    dev_examples: Optional[list[TrainExample]] = None


def create_app(config: ServiceConfig | None = None, scorer: NeuralScorer | None = None) -> FastAPI:
    config = config or ServiceConfig()
    scorer = scorer or NeuralScorer(config)
    train_lock = threading.Lock()
    app = FastAPI(title="scoring-service")

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/health")
    def health():
        return {"status": "ok", "identity": scorer.identity()}

    @app.post("/score")
    def score(body: ScoreRequest):
        if train_lock.locked():
            return JSONResponse(status_code=503, content={"error": "busy training"})
        return {"scores": scorer.score(body.task, body.prompts)}

    @app.post("/train")
    def train(body: TrainRequest):
        if not train_lock.acquire(blocking=False):
            return JSONResponse(status_code=503, content={"error": "busy training"})
        try:
            loss = scorer.train(
                body.task,
                [(ex.prompt, ex.label) for ex in body.examples],
                epochs=body.epochs,
                dev_examples=(
                    [(ex.prompt, ex.label) for ex in body.dev_examples]
                    if body.dev_examples
                    else None
                ),
            )
        finally:
            train_lock.release()
        return {"final_loss": loss}

    return app
