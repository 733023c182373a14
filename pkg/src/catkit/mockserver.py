"""In-process HTTP scoring service implementing the wire protocol, used by
integration tests and the serve-mock CLI command.

Protocol:
    POST /score  {"task": str, "prompts": [str]}            -> {"scores": [float]}
    POST /train  {"task": str, "examples": [...], "epochs"} -> {"final_loss": float}
    GET  /health                                            -> {"status": "ok", "identity": str}

Malformed requests get 400; /score gets 503 while a /train is running.
"""

from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .core import CatkitError, TASKS
from .scoring import LogisticOverlapScorer, ScoreBatch, ScorerBackend, score_batch


class MockScoringService:
    """Wraps a backend behind the wire protocol with a training lock."""

    def __init__(self, backend: ScorerBackend | None = None):
        self.backend = backend or LogisticOverlapScorer()
        self.train_lock = threading.Lock()

    def handle_score(self, body: dict) -> dict:
        task = body.get("task")
        prompts = body.get("prompts")
        if task not in TASKS or not isinstance(prompts, list) or not prompts:
            raise ValueError("body must be {'task': <task>, 'prompts': [str, ...]}")
        if not all(isinstance(p, str) for p in prompts):
            raise ValueError("prompts must be strings")
        batch = ScoreBatch(task=task, prompts=tuple(prompts))
        scores = score_batch(self.backend, batch)
        # service-side clamp: a conformant service never emits out-of-range scores
        return {"scores": [min(max(float(s), 0.0), 1.0) for s in scores]}

    def handle_train(self, body: dict) -> dict:
        task = body.get("task")
        examples = body.get("examples")
        epochs = body.get("epochs", 1)
        if task not in TASKS or not isinstance(examples, list) or not examples:
            raise ValueError("body must be {'task', 'examples': [...], 'epochs'}")
        pairs = []
        for ex in examples:
            if (
                not isinstance(ex, dict)
                or not isinstance(ex.get("prompt"), str)
                or ex.get("label") not in (0, 1)
            ):
                raise ValueError("examples must be {'prompt': str, 'label': 0|1}")
            pairs.append((ex["prompt"], int(ex["label"])))
        if not isinstance(epochs, int) or epochs < 1:
            raise ValueError("epochs must be a positive integer")
        loss = self.backend.fit(task, pairs, epochs=epochs)
        return {"final_loss": float(loss)}

    def handle_health(self) -> dict:
        return {"status": "ok", "identity": self.backend.identity}


class _Handler(BaseHTTPRequestHandler):
    service: MockScoringService  # injected by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        obj = json.loads(raw.decode("utf-8"))
        if not isinstance(obj, dict):
            raise ValueError("body must be a JSON object")
        return obj

    def do_GET(self):
        if self.path == "/health":
            self._send(200, self.service.handle_health())
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        try:
            body = self._read_json()
        except (ValueError, UnicodeDecodeError) as exc:
            self._send(400, {"error": f"malformed JSON: {exc}"})
            return
        if self.path == "/score":
            if self.service.train_lock.locked():
                self._send(503, {"error": "busy training"})
                return
            try:
                self._send(200, self.service.handle_score(body))
            except (ValueError, CatkitError) as exc:
                self._send(400, {"error": str(exc)})
        elif self.path == "/train":
            if not self.service.train_lock.acquire(blocking=False):
                self._send(503, {"error": "busy training"})
                return
            # release before responding so a client that reacts to the reply
            # immediately never sees a stale 503
            try:
                status, payload = 200, self.service.handle_train(body)
            except (ValueError, CatkitError) as exc:
                status, payload = 400, {"error": str(exc)}
            finally:
                self.service.train_lock.release()
            self._send(status, payload)
        else:
            self._send(404, {"error": f"unknown path {self.path}"})


def make_server(
    host: str = "127.0.0.1", port: int = 0, backend: ScorerBackend | None = None
) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    service = MockScoringService(backend)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(host: str, port: int, backend: ScorerBackend | None = None) -> None:
    server = make_server(host, port, backend)
    bound_port = server.server_address[1]
    print(
        f"mock scoring service listening on http://{host}:{bound_port}",
        file=sys.stderr,
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
