"""Plausibility scorer backends behind one interface, plus the shared
binary cross-entropy utility.

Backends guarantee: one score in [0, 1] per prompt, order preserved, and
scores independent of how a prompt list is split into batches.
"""

from __future__ import annotations

import math
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, Sequence

import requests

from .core import (
    EVENT_TASK,
    TASKS,
    CapabilityError,
    ContractError,
    ProtocolError,
    TransportError,
)

BCE_EPS = 1e-12


@dataclass(frozen=True)
class ScoreBatch:
    task: str
    prompts: tuple[str, ...]

    def __post_init__(self):
        if self.task not in TASKS:
            raise ContractError(f"unknown task {self.task!r}")
        if not self.prompts:
            raise ContractError("a score batch must contain at least one prompt")


class ScorerBackend(ABC):
    """Uniform plausibility scorer over prompt strings."""

    identity: str = "backend/0"
    can_train: bool = False

    @abstractmethod
    def score_batch(self, batch: ScoreBatch) -> list[float]:
        """One score in [0, 1] per prompt, in order."""

    def fit(self, task: str, examples: Sequence[tuple[str, int]], epochs: int = 1) -> float:
        """Train on (prompt, label) pairs; returns the final mean BCE."""
        raise CapabilityError(f"backend {self.identity} cannot be trained")


def score_batch(backend: ScorerBackend, batch: ScoreBatch) -> list[float]:
    """Score a batch through ``backend``, enforcing the output contract."""
    scores = backend.score_batch(batch)
    if len(scores) != len(batch.prompts):
        raise ProtocolError(
            f"backend {backend.identity} returned {len(scores)} scores "
            f"for {len(batch.prompts)} prompts"
        )
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise ProtocolError(f"backend {backend.identity} returned score {s} outside [0, 1]")
    return scores


def score_prompts(
    backend: ScorerBackend, task: str, prompts: Sequence[str], chunk_size: int = 256
) -> list[float]:
    """Score an arbitrarily long prompt list in chunks.

    Safe because backends are batching-invariant.
    """
    out: list[float] = []
    for i in range(0, len(prompts), chunk_size):
        chunk = tuple(prompts[i : i + chunk_size])
        out.extend(score_batch(backend, ScoreBatch(task=task, prompts=chunk)))
    return out


def fit(
    backend: ScorerBackend,
    task: str,
    examples: Sequence[tuple[str, int]],
    epochs: int = 1,
) -> float:
    if not backend.can_train:
        raise CapabilityError(f"backend {backend.identity} cannot be trained")
    for _, label in examples:
        if label not in (0, 1):
            raise ContractError(f"training labels must be 0 or 1, got {label!r}")
    return backend.fit(task, examples, epochs=epochs)


def bce_loss(scores: Sequence[float], labels: Sequence[int], eps: float = BCE_EPS) -> float:
    """Mean of -[y*log(s) + (1-y)*log(1-s)] with scores clamped to
    [eps, 1-eps]."""
    if len(scores) != len(labels):
        raise ContractError(f"got {len(scores)} scores but {len(labels)} labels")
    if not scores:
        raise ContractError("bce_loss needs at least one item")
    total = 0.0
    for s, y in zip(scores, labels):
        if y not in (0, 1):
            raise ContractError(f"labels must be 0 or 1, got {y!r}")
        s = min(max(s, eps), 1.0 - eps)
        total += -(y * math.log(s) + (1 - y) * math.log(1.0 - s))
    return total / len(scores)


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def overlap_tokens(text: str) -> frozenset[str]:
    """Lowercase and split on non-alphanumerics."""
    return frozenset(t for t in _TOKEN_SPLIT.split(text.lower()) if t)


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def smooth_unit(s: float) -> float:
    """Map [0, 1] into (0.02, 0.98) so thresholds stay reachable but never
    trivially saturated."""
    return 0.02 + 0.96 * s


@dataclass(frozen=True)
class _PromptParts:
    """Fields recovered from a prompt by splitting on the separator."""

    instance: str
    concept: str
    head: str
    tail: str
    extras: str


def parse_prompt(prompt: str, task: str, sep: str = " [SEP] ") -> _PromptParts:
    fields = prompt.split(sep)
    first = fields[0]
    if first.startswith("[CLS] "):
        first = first[len("[CLS] ") :]
    if task == EVENT_TASK:
        open_i = first.find("<c>")
        close_i = first.find("</c>", open_i + 3)
        if open_i >= 0 and close_i >= 0:
            instance = first[open_i + 3 : close_i]
        else:
            instance = first
        concept = fields[1] if len(fields) > 1 else ""
        extras = fields[2] if len(fields) > 2 else ""
        return _PromptParts(instance=instance, concept=concept, head="", tail="", extras=extras)
    head = first
    tail = fields[2] if len(fields) > 2 else ""
    extras = fields[3] if len(fields) > 3 else ""
    return _PromptParts(instance="", concept="", head=head, tail=tail, extras=extras)


class LexicalOverlapScorer(ScorerBackend):
    """Deterministic test backend: smoothed Jaccard token overlap.

    Event task compares concept tokens against instance tokens; triple task
    compares head tokens against tail tokens. Symmetric in its two token
    sets and always strictly inside (0, 1).
    """

    identity = "lexical-overlap/1"
    can_train = False

    def score_batch(self, batch: ScoreBatch) -> list[float]:
        scores = []
        for prompt in batch.prompts:
            parts = parse_prompt(prompt, batch.task)
            if batch.task == EVENT_TASK:
                raw = jaccard(overlap_tokens(parts.concept), overlap_tokens(parts.instance))
            else:
                raw = jaccard(overlap_tokens(parts.head), overlap_tokens(parts.tail))
            scores.append(smooth_unit(raw))
        return scores


class RecordedScorer(ScorerBackend):
    """Replay backend mapping exact prompt strings to fixed scores."""

    can_train = False

    def __init__(
        self,
        table: Mapping[str, float],
        default: float | None = None,
        identity: str = "recorded/1",
    ):
        self.table = dict(table)
        self.default = default
        self.identity = identity

    def score_batch(self, batch: ScoreBatch) -> list[float]:
        scores = []
        for prompt in batch.prompts:
            if prompt in self.table:
                scores.append(self.table[prompt])
            elif self.default is not None:
                scores.append(self.default)
            else:
                raise ContractError(f"no recorded score for prompt {prompt!r}")
        return scores


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


class LogisticOverlapScorer(ScorerBackend):
    """Trainable in-process backend: logistic regression over token-overlap
    features of the prompt.

    Features per task: target overlap (concept vs instance, or head vs
    tail), mean overlap between the target side and the retrieved extras,
    and whether any extras are present. Full-batch gradient descent keeps
    training deterministic.
    """

    can_train = True

    def __init__(self, lr: float = 0.5, steps_per_epoch: int = 200):
        self.lr = lr
        self.steps_per_epoch = steps_per_epoch
        # weights per task: bias + 3 features
        self.weights: dict[str, list[float]] = {t: [0.0, 0.0, 0.0, 0.0] for t in TASKS}
        self.identity = "overlap-logistic/1"

    def _features(self, prompt: str, task: str) -> list[float]:
        parts = parse_prompt(prompt, task)
        if task == EVENT_TASK:
            target = overlap_tokens(parts.concept)
            anchor = overlap_tokens(parts.instance)
        else:
            target = overlap_tokens(parts.tail)
            anchor = overlap_tokens(parts.head)
        extras = [e for e in parts.extras.split(", ") if e] if parts.extras else []
        if extras:
            mean_extra = sum(jaccard(target, overlap_tokens(e)) for e in extras) / len(extras)
        else:
            mean_extra = 0.0
        return [1.0, jaccard(target, anchor), mean_extra, 1.0 if extras else 0.0]

    def _score_one(self, prompt: str, task: str) -> float:
        w = self.weights[task]
        f = self._features(prompt, task)
        z = sum(wi * fi for wi, fi in zip(w, f))
        # clamp away from the exact endpoints like every other backend
        return min(max(_sigmoid(z), 1e-9), 1.0 - 1e-9)

    def score_batch(self, batch: ScoreBatch) -> list[float]:
        return [self._score_one(p, batch.task) for p in batch.prompts]

    def fit(self, task: str, examples: Sequence[tuple[str, int]], epochs: int = 1) -> float:
        if task not in TASKS:
            raise ContractError(f"unknown task {task!r}")
        if not examples:
            raise ContractError("fit needs at least one example")
        feats = [self._features(p, task) for p, _ in examples]
        labels = [y for _, y in examples]
        w = list(self.weights[task])
        n = len(examples)
        for _ in range(self.steps_per_epoch * max(1, epochs)):
            grad = [0.0, 0.0, 0.0, 0.0]
            for f, y in zip(feats, labels):
                pred = _sigmoid(sum(wi * fi for wi, fi in zip(w, f)))
                err = pred - y
                for j in range(4):
                    grad[j] += err * f[j]
            for j in range(4):
                w[j] -= self.lr * grad[j] / n
        self.weights[task] = w
        scores = [
            _sigmoid(sum(wi * fi for wi, fi in zip(w, f)))
            for f in feats
        ]
        return bce_loss(scores, labels)


class RemoteScorer(ScorerBackend):
    """Client for the JSON-over-HTTP scoring protocol.

    Retries transport failures with exponential backoff (3 attempts,
    starting at 250 ms) before raising TransportError.
    """

    can_train = True

    def __init__(
        self,
        endpoint: str,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.25,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self._identity: str | None = None

    @property
    def identity(self) -> str:  # type: ignore[override]
        if self._identity is None:
            payload = self._request("GET", "/health")
            remote = payload.get("identity", "unknown")
            self._identity = f"remote:{remote}"
        return self._identity

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.endpoint + path
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self.session.request(method, url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (502, 503, 504):
                last_error = TransportError(f"{url} returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"{url} returned {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned non-JSON body") from exc
        raise TransportError(f"{url} unreachable after {self.retries} attempts: {last_error}")

    def score_batch(self, batch: ScoreBatch) -> list[float]:
        payload = self._request(
            "POST", "/score", {"task": batch.task, "prompts": list(batch.prompts)}
        )
        scores = payload.get("scores")
        if not isinstance(scores, list) or len(scores) != len(batch.prompts):
            raise ProtocolError("malformed /score response")
        for s in scores:
            if not isinstance(s, (int, float)) or not 0.0 <= s <= 1.0:
                raise ProtocolError(f"remote score {s!r} outside [0, 1]")
        return [float(s) for s in scores]

    def fit(self, task: str, examples: Sequence[tuple[str, int]], epochs: int = 1) -> float:
        body = {
            "task": task,
            "examples": [{"prompt": p, "label": y} for p, y in examples],
            "epochs": epochs,
        }
        payload = self._request("POST", "/train", body)
        loss = payload.get("final_loss")
        if not isinstance(loss, (int, float)):
            raise ProtocolError("malformed /train response")
        return float(loss)
