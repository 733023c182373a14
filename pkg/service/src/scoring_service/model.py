"""Encoder classifiers behind the scoring interface: a sequence encoder
whose leading-position representation feeds a single logit, squashed by a
sigmoid into a plausibility score.

Two backbones: a self-contained "mini" transformer with a hashing
tokenizer (no downloads, deterministic), and any Hugging Face encoder via
the transformers package when its weights are available locally.
"""

from __future__ import annotations

import copy
import hashlib
import math
import os
import re

import torch
from torch import nn

from .config import ConfigError, ServiceConfig

EVENT_TASK = "event_conceptualization"
TRIPLE_TASK = "triple_conceptualization"
TASKS = (EVENT_TASK, TRIPLE_TASK)

PAD_ID = 0
CLS_ID = 1
_RESERVED = 2


class HashingTokenizer:
    """Whitespace tokenizer with stable hashed ids; no vocabulary files."""

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def _token_id(self, token: str) -> int:
        digest = hashlib.blake2s(token.encode("utf-8"), digest_size=4).digest()
        return _RESERVED + int.from_bytes(digest, "big") % (self.vocab_size - _RESERVED)

    def encode(self, text: str, max_len: int) -> list[int]:
        ids = [CLS_ID] + [self._token_id(t) for t in text.split()]
        ids = ids[:max_len]
        return ids + [PAD_ID] * (max_len - len(ids))


class MiniEncoder(nn.Module):
    def __init__(self, vocab_size: int, hidden: int, layers: int, max_len: int):
        super().__init__()
        self.embeddings = nn.Embedding(vocab_size, hidden, padding_idx=PAD_ID)
        self.positions = nn.Embedding(max_len, hidden)
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=hidden,
            nhead=max(2, hidden // 32),
            dim_feedforward=hidden * 4,
            batch_first=True,
            dropout=0.1,
        )
        # the nested-tensor fast path repacks padded rows per batch, which
        # would let batch composition perturb scores
        self.encoder = nn.TransformerEncoder(
            encoder_layer, num_layers=layers, enable_nested_tensor=False
        )
        self.head = nn.Linear(hidden, 1)
        self.register_buffer("position_ids", torch.arange(max_len).unsqueeze(0))

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        x = self.embeddings(input_ids) + self.positions(self.position_ids[:, : input_ids.shape[1]])
        hidden = self.encoder(x, src_key_padding_mask=attention_mask == 0)
        return self.head(hidden[:, 0]).squeeze(-1)


def _parse_mini(backbone: str) -> tuple[int, int]:
    match = re.fullmatch(r"mini:(\d+)x(\d+)", backbone)
    if not match:
        raise ConfigError(f"bad mini backbone spec {backbone!r}, expected mini:<hidden>x<layers>")
    return int(match.group(1)), int(match.group(2))


class MiniTaskModel:
    """One encoder classifier for one task."""

    def __init__(self, config: ServiceConfig, task: str):
        hidden, layers = _parse_mini(config.backbone)
        self.max_len = config.max_len_for(task)
        self.tokenizer = HashingTokenizer(config.vocab_size)
        self.model = MiniEncoder(config.vocab_size, hidden, layers, self.max_len)
        self.model.eval()

    def _encode(self, prompts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        ids = torch.tensor(
            [self.tokenizer.encode(p, self.max_len) for p in prompts], dtype=torch.long
        )
        mask = (ids != PAD_ID).long()
        return ids, mask

    def logits(self, prompts: list[str]) -> torch.Tensor:
        ids, mask = self._encode(prompts)
        return self.model(ids, mask)

    def state_dict(self):
        return self.model.state_dict()

    def load_state_dict(self, state):
        self.model.load_state_dict(state)


class NeuralScorer:
    """Per-task encoder classifiers with synchronous fine-tuning.

    Scoring pads every prompt to the task's fixed maximum length, so scores
    do not depend on how prompts are batched.
    """

    def __init__(self, config: ServiceConfig):
        self.config = config
        torch.manual_seed(config.seed)
        torch.set_num_threads(1)
        if config.backbone.startswith("mini:"):
            self.models: dict[str, MiniTaskModel] = {
                task: MiniTaskModel(config, task) for task in TASKS
            }
        else:
            self.models = {task: _HFTaskModel(config, task) for task in TASKS}
        self._identity: str | None = None
        if config.model_dir:
            self._try_load(config.model_dir)

    # -- scoring ----------------------------------------------------------

    def score(self, task: str, prompts: list[str]) -> list[float]:
        model = self.models[task]
        scores: list[float] = []
        with torch.no_grad():
            for start in range(0, len(prompts), self.config.batch_size):
                chunk = prompts[start : start + self.config.batch_size]
                probs = torch.sigmoid(model.logits(chunk))
                scores.extend(min(max(float(p), 0.0), 1.0) for p in probs)
        return scores

    # -- training ---------------------------------------------------------

    def train(
        self,
        task: str,
        examples: list[tuple[str, int]],
        epochs: int = 1,
        dev_examples: list[tuple[str, int]] | None = None,
    ) -> float:
        model = self.models[task]
        net = model.model
        net.train()
        optimizer = torch.optim.AdamW(net.parameters(), lr=self.config.learning_rate)
        loss_fn = nn.BCEWithLogitsLoss()
        generator = torch.Generator().manual_seed(self.config.seed)
        best_dev = float("inf")
        best_state = None
        step = 0
        try:
            for _ in range(epochs):
                order = torch.randperm(len(examples), generator=generator).tolist()
                for start in range(0, len(order), self.config.batch_size):
                    batch = [examples[i] for i in order[start : start + self.config.batch_size]]
                    prompts = [p for p, _ in batch]
                    labels = torch.tensor([float(y) for _, y in batch])
                    optimizer.zero_grad()
                    loss = loss_fn(model.logits(prompts), labels)
                    loss.backward()
                    optimizer.step()
                    step += 1
                    if dev_examples and step % self.config.eval_every_steps == 0:
                        dev = self._eval_loss(task, dev_examples)
                        if dev < best_dev:
                            best_dev = dev
                            best_state = copy.deepcopy(net.state_dict())
            if best_state is not None:
                final_dev = self._eval_loss(task, dev_examples)
                if final_dev < best_dev:
                    best_state = None  # current weights already best
                else:
                    net.load_state_dict(best_state)
        finally:
            net.eval()
        self._identity = None  # weights changed
        if self.config.model_dir:
            self._save(self.config.model_dir)
        return self._eval_loss(task, examples)

    def _eval_loss(self, task: str, examples: list[tuple[str, int]]) -> float:
        scores = self.score(task, [p for p, _ in examples])
        eps = 1e-12
        total = 0.0
        for s, (_, y) in zip(scores, examples):
            s = min(max(s, eps), 1.0 - eps)
            total += -(y * math.log(s) + (1 - y) * math.log(1.0 - s))
        return total / len(examples)

    # -- identity and persistence ----------------------------------------

    def identity(self) -> str:
        if self._identity is None:
            digest = hashlib.sha256()
            for task in TASKS:
                state = self.models[task].state_dict()
                for name in sorted(state):
                    digest.update(name.encode("utf-8"))
                    digest.update(state[name].detach().cpu().numpy().tobytes())
            self._identity = f"{self.config.backbone}@{digest.hexdigest()[:12]}"
        return self._identity

    def _save(self, model_dir: str) -> None:
        os.makedirs(model_dir, exist_ok=True)
        for task in TASKS:
            torch.save(
                self.models[task].state_dict(), os.path.join(model_dir, f"{task}.pt")
            )

    def _try_load(self, model_dir: str) -> None:
        for task in TASKS:
            path = os.path.join(model_dir, f"{task}.pt")
            if os.path.exists(path):
                self.models[task].load_state_dict(torch.load(path, weights_only=True))


class _HFTaskModel:
    """Hugging Face encoder with a single-logit head; requires transformers
    and locally available weights."""

    def __init__(self, config: ServiceConfig, task: str):
        try:
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise ConfigError(
                f"backbone {config.backbone!r} needs the transformers package"
            ) from exc
        self.max_len = config.max_len_for(task)
        self.tokenizer = AutoTokenizer.from_pretrained(config.backbone)
        self.model = AutoModelForSequenceClassification.from_pretrained(
            config.backbone, num_labels=1
        )
        self.model.eval()

    def logits(self, prompts: list[str]) -> torch.Tensor:
        encoded = self.tokenizer(
            prompts,
            padding="max_length",
            truncation=True,
            max_length=self.max_len,
            return_tensors="pt",
        )
        return self.model(**encoded).logits.squeeze(-1)

    def state_dict(self):
        return self.model.state_dict()

    def load_state_dict(self, state):
        self.model.load_state_dict(state)
