"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    """Backbone and training hyperparameters.

    The default backbone "mini:<hidden>x<layers>" is a self-contained
    randomly initialized encoder with a hashing tokenizer, suitable for
    protocol tests and small corpora. Any other backbone string is treated
    as a Hugging Face model name or local path (needs the transformers
    package and the weights on disk).
    """

    backbone: str = "mini:64x2"
    max_len_event: int = 25
    max_len_triple: int = 35
    learning_rate: float = 5e-6
    batch_size: int = 64
    eval_every_steps: int = 25
    seed: int = 0
    model_dir: str | None = None
    vocab_size: int = 8192

    def __post_init__(self):
        if self.max_len_event < 8 or self.max_len_triple < 8:
            raise ConfigError("max sequence lengths must be >= 8")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.eval_every_steps < 1:
            raise ConfigError("eval_every_steps must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")

    def max_len_for(self, task: str) -> int:
        return self.max_len_event if task == "event_conceptualization" else self.max_len_triple
