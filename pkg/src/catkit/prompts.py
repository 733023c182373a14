"""Byte-exact prompt construction for teacher scoring, bootstrapped student
training, generative conceptualizer export, and inference-model export.

Field layout, split on " [SEP] ":
    teacher event    [CLS] <marked event> | <concept>
    student event    [CLS] <marked event> | <concept> | <alt>, <alt>, ...
    teacher triple   [CLS] <head> | <relation text> | <tail>
    student triple   [CLS] <head> | <relation text> | <tail> | <inst>, ...

Empty retrieval lists degrade to the teacher form with no trailing
separator. No connective glue text (e.g. "is an instance of") is ever
inserted into discriminative prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

from .core import (
    AbstractTriple,
    Concept,
    Conceptualization,
    ConfigError,
    ContractError,
    EventId,
    EventRecord,
    InstanceSpan,
    Relation,
    conceptualized_head,
)

RELATION_TEXT = {
    Relation.X_EFFECT: "as a result, PersonX will",
    Relation.O_EFFECT: "as a result, PersonY or others will",
    Relation.X_WANT: "as a result, PersonX want",
    Relation.O_WANT: "as a result, PersonY or others want",
    Relation.X_REACT: "as a result, PersonX feel",
    Relation.O_REACT: "as a result, PersonY or others feel",
    Relation.X_INTENT: "because PersonX wanted",
    Relation.X_NEED: "before that, PersonX needed",
    Relation.X_ATTR: "PersonX is described as",
}


@dataclass(frozen=True)
class PromptConfig:
    """Special tokens and joiners; all tokens must be non-empty and
    pairwise distinct."""

    sep_token: str = "[SEP]"
    cls_token: str = "[CLS]"
    sos_token: str = "[SOS]"
    eos_token: str = "[EOS]"
    gen_token: str = "[GEN]"
    concept_open: str = "<c>"
    concept_close: str = "</c>"
    list_joiner: str = ", "

    def __post_init__(self):
        tokens = [getattr(self, f.name) for f in fields(self)]
        if any(not t for t in tokens):
            raise ConfigError("prompt tokens must be non-empty")
        if len(set(tokens)) != len(tokens):
            raise ConfigError("prompt tokens must be pairwise distinct")

    @classmethod
    def from_json(cls, path: str) -> "PromptConfig":
        with open(path, encoding="utf-8") as f:
            overrides = json.load(f)
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown prompt config keys: {sorted(unknown)}")
        return cls(**overrides)


DEFAULT_PROMPTS = PromptConfig()


def relation_text(r: Relation) -> str:
    """Human-readable verbalization of a relation tag."""
    return RELATION_TEXT[r]


def mark_instance(event_text: str, span: InstanceSpan, cfg: PromptConfig = DEFAULT_PROMPTS) -> str:
    """Enclose the instance span in marker tokens at its exact offsets."""
    span.validate_against(event_text)
    return (
        event_text[: span.start]
        + cfg.concept_open
        + event_text[span.start : span.end]
        + cfg.concept_close
        + event_text[span.end :]
    )


def teacher_event_prompt(
    c: Conceptualization,
    events: Mapping[EventId, EventRecord],
    cfg: PromptConfig = DEFAULT_PROMPTS,
) -> str:
    record = events.get(c.event)
    if record is None:
        raise ContractError(f"unknown event id {c.event!r}")
    marked = mark_instance(record.text, c.span, cfg)
    return f"{cfg.cls_token} {marked} {cfg.sep_token} {c.concept.text}"


def student_event_prompt(
    c: Conceptualization,
    alternatives: Sequence[Concept],
    events: Mapping[EventId, EventRecord],
    cfg: PromptConfig = DEFAULT_PROMPTS,
) -> str:
    """Teacher prompt plus ranked alternative concepts; the target concept
    must not appear among the alternatives."""
    if any(alt.text == c.concept.text for alt in alternatives):
        raise ContractError(
            f"target concept {c.concept.text!r} must not appear among its alternatives"
        )
    base = teacher_event_prompt(c, events, cfg)
    if not alternatives:
        return base
    joined = cfg.list_joiner.join(alt.text for alt in alternatives)
    return f"{base} {cfg.sep_token} {joined}"


def teacher_triple_prompt(
    t: AbstractTriple,
    events: Mapping[EventId, EventRecord],
    cfg: PromptConfig = DEFAULT_PROMPTS,
) -> str:
    head = conceptualized_head(t.conceptualization, events)
    return (
        f"{cfg.cls_token} {head} {cfg.sep_token} {relation_text(t.relation)}"
        f" {cfg.sep_token} {t.tail}"
    )


def student_triple_prompt(
    t: AbstractTriple,
    instantiations: Sequence[str],
    events: Mapping[EventId, EventRecord],
    cfg: PromptConfig = DEFAULT_PROMPTS,
) -> str:
    """Teacher prompt plus ranked instance events of the same concept; the
    triple's own source instance must not appear."""
    own = t.conceptualization.span.text
    if any(inst == own for inst in instantiations):
        raise ContractError(
            f"source instance {own!r} must not appear among its instantiations"
        )
    base = teacher_triple_prompt(t, events, cfg)
    if not instantiations:
        return base
    joined = cfg.list_joiner.join(instantiations)
    return f"{base} {cfg.sep_token} {joined}"


def generative_concept_prompt(
    event: EventRecord,
    span: InstanceSpan,
    concept: Concept | None = None,
    cfg: PromptConfig = DEFAULT_PROMPTS,
) -> tuple[str, str | None]:
    """(input, target) pair for a generative conceptualizer; target is None
    when no concept is supplied (inference-time prompt)."""
    marked = mark_instance(event.text, span, cfg)
    prompt = f"{cfg.sos_token} {marked} {cfg.sep_token} {span.text} {cfg.gen_token}"
    target = None if concept is None else f"{concept.text} {cfg.eos_token}"
    return prompt, target


def _escape_field(text: str) -> str:
    # Tabs and line breaks would corrupt the 3-column TSV framing.
    return text.replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def comet_record(t: AbstractTriple, events: Mapping[EventId, EventRecord]) -> str:
    """One head TAB relation TAB tail line for inference-model training."""
    head = conceptualized_head(t.conceptualization, events)
    return "\t".join([_escape_field(head), t.relation.value, _escape_field(t.tail)])
