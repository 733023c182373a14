"""Domain types shared by every other module: events, instance spans,
concepts, conceptualizations, abstract triples, and pseudo-label records.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Union

EventId = str

VALID_SPLITS = ("train", "dev", "test")

POSITIVE = "positive"
NEGATIVE = "negative"
DISCARDED = "discarded"
BANDS = (POSITIVE, NEGATIVE, DISCARDED)

ORIGIN_TEACHER = "teacher"
ORIGIN_STUDENT = "student"

EVENT_TASK = "event_conceptualization"
TRIPLE_TASK = "triple_conceptualization"
TASKS = (EVENT_TASK, TRIPLE_TASK)


class CatkitError(Exception):
    """Base class for every error raised by this package."""


class IntegrityError(CatkitError):
    """A record violates a structural invariant (bad span, dangling
    reference, out-of-domain label...)."""


class UnknownEventError(CatkitError):
    """A lookup referenced an event id that does not exist."""


class ParseError(CatkitError):
    """An input file could not be parsed; carries path and line number."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:" if line is None else f"{path}:{line}: "
        super().__init__(prefix + message)


class ContractError(CatkitError):
    """An operation was called in a way its contract forbids."""


class CapabilityError(CatkitError):
    """A backend was asked to do something it cannot (e.g. fit a
    non-trainable scorer)."""


class TransportError(CatkitError):
    """A remote backend stayed unreachable after retries."""


class ProtocolError(CatkitError):
    """A remote backend violated the wire protocol (bad shape, score out
    of range)."""


class MetricUndefinedError(CatkitError):
    """A metric is undefined for the given input (e.g. single-class AUC)."""


class ConfigError(CatkitError):
    """A configuration value violates its invariants."""


_WHITESPACE = re.compile(r"\s+")


def canonical_concept(text: str) -> str:
    """Canonical form used for dedup and retrieval keys: lowercased with
    whitespace collapsed to single spaces."""
    return _WHITESPACE.sub(" ", text.strip()).lower()


def validate_split(split: str) -> str:
    if split not in VALID_SPLITS:
        raise IntegrityError(f"split must be one of {VALID_SPLITS}, got {split!r}")
    return split


def validate_label(label: Optional[int]) -> Optional[int]:
    if label is not None and label not in (0, 1):
        raise IntegrityError(f"label must be 0, 1 or absent, got {label!r}")
    return label


@dataclass(frozen=True)
class InstanceSpan:
    """A character span [start, end) inside the owning event text, with the
    covered substring cached in ``text``."""

    start: int
    end: int
    text: str

    @classmethod
    def from_text(cls, event_text: str, start: int, end: int) -> "InstanceSpan":
        if not (0 <= start < end <= len(event_text)):
            raise IntegrityError(
                f"span [{start}, {end}) out of bounds for text of length {len(event_text)}"
            )
        return cls(start=start, end=end, text=event_text[start:end])

    def validate_against(self, event_text: str) -> None:
        if not (0 <= self.start < self.end <= len(event_text)):
            raise IntegrityError(
                f"span [{self.start}, {self.end}) out of bounds for text of "
                f"length {len(event_text)}"
            )
        if event_text[self.start : self.end] != self.text:
            raise IntegrityError(
                f"span text cache {self.text!r} does not match the slice "
                f"{event_text[self.start:self.end]!r}"
            )


@dataclass(frozen=True)
class EventRecord:
    """An original head event with its identified instance spans.

    Spans may nest or overlap: one event can be conceptualized both at a
    sub-phrase and at the whole-event level.
    """

    id: EventId
    text: str
    spans: tuple[InstanceSpan, ...]
    split: str

    def __post_init__(self):
        if not self.id:
            raise IntegrityError("event id must be non-empty")
        validate_split(self.split)
        for span in self.spans:
            span.validate_against(self.text)


@dataclass(frozen=True)
class Concept:
    """A concept phrase, stored in canonical form."""

    text: str

    def __post_init__(self):
        canon = canonical_concept(self.text)
        if not canon:
            raise IntegrityError("concept must be non-empty after normalization")
        object.__setattr__(self, "text", canon)


@dataclass(frozen=True)
class Conceptualization:
    """A candidate (event, instance span, concept), optionally labeled."""

    event: EventId
    span: InstanceSpan
    concept: Concept
    label: Optional[int] = None
    split: str = "train"

    def __post_init__(self):
        validate_label(self.label)
        validate_split(self.split)

    @property
    def is_labeled(self) -> bool:
        return self.label is not None

    @property
    def key(self) -> str:
        return f"c|{self.event}|{self.span.start}|{self.span.end}|{self.concept.text}"


class Relation(Enum):
    """The closed set of commonsense relations carried by triples."""

    X_EFFECT = "xEffect"
    O_EFFECT = "oEffect"
    X_WANT = "xWant"
    O_WANT = "oWant"
    X_REACT = "xReact"
    O_REACT = "oReact"
    X_NEED = "xNeed"
    X_ATTR = "xAttr"
    X_INTENT = "xIntent"

    @classmethod
    def from_tag(cls, tag: str) -> "Relation":
        for member in cls:
            if member.value == tag:
                return member
        raise IntegrityError(f"unknown relation tag {tag!r}")


@dataclass(frozen=True)
class AbstractTriple:
    """A (conceptualized head, relation, tail) candidate, optionally labeled."""

    conceptualization: Conceptualization
    relation: Relation
    tail: str
    label: Optional[int] = None
    split: str = "train"

    def __post_init__(self):
        if not self.tail:
            raise IntegrityError("triple tail must be non-empty")
        validate_label(self.label)
        validate_split(self.split)

    @property
    def is_labeled(self) -> bool:
        return self.label is not None

    @property
    def key(self) -> str:
        c = self.conceptualization
        return (
            f"t|{c.event}|{c.span.start}|{c.span.end}|{c.concept.text}"
            f"|{self.relation.value}|{self.tail}"
        )


Item = Union[Conceptualization, AbstractTriple]


def task_of(item: Item) -> str:
    return EVENT_TASK if isinstance(item, Conceptualization) else TRIPLE_TASK


@dataclass(frozen=True)
class PseudoLabelRecord:
    """A scored unlabeled item with its confidence band.

    Band semantics at assignment time: positive iff score > T+, negative iff
    score < T- or negative propagation was applied, discarded otherwise.
    """

    item: Item
    score: float
    band: str
    origin: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise IntegrityError(f"score must be in [0, 1], got {self.score}")
        if self.band not in BANDS:
            raise IntegrityError(f"band must be one of {BANDS}, got {self.band!r}")
        if self.origin not in (ORIGIN_TEACHER, ORIGIN_STUDENT):
            raise IntegrityError(f"unknown origin {self.origin!r}")

    @property
    def key(self) -> str:
        return self.item.key

    @property
    def task(self) -> str:
        return task_of(self.item)


def conceptualized_head(c: Conceptualization, events: Mapping[EventId, EventRecord]) -> str:
    """Replace the instance span of ``c`` with its concept text, yielding the
    conceptualized head event."""
    record = events.get(c.event)
    if record is None:
        raise UnknownEventError(f"unknown event id {c.event!r}")
    c.span.validate_against(record.text)
    return record.text[: c.span.start] + c.concept.text + record.text[c.span.end :]
