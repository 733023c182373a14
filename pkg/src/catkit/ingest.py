"""Dataset loading with row-level validation, corpus statistics, and the
concept index that powers retrieval.

File formats (JSON Lines, UTF-8, LF endings):
    events.jsonl              {"id", "text", "spans": [{"start", "end"}], "split"}
    conceptualizations.jsonl  {"event_id", "start", "end", "concept", "label", "split"}
    triples.jsonl             {"event_id", "start", "end", "concept", "relation",
                               "tail", "label", "split"}

Duplicate rows are dropped (first occurrence wins) and counted; dangling
references fail loudly with the offending row number.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

from .core import (
    AbstractTriple,
    Concept,
    Conceptualization,
    EventId,
    EventRecord,
    InstanceSpan,
    IntegrityError,
    ParseError,
    POSITIVE,
    Relation,
    VALID_SPLITS,
    canonical_concept,
)


@dataclass(frozen=True)
class LoadReport:
    """Counted warnings from one load pass."""

    duplicate_events: int = 0
    duplicate_conceptualizations: int = 0
    duplicate_triples: int = 0

    @property
    def total_duplicates(self) -> int:
        return (
            self.duplicate_events
            + self.duplicate_conceptualizations
            + self.duplicate_triples
        )


@dataclass(frozen=True)
class DatasetBundle:
    events: dict[EventId, EventRecord]
    conceptualizations: tuple[Conceptualization, ...]
    triples: tuple[AbstractTriple, ...]
    load_report: LoadReport = field(default_factory=LoadReport)

    def labeled_conceptualizations(self) -> list[Conceptualization]:
        return [c for c in self.conceptualizations if c.label is not None]

    def unlabeled_conceptualizations(self) -> list[Conceptualization]:
        return [c for c in self.conceptualizations if c.label is None]

    def labeled_triples(self) -> list[AbstractTriple]:
        return [t for t in self.triples if t.label is not None]

    def unlabeled_triples(self) -> list[AbstractTriple]:
        return [t for t in self.triples if t.label is None]

    def conceptualization_keys(self) -> frozenset[str]:
        return frozenset(c.key for c in self.conceptualizations)


def _iter_jsonl(path: str) -> Iterator[tuple[int, dict]]:
    if not os.path.exists(path):
        raise ParseError("file not found", path=path)
    try:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"malformed JSON: {exc.msg}", path=path, line=line_no)
                if not isinstance(obj, dict):
                    raise ParseError("each line must be a JSON object", path=path, line=line_no)
                yield line_no, obj
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", path=path)


def _require(obj: dict, key: str, path: str, line: int):
    if key not in obj:
        raise ParseError(f"missing field {key!r}", path=path, line=line)
    return obj[key]


def _parse_label(raw, path: str, line: int) -> Optional[int]:
    if raw is None:
        return None
    if raw in (0, 1) and not isinstance(raw, bool):
        return int(raw)
    raise ParseError(f"label must be 0, 1 or null, got {raw!r}", path=path, line=line)


def load_bundle(
    events_path: str,
    conceptualizations_path: str,
    triples_path: str,
    strict_duplicates: bool = False,
) -> DatasetBundle:
    """Parse and validate the three dataset files into one bundle.

    Raises ParseError for malformed rows and IntegrityError (wrapped with
    the row number) for dangling references or invariant violations. With
    ``strict_duplicates`` duplicate rows fail instead of being dropped.
    """
    events: dict[EventId, EventRecord] = {}
    dup_events = 0
    for line_no, obj in _iter_jsonl(events_path):
        event_id = str(_require(obj, "id", events_path, line_no))
        text = _require(obj, "text", events_path, line_no)
        split = _require(obj, "split", events_path, line_no)
        raw_spans = obj.get("spans", [])
        try:
            spans = tuple(
                InstanceSpan.from_text(text, int(s["start"]), int(s["end"])) for s in raw_spans
            )
            record = EventRecord(id=event_id, text=text, spans=spans, split=split)
        except (IntegrityError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), path=events_path, line=line_no)
        if event_id in events:
            if events[event_id] == record:
                dup_events += 1
                if strict_duplicates:
                    raise ParseError(
                        f"duplicate event id {event_id!r}", path=events_path, line=line_no
                    )
                continue
            raise ParseError(
                f"conflicting duplicate event id {event_id!r}", path=events_path, line=line_no
            )
        events[event_id] = record

    conceptualizations: list[Conceptualization] = []
    concept_by_key: dict[str, Conceptualization] = {}
    dup_concepts = 0
    for line_no, obj in _iter_jsonl(conceptualizations_path):
        event_id = str(_require(obj, "event_id", conceptualizations_path, line_no))
        if event_id not in events:
            raise IntegrityError(
                f"{conceptualizations_path}:{line_no}: conceptualization references "
                f"unknown event {event_id!r}"
            )
        record = events[event_id]
        label = _parse_label(obj.get("label"), conceptualizations_path, line_no)
        try:
            span = InstanceSpan.from_text(
                record.text,
                int(_require(obj, "start", conceptualizations_path, line_no)),
                int(_require(obj, "end", conceptualizations_path, line_no)),
            )
            c = Conceptualization(
                event=event_id,
                span=span,
                concept=Concept(_require(obj, "concept", conceptualizations_path, line_no)),
                label=label,
                split=_require(obj, "split", conceptualizations_path, line_no),
            )
        except IntegrityError as exc:
            raise IntegrityError(f"{conceptualizations_path}:{line_no}: {exc}")
        if c.key in concept_by_key:
            dup_concepts += 1
            if strict_duplicates:
                raise ParseError(
                    f"duplicate conceptualization {c.key}",
                    path=conceptualizations_path,
                    line=line_no,
                )
            continue
        concept_by_key[c.key] = c
        conceptualizations.append(c)

    triples: list[AbstractTriple] = []
    seen_triples: set[str] = set()
    dup_triples = 0
    for line_no, obj in _iter_jsonl(triples_path):
        event_id = str(_require(obj, "event_id", triples_path, line_no))
        if event_id not in events:
            raise IntegrityError(
                f"{triples_path}:{line_no}: triple references unknown event {event_id!r}"
            )
        record = events[event_id]
        label = _parse_label(obj.get("label"), triples_path, line_no)
        try:
            span = InstanceSpan.from_text(
                record.text,
                int(_require(obj, "start", triples_path, line_no)),
                int(_require(obj, "end", triples_path, line_no)),
            )
            head = Conceptualization(
                event=event_id,
                span=span,
                concept=Concept(_require(obj, "concept", triples_path, line_no)),
                split=_require(obj, "split", triples_path, line_no),
            )
            if head.key not in concept_by_key:
                raise IntegrityError(
                    f"triple references missing conceptualization {head.key}"
                )
            t = AbstractTriple(
                conceptualization=concept_by_key[head.key],
                relation=Relation.from_tag(_require(obj, "relation", triples_path, line_no)),
                tail=_require(obj, "tail", triples_path, line_no),
                label=label,
                split=_require(obj, "split", triples_path, line_no),
            )
        except IntegrityError as exc:
            raise IntegrityError(f"{triples_path}:{line_no}: {exc}")
        if t.key in seen_triples:
            dup_triples += 1
            if strict_duplicates:
                raise ParseError(f"duplicate triple {t.key}", path=triples_path, line=line_no)
            continue
        seen_triples.add(t.key)
        triples.append(t)

    return DatasetBundle(
        events=events,
        conceptualizations=tuple(conceptualizations),
        triples=tuple(triples),
        load_report=LoadReport(
            duplicate_events=dup_events,
            duplicate_conceptualizations=dup_concepts,
            duplicate_triples=dup_triples,
        ),
    )


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def save_bundle(
    bundle: DatasetBundle,
    events_path: str,
    conceptualizations_path: str,
    triples_path: str,
) -> None:
    """Write the bundle in canonical form: records sorted, fields in schema
    order. load_bundle(save_bundle(b)) round-trips byte-identically."""
    with open(events_path, "w", encoding="utf-8", newline="\n") as f:
        for event in sorted(bundle.events.values(), key=lambda e: e.id):
            f.write(
                _dump(
                    {
                        "id": event.id,
                        "text": event.text,
                        "spans": [{"start": s.start, "end": s.end} for s in event.spans],
                        "split": event.split,
                    }
                )
                + "\n"
            )
    with open(conceptualizations_path, "w", encoding="utf-8", newline="\n") as f:
        for c in sorted(
            bundle.conceptualizations,
            key=lambda c: (c.event, c.span.start, c.span.end, c.concept.text),
        ):
            f.write(
                _dump(
                    {
                        "event_id": c.event,
                        "start": c.span.start,
                        "end": c.span.end,
                        "concept": c.concept.text,
                        "label": c.label,
                        "split": c.split,
                    }
                )
                + "\n"
            )
    with open(triples_path, "w", encoding="utf-8", newline="\n") as f:
        for t in sorted(
            bundle.triples,
            key=lambda t: (
                t.conceptualization.event,
                t.conceptualization.span.start,
                t.conceptualization.span.end,
                t.conceptualization.concept.text,
                t.relation.value,
                t.tail,
            ),
        ):
            c = t.conceptualization
            f.write(
                _dump(
                    {
                        "event_id": c.event,
                        "start": c.span.start,
                        "end": c.span.end,
                        "concept": c.concept.text,
                        "relation": t.relation.value,
                        "tail": t.tail,
                        "label": t.label,
                        "split": t.split,
                    }
                )
                + "\n"
            )


def _split_counts(splits: Iterable[str]) -> dict[str, int]:
    counts = {s: 0 for s in VALID_SPLITS}
    for s in splits:
        counts[s] += 1
    return counts


def compute_stats(bundle: DatasetBundle) -> dict:
    """Per-split counts for labeled/unlabeled partitions, plus unique-entity
    figures.

    "events" counts conceptualization rows, i.e. (event, concept) pairs;
    "unique_events" counts distinct head events among those rows. Both are
    reported because released corpora quote either figure.
    """
    report: dict = {}
    for name, concepts, triples in (
        ("labeled", bundle.labeled_conceptualizations(), bundle.labeled_triples()),
        ("unlabeled", bundle.unlabeled_conceptualizations(), bundle.unlabeled_triples()),
    ):
        unique_events = {s: set() for s in VALID_SPLITS}
        for c in concepts:
            unique_events[c.split].add(c.event)
        report[name] = {
            "events": _split_counts(c.split for c in concepts),
            "unique_events": {s: len(unique_events[s]) for s in VALID_SPLITS},
            "triples": _split_counts(t.split for t in triples),
        }

    detail: dict = {}
    partitions = {
        "labeled": bundle.labeled_conceptualizations(),
        "unlabeled": bundle.unlabeled_conceptualizations(),
        "total": list(bundle.conceptualizations),
    }
    for name, concepts in partitions.items():
        events = {c.event for c in concepts}
        instances = {c.span.text for c in concepts}
        concept_set = {c.concept.text for c in concepts}
        detail[name] = {
            "rows": len(concepts),
            "unique_events": len(events),
            "unique_instances": len(instances),
            "unique_concepts": len(concept_set),
            "avg_concepts_per_event": round(len(concepts) / len(events), 2) if events else 0.0,
            "avg_concepts_per_instance": (
                round(len(concepts) / len(instances), 2) if instances else 0.0
            ),
        }
    report["event_conceptualization_detail"] = detail
    return report


@dataclass(frozen=True)
class ConceptIndex:
    """Forward and inverted views over positively-labeled conceptualizations.

    forward: event id -> conceptualizations of that event
    inverse: canonical concept -> (event id, span) pairs carrying it
    Lists are sorted so downstream tie-breaking is reproducible. The event
    table rides along so retrieval can rebuild prompts without a bundle.
    """

    forward: Mapping[EventId, tuple[Conceptualization, ...]]
    inverse: Mapping[str, tuple[tuple[EventId, InstanceSpan], ...]]
    events: Mapping[EventId, EventRecord]

    def concepts_for(self, event: EventId, span: InstanceSpan) -> list[Conceptualization]:
        return [c for c in self.forward.get(event, ()) if c.span == span]

    def entries_for(self, concept_text: str) -> tuple[tuple[EventId, InstanceSpan], ...]:
        return self.inverse.get(canonical_concept(concept_text), ())


def build_index(
    bundle: DatasetBundle,
    include_pseudo: bool = False,
    pseudo_store=None,
) -> ConceptIndex:
    """Index gold-positive conceptualizations, optionally merged with the
    pseudo-positive records of ``pseudo_store``.

    Negative and discarded items never enter the index.
    """
    chosen: dict[str, Conceptualization] = {}
    for c in bundle.conceptualizations:
        if c.label == 1:
            chosen.setdefault(c.key, c)
    if include_pseudo:
        if pseudo_store is None:
            raise IntegrityError("include_pseudo requires a pseudo-label store")
        valid_keys = bundle.conceptualization_keys()
        for record in pseudo_store.records.values():
            if not isinstance(record.item, Conceptualization):
                raise IntegrityError(
                    f"event index cannot include non-event pseudo record {record.key}"
                )
            if record.key not in valid_keys:
                raise IntegrityError(
                    f"pseudo record references unknown item {record.key}"
                )
            if record.band == POSITIVE:
                chosen.setdefault(record.key, record.item)

    forward: dict[EventId, list[Conceptualization]] = {}
    inverse: dict[str, list[tuple[EventId, InstanceSpan]]] = {}
    for c in chosen.values():
        forward.setdefault(c.event, []).append(c)
        inverse.setdefault(c.concept.text, []).append((c.event, c.span))
    frozen_forward = {
        event: tuple(sorted(cs, key=lambda c: (c.span.start, c.span.end, c.concept.text)))
        for event, cs in forward.items()
    }
    frozen_inverse = {
        concept: tuple(sorted(entries, key=lambda e: (e[0], e[1].start, e[1].end)))
        for concept, entries in inverse.items()
    }
    return ConceptIndex(forward=frozen_forward, inverse=frozen_inverse, events=bundle.events)
