import json
import random

import pytest

from catkit.core import (
    AbstractTriple,
    Concept,
    Conceptualization,
    EventRecord,
    InstanceSpan,
    Relation,
)
from catkit.ingest import DatasetBundle


def make_event(eid, text, spans=(), split="train"):
    return EventRecord(
        id=eid,
        text=text,
        spans=tuple(InstanceSpan.from_text(text, s, e) for s, e in spans),
        split=split,
    )


def make_conceptualization(event, start, end, concept, label=None, split="train"):
    span = InstanceSpan.from_text(event.text, start, end)
    return Conceptualization(
        event=event.id, span=span, concept=Concept(concept), label=label, split=split
    )


def make_triple(conceptualization, relation, tail, label=None, split="train"):
    return AbstractTriple(
        conceptualization=conceptualization,
        relation=Relation.from_tag(relation),
        tail=tail,
        label=label,
        split=split,
    )


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    return str(path)


VOCAB = ["swim", "hike", "read", "cook", "sing", "dance", "rest", "work", "play", "study"]


def synthetic_rows(num_events=30, seed=0, labeled_fraction=0.5):
    """Token-structured synthetic world: per event one exactly-matching
    concept, one shared high-overlap concept (recurring across events, so
    instantiation retrieval has candidates), one partial and one disjoint
    concept, plus two triples. About half the rows carry gold labels."""
    rng = random.Random(seed)
    events, concepts, triples = [], [], []
    for i in range(num_events):
        w1, w2 = rng.sample(VOCAB, 2)
        text = f"PersonX {w1} {w2} {i}"
        split = "train" if i % 5 else "dev"
        events.append(
            {"id": f"e{i:04d}", "text": text, "spans": [{"start": 0, "end": len(text)}], "split": split}
        )
        span = {"start": 0, "end": len(text)}
        matching = f"personx {w1} {w2} {i}"
        shared = f"personx {w1} {w2}"
        partial = f"{w1} pastime"
        disjoint = "quartz zephyr"
        gold = rng.random() < labeled_fraction
        for concept, label in ((matching, 1), (shared, None), (partial, None), (disjoint, 0)):
            concepts.append(
                {
                    "event_id": f"e{i:04d}",
                    **span,
                    "concept": concept,
                    "label": label if gold else None,
                    "split": split,
                }
            )
        tail_match = f"{w1} {w2} again"
        tail_miss = "nothing alike here"
        gold_triple = rng.random() < labeled_fraction
        triples.append(
            {
                "event_id": f"e{i:04d}",
                **span,
                "concept": shared,
                "relation": "xWant",
                "tail": tail_match,
                "label": 1 if gold_triple else None,
                "split": split,
            }
        )
        triples.append(
            {
                "event_id": f"e{i:04d}",
                **span,
                "concept": matching,
                "relation": "xEffect",
                "tail": tail_miss,
                "label": 0 if gold_triple else None,
                "split": split,
            }
        )
    return events, concepts, triples


def write_synthetic_dataset(dir_path, num_events=30, seed=0, labeled_fraction=0.5):
    events, concepts, triples = synthetic_rows(num_events, seed, labeled_fraction)
    return (
        write_jsonl(dir_path / "events.jsonl", events),
        write_jsonl(dir_path / "conceptualizations.jsonl", concepts),
        write_jsonl(dir_path / "triples.jsonl", triples),
    )


@pytest.fixture
def vacation_world():
    """The running example: a vacation event with alternative concepts and
    three other events instantiating the same concept."""
    vacation = make_event("ev-vacation", "PersonX is on vacation", spans=[(8, 22), (0, 22)])
    party = make_event("ev-party", "PersonX joins party", spans=[(0, 19)])
    holiday = make_event("ev-holiday", "go on a holiday", spans=[(0, 15)])
    brk = make_event("ev-break", "Take a break", spans=[(0, 12)])
    events = {e.id: e for e in (vacation, party, holiday, brk)}

    target = make_conceptualization(vacation, 8, 22, "relaxing event")
    alternatives = [
        make_conceptualization(vacation, 8, 22, "traveling", label=1),
        make_conceptualization(vacation, 8, 22, "break", label=1),
        make_conceptualization(vacation, 8, 22, "holiday", label=1),
    ]
    whole = make_conceptualization(vacation, 0, 22, "relaxing event", label=1)
    others = [
        make_conceptualization(party, 0, 19, "relaxing event", label=1),
        make_conceptualization(holiday, 0, 15, "relaxing event", label=1),
        make_conceptualization(brk, 0, 12, "relaxing event", label=1),
    ]
    triple = make_triple(whole, "xIntent", "have fun")

    bundle = DatasetBundle(
        events=events,
        conceptualizations=tuple([target, whole] + alternatives + others),
        triples=(triple,),
    )
    return {
        "events": events,
        "bundle": bundle,
        "target": target,
        "whole": whole,
        "alternatives": alternatives,
        "others": others,
        "triple": triple,
    }
