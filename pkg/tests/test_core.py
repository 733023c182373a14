import random

import pytest

from catkit.core import (
    Concept,
    EventRecord,
    InstanceSpan,
    IntegrityError,
    PseudoLabelRecord,
    Relation,
    UnknownEventError,
    canonical_concept,
    conceptualized_head,
)

from conftest import make_conceptualization, make_event


def test_conceptualized_head_running_example():
    event = make_event("e1", "PersonX is on vacation")
    c = make_conceptualization(event, 8, 22, "relaxing event")
    assert conceptualized_head(c, {"e1": event}) == "PersonX relaxing event"


def test_conceptualized_head_identity_replacement():
    event = make_event("e1", "abc")
    c = make_conceptualization(event, 0, 3, "abc")
    assert conceptualized_head(c, {"e1": event}) == "abc"


def test_conceptualized_head_inner_span():
    text = "PersonX is having trouble sleeping at night"
    event = make_event("e1", text)
    start = text.rindex("night")
    c = make_conceptualization(event, start, start + len("night"), "nonwork time")
    # independent splice oracle
    expected = text[:start] + "nonwork time" + text[start + len("night") :]
    assert expected == "PersonX is having trouble sleeping at nonwork time"
    assert conceptualized_head(c, {"e1": event}) == expected


def test_conceptualized_head_unknown_event():
    event = make_event("e1", "abc")
    c = make_conceptualization(event, 0, 3, "x")
    with pytest.raises(UnknownEventError):
        conceptualized_head(c, {})


def test_conceptualized_head_invalid_span():
    event = make_event("e1", "abcdef")
    c = make_conceptualization(event, 0, 6, "x")
    shorter = EventRecord(id="e1", text="abc", spans=(), split="train")
    with pytest.raises(IntegrityError):
        conceptualized_head(c, {"e1": shorter})


def test_round_trip_concept_recovery_fuzz():
    # locating the concept at span.start in the output recovers it exactly
    rng = random.Random(20240401)
    letters = "abcdefgh "
    for _ in range(300):
        text = "".join(rng.choice(letters) for _ in range(rng.randint(3, 40))) + "x"
        start = rng.randrange(0, len(text) - 1)
        end = rng.randrange(start + 1, len(text) + 1)
        event = make_event("e", text)
        concept = "".join(rng.choice("qrstuv") for _ in range(rng.randint(1, 6)))
        c = make_conceptualization(event, start, end, concept)
        out = conceptualized_head(c, {"e": event})
        assert out[start : start + len(c.concept.text)] == c.concept.text


def test_span_invariants():
    with pytest.raises(IntegrityError):
        InstanceSpan.from_text("abc", 2, 2)
    with pytest.raises(IntegrityError):
        InstanceSpan.from_text("abc", -1, 2)
    with pytest.raises(IntegrityError):
        InstanceSpan.from_text("abc", 1, 4)
    span = InstanceSpan.from_text("abc", 0, 2)
    assert span.text == "ab"


def test_nested_spans_permitted():
    text = "PersonX is having trouble sleeping at night"
    inner = (text.rindex("night"), len(text))
    outer = (text.index("sleeping"), len(text))
    event = make_event("e1", text, spans=[inner, outer])
    assert len(event.spans) == 2


def test_concept_normalization():
    assert Concept("  Relaxing   Event ").text == "relaxing event"
    assert canonical_concept("A\tB") == "a b"
    with pytest.raises(IntegrityError):
        Concept("   ")


def test_label_domain():
    event = make_event("e1", "abc")
    for label in (0, 1, None):
        make_conceptualization(event, 0, 1, "x", label=label)
    with pytest.raises(IntegrityError):
        make_conceptualization(event, 0, 1, "x", label=2)


def test_relation_closed_set():
    tags = {r.value for r in Relation}
    assert tags == {
        "xEffect", "oEffect", "xWant", "oWant", "xReact", "oReact",
        "xNeed", "xAttr", "xIntent",
    }
    with pytest.raises(IntegrityError):
        Relation.from_tag("xBogus")


def test_pseudo_label_record_validation():
    event = make_event("e1", "abc")
    c = make_conceptualization(event, 0, 1, "x")
    record = PseudoLabelRecord(item=c, score=0.95, band="positive", origin="teacher")
    assert record.key == c.key
    with pytest.raises(IntegrityError):
        PseudoLabelRecord(item=c, score=1.5, band="positive", origin="teacher")
    with pytest.raises(IntegrityError):
        PseudoLabelRecord(item=c, score=0.5, band="maybe", origin="teacher")
    with pytest.raises(IntegrityError):
        PseudoLabelRecord(item=c, score=0.5, band="positive", origin="oracle")
