import random

import pytest

from catkit.core import IntegrityError, ParseError, PseudoLabelRecord
from catkit.ingest import build_index, compute_stats, load_bundle, save_bundle
from catkit.pipeline import PseudoLabelStore

from conftest import write_jsonl


def minimal_rows():
    events = [
        {
            "id": "e1",
            "text": "PersonX is on vacation",
            "spans": [{"start": 8, "end": 22}],
            "split": "train",
        }
    ]
    concepts = [
        {
            "event_id": "e1",
            "start": 8,
            "end": 22,
            "concept": "relaxing event",
            "label": 1,
            "split": "train",
        }
    ]
    triples = [
        {
            "event_id": "e1",
            "start": 8,
            "end": 22,
            "concept": "relaxing event",
            "relation": "xIntent",
            "tail": "have fun",
            "label": None,
            "split": "train",
        }
    ]
    return events, concepts, triples


def write_world(tmp_path, events, concepts, triples):
    return (
        write_jsonl(tmp_path / "events.jsonl", events),
        write_jsonl(tmp_path / "concepts.jsonl", concepts),
        write_jsonl(tmp_path / "triples.jsonl", triples),
    )


def test_load_minimal_fixture(tmp_path):
    bundle = load_bundle(*write_world(tmp_path, *minimal_rows()))
    assert len(bundle.events) == 1
    assert len(bundle.conceptualizations) == 1
    assert len(bundle.triples) == 1
    assert bundle.triples[0].conceptualization.label == 1


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ParseError) as err:
        load_bundle(str(tmp_path / "nope.jsonl"), str(tmp_path / "c"), str(tmp_path / "t"))
    assert "nope.jsonl" in str(err.value)


def test_malformed_line_reports_line_number(tmp_path):
    events, concepts, triples = minimal_rows()
    paths = write_world(tmp_path, events, concepts, triples)
    with open(paths[1], "a", encoding="utf-8") as f:
        f.write("{not json\n")
    with pytest.raises(ParseError) as err:
        load_bundle(*paths)
    assert ":2:" in str(err.value)


def test_dangling_triple_reference_names_row(tmp_path):
    events, concepts, triples = minimal_rows()
    triples.append(dict(triples[0], concept="unknown concept"))
    paths = write_world(tmp_path, events, concepts, triples)
    with pytest.raises(IntegrityError) as err:
        load_bundle(*paths)
    assert ":2:" in str(err.value)
    assert "missing conceptualization" in str(err.value)


def test_dangling_event_reference(tmp_path):
    events, concepts, triples = minimal_rows()
    concepts.append(dict(concepts[0], event_id="ghost"))
    paths = write_world(tmp_path, events, concepts, triples)
    with pytest.raises(IntegrityError) as err:
        load_bundle(*paths)
    assert "ghost" in str(err.value)


def test_invalid_label_rejected(tmp_path):
    events, concepts, triples = minimal_rows()
    concepts[0]["label"] = 2
    paths = write_world(tmp_path, events, concepts, triples)
    with pytest.raises(ParseError):
        load_bundle(*paths)


def test_invalid_span_rejected(tmp_path):
    events, concepts, triples = minimal_rows()
    concepts[0]["end"] = 99
    paths = write_world(tmp_path, events, concepts, triples)
    with pytest.raises(IntegrityError):
        load_bundle(*paths)


def test_duplicates_dropped_with_count(tmp_path):
    events, concepts, triples = minimal_rows()
    concepts.append(dict(concepts[0]))
    concepts.append(dict(concepts[0], concept="Relaxing   EVENT"))  # same canonical key
    paths = write_world(tmp_path, events, concepts, triples)
    bundle = load_bundle(*paths)
    assert len(bundle.conceptualizations) == 1
    assert bundle.load_report.duplicate_conceptualizations == 2
    with pytest.raises(ParseError):
        load_bundle(*paths, strict_duplicates=True)


def test_round_trip_byte_identical(tmp_path):
    events, concepts, triples = minimal_rows()
    paths = write_world(tmp_path, events, concepts, triples)
    bundle = load_bundle(*paths)
    canon = (
        str(tmp_path / "canon_events.jsonl"),
        str(tmp_path / "canon_concepts.jsonl"),
        str(tmp_path / "canon_triples.jsonl"),
    )
    save_bundle(bundle, *canon)
    reloaded = load_bundle(*canon)
    canon2 = (
        str(tmp_path / "canon2_events.jsonl"),
        str(tmp_path / "canon2_concepts.jsonl"),
        str(tmp_path / "canon2_triples.jsonl"),
    )
    save_bundle(reloaded, *canon2)
    for a, b in zip(canon, canon2):
        assert open(a, "rb").read() == open(b, "rb").read()


def synthetic_world(num_events=10, concepts_per_event=3):
    events, concepts, triples = [], [], []
    for i in range(num_events):
        text = f"PersonX does thing {i}"
        events.append(
            {"id": f"e{i}", "text": text, "spans": [{"start": 0, "end": len(text)}], "split": "train"}
        )
        for j in range(concepts_per_event):
            concepts.append(
                {
                    "event_id": f"e{i}",
                    "start": 0,
                    "end": len(text),
                    "concept": f"concept {j}",
                    "label": 1 if j % 2 == 0 else None,
                    "split": "train",
                }
            )
        triples.append(
            {
                "event_id": f"e{i}",
                "start": 0,
                "end": len(text),
                "concept": "concept 0",
                "relation": "xWant",
                "tail": f"tail {i}",
                "label": None,
                "split": "train",
            }
        )
    return events, concepts, triples


def test_stats_shapes_and_averages(tmp_path):
    bundle = load_bundle(*write_world(tmp_path, *synthetic_world()))
    stats = compute_stats(bundle)
    # 10 events x 3 concepts, 2 labeled + 1 unlabeled each
    assert stats["labeled"]["events"]["train"] == 20
    assert stats["unlabeled"]["events"]["train"] == 10
    assert stats["labeled"]["unique_events"]["train"] == 10
    assert stats["unlabeled"]["triples"]["train"] == 10
    assert stats["labeled"]["triples"]["train"] == 0
    detail = stats["event_conceptualization_detail"]["total"]
    assert detail["avg_concepts_per_event"] == 3.0
    assert detail["unique_concepts"] == 3


def test_stats_empty_bundle(tmp_path):
    paths = (
        write_jsonl(tmp_path / "e.jsonl", []),
        write_jsonl(tmp_path / "c.jsonl", []),
        write_jsonl(tmp_path / "t.jsonl", []),
    )
    stats = compute_stats(load_bundle(*paths))
    assert stats["labeled"]["events"] == {"train": 0, "dev": 0, "test": 0}
    assert stats["event_conceptualization_detail"]["total"]["rows"] == 0


def test_stats_permutation_invariant(tmp_path):
    events, concepts, triples = synthetic_world()
    base = compute_stats(load_bundle(*write_world(tmp_path, events, concepts, triples)))
    rng = random.Random(5)
    rng.shuffle(events)
    rng.shuffle(concepts)
    rng.shuffle(triples)
    shuffled_dir = tmp_path / "shuffled"
    shuffled_dir.mkdir()
    shuffled = compute_stats(load_bundle(*write_world(shuffled_dir, events, concepts, triples)))
    assert base == shuffled


def test_index_shared_concept(tmp_path):
    events, concepts, triples = minimal_rows()
    events.append(
        {
            "id": "e2",
            "text": "PersonX takes a trip",
            "spans": [{"start": 0, "end": 20}],
            "split": "train",
        }
    )
    concepts.append(
        {
            "event_id": "e2",
            "start": 0,
            "end": 20,
            "concept": "relaxing event",
            "label": 1,
            "split": "train",
        }
    )
    bundle = load_bundle(*write_world(tmp_path, events, concepts, triples))
    index = build_index(bundle)
    assert len(index.entries_for("relaxing event")) == 2


def test_index_excludes_negatives(tmp_path):
    events, concepts, triples = minimal_rows()
    concepts[0]["label"] = 0
    triples.clear()
    bundle = load_bundle(*write_world(tmp_path, events, concepts, triples))
    index = build_index(bundle)
    assert index.inverse == {}
    assert index.forward == {}


def test_index_mixed_gold_and_pseudo(tmp_path):
    events, concepts, triples = [], [], []
    for i in range(12):
        text = f"event number {i}"
        events.append(
            {"id": f"e{i}", "text": text, "spans": [{"start": 0, "end": len(text)}], "split": "train"}
        )
        if i < 5:
            label = 1  # gold positive
        elif i < 8:
            label = None  # pseudo positive below
        else:
            label = 0  # gold negative
        concepts.append(
            {
                "event_id": f"e{i}",
                "start": 0,
                "end": len(text),
                "concept": f"concept {i}",
                "label": label,
                "split": "train",
            }
        )
    # one more unlabeled row that stays out of the pseudo store entirely
    concepts.append(
        {
            "event_id": "e0",
            "start": 0,
            "end": len("event number 0"),
            "concept": "stray concept",
            "label": None,
            "split": "train",
        }
    )
    bundle = load_bundle(*write_world(tmp_path, events, concepts, triples))
    pseudo_items = [
        c
        for c in bundle.conceptualizations
        if c.label is None and c.concept.text != "stray concept"
    ]
    records = {
        c.key: PseudoLabelRecord(item=c, score=0.95, band="positive", origin="teacher")
        for c in pseudo_items
    }
    store = PseudoLabelStore(task="event_conceptualization", generation=0, records=records)
    index = build_index(bundle, include_pseudo=True, pseudo_store=store)
    total = sum(len(entries) for entries in index.inverse.values())
    assert total == 8  # 5 gold positive + 3 pseudo positive; 4 negatives excluded


def test_index_rejects_dangling_pseudo_record(tmp_path):
    bundle = load_bundle(*write_world(tmp_path, *minimal_rows()))
    other_dir = tmp_path / "other"
    other_dir.mkdir()
    events, concepts, triples = minimal_rows()
    concepts[0]["concept"] = "different concept"
    triples.clear()
    other = load_bundle(*write_world(other_dir, events, concepts, triples))
    foreign = other.conceptualizations[0]
    store = PseudoLabelStore(
        task="event_conceptualization",
        generation=0,
        records={
            foreign.key: PseudoLabelRecord(
                item=foreign, score=0.99, band="positive", origin="teacher"
            )
        },
    )
    with pytest.raises(IntegrityError):
        build_index(bundle, include_pseudo=True, pseudo_store=store)


def test_index_inverse_forward_consistency(tmp_path):
    bundle = load_bundle(*write_world(tmp_path, *synthetic_world(num_events=6)))
    index = build_index(bundle)
    for concept_text, entries in index.inverse.items():
        for event_id, span in entries:
            matches = [
                c
                for c in index.forward[event_id]
                if c.span == span and c.concept.text == concept_text
            ]
            assert len(matches) == 1
