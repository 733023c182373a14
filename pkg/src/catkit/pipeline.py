"""The semi-supervised conceptualization loop: teacher pseudo-labeling,
retrieval of alternative concepts and instantiations, bootstrapped student
data composition, pseudo-label refinement with negative propagation, and
export of the accepted abstract knowledge.

Every operation is deterministic given a deterministic backend: items are
processed in sorted-key order and retrieval ties break on text.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .core import (
    AbstractTriple,
    CatkitError,
    Concept,
    Conceptualization,
    ConfigError,
    ContractError,
    DISCARDED,
    EVENT_TASK,
    EventId,
    EventRecord,
    IntegrityError,
    Item,
    NEGATIVE,
    ORIGIN_STUDENT,
    ORIGIN_TEACHER,
    POSITIVE,
    PseudoLabelRecord,
    TRIPLE_TASK,
    task_of,
)
from .ingest import ConceptIndex, DatasetBundle, build_index
from .prompts import (
    DEFAULT_PROMPTS,
    PromptConfig,
    comet_record,
    generative_concept_prompt,
    student_event_prompt,
    student_triple_prompt,
    teacher_event_prompt,
    teacher_triple_prompt,
)
from .scoring import ScorerBackend, fit, score_prompts


class PipelineStageError(CatkitError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass(frozen=True)
class PipelineConfig:
    """Loop hyperparameters. Thresholds are shared across tasks unless the
    per-task overrides are set."""

    t_plus: float = 0.9
    t_minus: float = 0.1
    m: int = 9
    n: int = 2
    refinement_rounds: int = 1
    wrong_head_threshold: float = 0.5
    export_threshold: float = 0.95
    random_seed: int = 0
    fit_epochs: int = 1
    event_t_plus: float | None = None
    event_t_minus: float | None = None
    triple_t_plus: float | None = None
    triple_t_minus: float | None = None

    def __post_init__(self):
        for t_plus, t_minus in (
            (self.t_plus, self.t_minus),
            self.thresholds_for(EVENT_TASK),
            self.thresholds_for(TRIPLE_TASK),
        ):
            if not (0.0 <= t_minus < t_plus <= 1.0):
                raise ConfigError(
                    f"need 0 <= t_minus < t_plus <= 1, got ({t_plus}, {t_minus})"
                )
        if self.m < 0 or self.n < 0:
            raise ConfigError("retrieval counts m and n must be >= 0")
        if self.refinement_rounds < 0:
            raise ConfigError("refinement_rounds must be >= 0")
        if self.fit_epochs < 1:
            raise ConfigError("fit_epochs must be >= 1")

    def thresholds_for(self, task: str) -> tuple[float, float]:
        if task == EVENT_TASK:
            return (
                self.t_plus if self.event_t_plus is None else self.event_t_plus,
                self.t_minus if self.event_t_minus is None else self.event_t_minus,
            )
        return (
            self.t_plus if self.triple_t_plus is None else self.triple_t_plus,
            self.t_minus if self.triple_t_minus is None else self.triple_t_minus,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**data)


def band_for(score: float, t_plus: float, t_minus: float) -> str:
    if score > t_plus:
        return POSITIVE
    if score < t_minus:
        return NEGATIVE
    return DISCARDED


@dataclass(frozen=True)
class PseudoLabelStore:
    """One generation of pseudo-label records for one task, keyed by item."""

    task: str
    generation: int
    records: dict[str, PseudoLabelRecord] = field(default_factory=dict)

    def band_counts(self) -> dict[str, int]:
        counts = {POSITIVE: 0, NEGATIVE: 0, DISCARDED: 0}
        for record in self.records.values():
            counts[record.band] += 1
        return counts

    def save_jsonl(self, path: str) -> None:
        """Atomic write (temp file + rename), records in key order."""
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            for key in sorted(self.records):
                record = self.records[key]
                f.write(
                    json.dumps(
                        {
                            "item_key": key,
                            "task": record.task,
                            "score": record.score,
                            "band": record.band,
                            "generation": self.generation,
                        },
                        ensure_ascii=False,
                        separators=(", ", ": "),
                    )
                    + "\n"
                )
        os.replace(tmp, path)

    @classmethod
    def load_jsonl(cls, path: str, bundle: DatasetBundle) -> "PseudoLabelStore":
        """Rebuild a store by resolving item keys against the bundle."""
        items: dict[str, Item] = {c.key: c for c in bundle.conceptualizations}
        items.update({t.key: t for t in bundle.triples})
        records: dict[str, PseudoLabelRecord] = {}
        task = None
        generation = 0
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                row = json.loads(line)
                key = row["item_key"]
                if key not in items:
                    raise IntegrityError(
                        f"{path}:{line_no}: pseudo record references unknown item {key}"
                    )
                generation = int(row["generation"])
                origin = ORIGIN_TEACHER if generation == 0 else ORIGIN_STUDENT
                record = PseudoLabelRecord(
                    item=items[key],
                    score=float(row["score"]),
                    band=row["band"],
                    origin=origin,
                )
                if task is None:
                    task = record.task
                elif task != record.task:
                    raise IntegrityError(f"{path}:{line_no}: mixed tasks in one store")
                records[key] = record
        return cls(task=task or EVENT_TASK, generation=generation, records=records)


class _ScoreCache:
    """Memoizes backend scores per prompt; batching invariance makes this
    exact."""

    def __init__(self, backend: ScorerBackend, task: str, chunk_size: int = 256):
        self.backend = backend
        self.task = task
        self.chunk_size = chunk_size
        self._scores: dict[str, float] = {}

    def get_many(self, prompts: Sequence[str]) -> list[float]:
        missing = sorted({p for p in prompts if p not in self._scores})
        if missing:
            scored = score_prompts(self.backend, self.task, missing, self.chunk_size)
            self._scores.update(zip(missing, scored))
        return [self._scores[p] for p in prompts]


def _teacher_prompt(item: Item, events: Mapping[EventId, EventRecord], cfg: PromptConfig) -> str:
    if isinstance(item, Conceptualization):
        return teacher_event_prompt(item, events, cfg)
    return teacher_triple_prompt(item, events, cfg)


def assign_pseudo_labels(
    items: Iterable[Item],
    backend: ScorerBackend,
    cfg: PipelineConfig,
    events: Mapping[EventId, EventRecord],
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
    task: str | None = None,
) -> PseudoLabelStore:
    """Score unlabeled items with the teacher and band them: score > T+ is
    positive, score < T- is negative, the rest are discarded."""
    ordered = sorted(items, key=lambda i: i.key)
    if not ordered:
        return PseudoLabelStore(task=task or EVENT_TASK, generation=0, records={})
    inferred = task_of(ordered[0])
    if task is not None and task != inferred:
        raise ContractError(f"items are {inferred} but task={task!r} was given")
    task = inferred
    records: dict[str, PseudoLabelRecord] = {}
    prompts = []
    for item in ordered:
        if item.label is not None:
            raise ContractError(f"item {item.key} is already labeled")
        if task_of(item) != task:
            raise ContractError("one store cannot mix event and triple items")
        prompts.append(_teacher_prompt(item, events, prompt_cfg))
    scores = score_prompts(backend, task, prompts)
    t_plus, t_minus = cfg.thresholds_for(task)
    for item, score in zip(ordered, scores):
        records[item.key] = PseudoLabelRecord(
            item=item,
            score=score,
            band=band_for(score, t_plus, t_minus),
            origin=ORIGIN_TEACHER,
        )
    return PseudoLabelStore(task=task, generation=0, records=records)


def retrieve_alternative_concepts(
    c: Conceptualization,
    index: ConceptIndex,
    backend: ScorerBackend,
    m: int,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
    cache: _ScoreCache | None = None,
) -> list[Concept]:
    """Other positively-indexed concepts of the same (event, span), ranked
    by the teacher's score, ties broken by concept text."""
    if m == 0:
        return []
    candidates = {
        x.concept.text: x
        for x in index.concepts_for(c.event, c.span)
        if x.concept.text != c.concept.text
    }
    if not candidates:
        return []
    texts = sorted(candidates)
    prompts = [teacher_event_prompt(candidates[t], index.events, prompt_cfg) for t in texts]
    if cache is None:
        scores = score_prompts(backend, EVENT_TASK, prompts)
    else:
        scores = cache.get_many(prompts)
    ranked = sorted(zip(texts, scores), key=lambda pair: (-pair[1], pair[0]))
    return [Concept(text) for text, _ in ranked[:m]]


def retrieve_instantiations(
    t: AbstractTriple,
    index: ConceptIndex,
    backend: ScorerBackend,
    n: int,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
    cache: _ScoreCache | None = None,
) -> list[str]:
    """Instance texts of other events carrying the triple's concept, ranked
    by the event teacher's score of their source conceptualization."""
    if n == 0:
        return []
    c = t.conceptualization
    own_text = c.span.text
    by_text: dict[str, Conceptualization] = {}
    for event_id, span in index.entries_for(c.concept.text):
        if event_id == c.event or span.text == own_text:
            continue
        by_text.setdefault(
            span.text,
            Conceptualization(event=event_id, span=span, concept=c.concept),
        )
    if not by_text:
        return []
    texts = sorted(by_text)
    prompts = [teacher_event_prompt(by_text[x], index.events, prompt_cfg) for x in texts]
    if cache is None:
        scores = score_prompts(backend, EVENT_TASK, prompts)
    else:
        scores = cache.get_many(prompts)
    ranked = sorted(zip(texts, scores), key=lambda pair: (-pair[1], pair[0]))
    return [text for text, _ in ranked[:n]]


@dataclass(frozen=True)
class StudentRow:
    item_key: str
    prompt: str
    label: int


@dataclass(frozen=True)
class ComposedData:
    event_rows: tuple[StudentRow, ...]
    triple_rows: tuple[StudentRow, ...]

    def sizes(self) -> dict:
        return {
            "event": len(self.event_rows),
            "triple": len(self.triple_rows),
            "total": len(self.event_rows) + len(self.triple_rows),
        }


def _band_label(band: str) -> int:
    return 1 if band == POSITIVE else 0


def compose_student_data(
    bundle: DatasetBundle,
    event_store: PseudoLabelStore,
    triple_store: PseudoLabelStore,
    index: ConceptIndex,
    event_teacher: ScorerBackend,
    cfg: PipelineConfig,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
) -> ComposedData:
    """Turn gold train items plus non-discarded pseudo items into
    (bootstrapped student prompt, label) rows for both tasks.

    Retrieval candidates are ranked by the event teacher; pseudo bands map
    positive -> 1 and negative -> 0.
    """
    cache = _ScoreCache(event_teacher, EVENT_TASK)

    event_rows: list[StudentRow] = []
    gold_events = [
        c for c in bundle.conceptualizations if c.label is not None and c.split == "train"
    ]
    event_items: list[tuple[Conceptualization, int]] = [
        (c, c.label) for c in sorted(gold_events, key=lambda c: c.key)
    ]
    for key in sorted(event_store.records):
        record = event_store.records[key]
        if record.band == DISCARDED:
            continue
        event_items.append((record.item, _band_label(record.band)))
    for item, label in event_items:
        alts = retrieve_alternative_concepts(item, index, event_teacher, cfg.m, prompt_cfg, cache)
        prompt = student_event_prompt(item, alts, bundle.events, prompt_cfg)
        event_rows.append(StudentRow(item_key=item.key, prompt=prompt, label=label))

    triple_rows: list[StudentRow] = []
    gold_triples = [t for t in bundle.triples if t.label is not None and t.split == "train"]
    triple_items: list[tuple[AbstractTriple, int]] = [
        (t, t.label) for t in sorted(gold_triples, key=lambda t: t.key)
    ]
    for key in sorted(triple_store.records):
        record = triple_store.records[key]
        if record.band == DISCARDED:
            continue
        triple_items.append((record.item, _band_label(record.band)))
    for item, label in triple_items:
        insts = retrieve_instantiations(item, index, event_teacher, cfg.n, prompt_cfg, cache)
        prompt = student_triple_prompt(item, insts, bundle.events, prompt_cfg)
        triple_rows.append(StudentRow(item_key=item.key, prompt=prompt, label=label))

    return ComposedData(event_rows=tuple(event_rows), triple_rows=tuple(triple_rows))


def student_prompt_for(
    item: Item,
    bundle: DatasetBundle,
    index: ConceptIndex,
    event_teacher: ScorerBackend,
    cfg: PipelineConfig,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
    cache: _ScoreCache | None = None,
) -> str:
    """The bootstrapped prompt an item is scored on by student models."""
    if isinstance(item, Conceptualization):
        alts = retrieve_alternative_concepts(item, index, event_teacher, cfg.m, prompt_cfg, cache)
        return student_event_prompt(item, alts, bundle.events, prompt_cfg)
    insts = retrieve_instantiations(item, index, event_teacher, cfg.n, prompt_cfg, cache)
    return student_triple_prompt(item, insts, bundle.events, prompt_cfg)


def refine_pseudo_labels(
    store: PseudoLabelStore,
    student_backend: ScorerBackend,
    bundle: DatasetBundle,
    index: ConceptIndex,
    event_teacher: ScorerBackend,
    cfg: PipelineConfig,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
) -> PseudoLabelStore:
    """Re-score every pseudo-labeled item (all three bands) on its student
    prompt and re-band it; discarded items may re-enter bands."""
    if not store.records:
        return PseudoLabelStore(task=store.task, generation=store.generation + 1, records={})
    cache = _ScoreCache(event_teacher, EVENT_TASK)
    keys = sorted(store.records)
    prompts = [
        student_prompt_for(
            store.records[k].item, bundle, index, event_teacher, cfg, prompt_cfg, cache
        )
        for k in keys
    ]
    scores = score_prompts(student_backend, store.task, prompts)
    t_plus, t_minus = cfg.thresholds_for(store.task)
    records = {
        k: PseudoLabelRecord(
            item=store.records[k].item,
            score=score,
            band=band_for(score, t_plus, t_minus),
            origin=ORIGIN_STUDENT,
        )
        for k, score in zip(keys, scores)
    }
    return PseudoLabelStore(task=store.task, generation=store.generation + 1, records=records)


def propagate_negatives(
    event_store: PseudoLabelStore,
    triple_store: PseudoLabelStore,
    bundle: DatasetBundle,
    event_backend: ScorerBackend,
    cfg: PipelineConfig,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
) -> PseudoLabelStore:
    """Force band=negative on every pseudo-labeled triple whose head
    conceptualization scores below wrong_head_threshold on the event task.

    Head scores come from the event store when the head was pseudo-labeled
    there; other heads are scored fresh by ``event_backend`` on their
    teacher-form prompt. Gold-labeled triples are never stored, so they are
    untouched by construction.
    """
    if not triple_store.records:
        return triple_store
    head_scores: dict[str, float] = {}
    to_score: dict[str, Conceptualization] = {}
    for record in triple_store.records.values():
        head = record.item.conceptualization
        if head.key in event_store.records:
            head_scores[head.key] = event_store.records[head.key].score
        elif head.key not in to_score:
            to_score[head.key] = head
    if to_score:
        keys = sorted(to_score)
        prompts = [teacher_event_prompt(to_score[k], bundle.events, prompt_cfg) for k in keys]
        fresh = score_prompts(event_backend, EVENT_TASK, prompts)
        head_scores.update(zip(keys, fresh))

    records: dict[str, PseudoLabelRecord] = {}
    for key in triple_store.records:
        record = triple_store.records[key]
        head_key = record.item.conceptualization.key
        if head_scores[head_key] < cfg.wrong_head_threshold and record.band != NEGATIVE:
            records[key] = dataclasses.replace(record, band=NEGATIVE)
        else:
            records[key] = record
    return PseudoLabelStore(
        task=triple_store.task, generation=triple_store.generation, records=records
    )


@dataclass(frozen=True)
class BackendSuite:
    """Teacher and student backends for both tasks."""

    event_teacher: ScorerBackend
    triple_teacher: ScorerBackend
    event_student: ScorerBackend
    triple_student: ScorerBackend

    @classmethod
    def uniform(cls, backend: ScorerBackend) -> "BackendSuite":
        return cls(
            event_teacher=backend,
            triple_teacher=backend,
            event_student=backend,
            triple_student=backend,
        )

    def identities(self) -> dict:
        return {
            "event_teacher": self.event_teacher.identity,
            "triple_teacher": self.triple_teacher.identity,
            "event_student": self.event_student.identity,
            "triple_student": self.triple_student.identity,
        }


@dataclass
class RunResult:
    event_store: PseudoLabelStore
    triple_store: PseudoLabelStore
    composed: ComposedData
    index: ConceptIndex
    report: dict


def _atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def _save_student_data(composed: ComposedData, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, rows in (("event", composed.event_rows), ("triple", composed.triple_rows)):
        lines = [
            json.dumps(
                {"item_key": r.item_key, "prompt": r.prompt, "label": r.label},
                ensure_ascii=False,
                separators=(", ", ": "),
            )
            for r in rows
        ]
        _atomic_write_text(os.path.join(out_dir, f"{name}.jsonl"), "".join(l + "\n" for l in lines))


def run_cat(
    bundle: DatasetBundle,
    cfg: PipelineConfig,
    backends: BackendSuite,
    out_dir: str | None = None,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
    clock: Callable[[], float] | None = None,
) -> RunResult:
    """Execute the full loop on the train split: fit teachers, pseudo-label,
    index, compose bootstrapped student data, fit students, then refine
    (re-scoring, negative propagation, re-composition, re-fitting) for the
    configured number of rounds.

    Stores and student data are persisted after each completed stage when
    ``out_dir`` is given. A ``clock`` override makes stage timings (and with
    them the report bytes) reproducible.
    """
    clock = clock or time.perf_counter
    gold_events = [
        c for c in bundle.conceptualizations if c.label is not None and c.split == "train"
    ]
    gold_triples = [t for t in bundle.triples if t.label is not None and t.split == "train"]
    if not gold_events or not gold_triples:
        raise ContractError("run_cat needs labeled train items for both tasks")

    stages: list[dict] = []
    band_history: dict[str, dict] = {"event": {}, "triple": {}}

    def run_stage(name: str, fn: Callable[[], object]) -> object:
        start = clock()
        try:
            result = fn()
        except CatkitError as exc:
            raise PipelineStageError(name, exc) from exc
        stages.append({"stage": name, "seconds": round(clock() - start, 6)})
        return result

    def persist_stores(event_store: PseudoLabelStore, triple_store: PseudoLabelStore) -> None:
        if out_dir is None:
            return
        stores_dir = os.path.join(out_dir, "stores")
        os.makedirs(stores_dir, exist_ok=True)
        event_store.save_jsonl(
            os.path.join(stores_dir, f"event_gen{event_store.generation}.jsonl")
        )
        triple_store.save_jsonl(
            os.path.join(stores_dir, f"triple_gen{triple_store.generation}.jsonl")
        )

    def fit_students(data: ComposedData) -> dict:
        out = {}
        if backends.event_student.can_train and data.event_rows:
            out["event"] = fit(
                backends.event_student,
                EVENT_TASK,
                [(r.prompt, r.label) for r in data.event_rows],
                epochs=cfg.fit_epochs,
            )
        if backends.triple_student.can_train and data.triple_rows:
            out["triple"] = fit(
                backends.triple_student,
                TRIPLE_TASK,
                [(r.prompt, r.label) for r in data.triple_rows],
                epochs=cfg.fit_epochs,
            )
        return out

    losses: dict = {}

    def fit_teachers() -> None:
        pair = {}
        if backends.event_teacher.can_train:
            prompts = [
                (teacher_event_prompt(c, bundle.events, prompt_cfg), c.label)
                for c in sorted(gold_events, key=lambda c: c.key)
            ]
            pair["event"] = fit(backends.event_teacher, EVENT_TASK, prompts, epochs=cfg.fit_epochs)
        if backends.triple_teacher.can_train:
            prompts = [
                (teacher_triple_prompt(t, bundle.events, prompt_cfg), t.label)
                for t in sorted(gold_triples, key=lambda t: t.key)
            ]
            pair["triple"] = fit(
                backends.triple_teacher, TRIPLE_TASK, prompts, epochs=cfg.fit_epochs
            )
        losses["teachers"] = pair

    run_stage("fit_teachers", fit_teachers)

    unlabeled_events = [
        c for c in bundle.conceptualizations if c.label is None and c.split == "train"
    ]
    unlabeled_triples = [t for t in bundle.triples if t.label is None and t.split == "train"]

    event_store = run_stage(
        "assign_event_pseudo_labels",
        lambda: assign_pseudo_labels(
            unlabeled_events, backends.event_teacher, cfg, bundle.events, prompt_cfg, EVENT_TASK
        ),
    )
    triple_store = run_stage(
        "assign_triple_pseudo_labels",
        lambda: assign_pseudo_labels(
            unlabeled_triples,
            backends.triple_teacher,
            cfg,
            bundle.events,
            prompt_cfg,
            TRIPLE_TASK,
        ),
    )
    band_history["event"]["generation_0"] = event_store.band_counts()
    band_history["triple"]["generation_0"] = triple_store.band_counts()
    persist_stores(event_store, triple_store)

    index = run_stage(
        "build_index",
        lambda: build_index(bundle, include_pseudo=True, pseudo_store=event_store),
    )

    composed = run_stage(
        "compose_student_data",
        lambda: compose_student_data(
            bundle, event_store, triple_store, index, backends.event_teacher, cfg, prompt_cfg
        ),
    )
    if out_dir is not None:
        _save_student_data(composed, os.path.join(out_dir, "student_data"))

    losses["students_round_0"] = run_stage("fit_students", lambda: fit_students(composed))

    for round_no in range(1, cfg.refinement_rounds + 1):
        event_store = run_stage(
            f"refine_event_round_{round_no}",
            lambda: refine_pseudo_labels(
                event_store,
                backends.event_student,
                bundle,
                index,
                backends.event_teacher,
                cfg,
                prompt_cfg,
            ),
        )
        triple_store = run_stage(
            f"refine_triple_round_{round_no}",
            lambda: refine_pseudo_labels(
                triple_store,
                backends.triple_student,
                bundle,
                index,
                backends.event_teacher,
                cfg,
                prompt_cfg,
            ),
        )
        triple_store = run_stage(
            f"propagate_negatives_round_{round_no}",
            lambda: propagate_negatives(
                event_store, triple_store, bundle, backends.event_student, cfg, prompt_cfg
            ),
        )
        generation = event_store.generation
        band_history["event"][f"generation_{generation}"] = event_store.band_counts()
        band_history["triple"][f"generation_{generation}"] = triple_store.band_counts()
        persist_stores(event_store, triple_store)

        composed = run_stage(
            f"compose_student_data_round_{round_no}",
            lambda: compose_student_data(
                bundle, event_store, triple_store, index, backends.event_teacher, cfg, prompt_cfg
            ),
        )
        if out_dir is not None:
            _save_student_data(composed, os.path.join(out_dir, "student_data"))
        losses[f"students_round_{round_no}"] = run_stage(
            f"fit_students_round_{round_no}", lambda: fit_students(composed)
        )

    report = {
        "config": cfg.to_dict(),
        "backends": backends.identities(),
        "dataset": {
            "events": len(bundle.events),
            "conceptualizations": len(bundle.conceptualizations),
            "triples": len(bundle.triples),
        },
        "bands": band_history,
        "training_data": composed.sizes(),
        "losses": losses,
        "stages": stages,
    }
    if out_dir is not None:
        _atomic_write_text(
            os.path.join(out_dir, "report.json"),
            json.dumps(report, ensure_ascii=False, indent=2) + "\n",
        )
    return RunResult(
        event_store=event_store,
        triple_store=triple_store,
        composed=composed,
        index=index,
        report=report,
    )


def export_abstract_knowledge(
    bundle: DatasetBundle,
    event_store: PseudoLabelStore,
    triple_store: PseudoLabelStore,
    threshold: float,
    comet_path: str,
    generative_path: str,
    prompt_cfg: PromptConfig = DEFAULT_PROMPTS,
) -> dict:
    """Write accepted abstract knowledge: triples whose final score exceeds
    ``threshold`` as head/relation/tail TSV, and positive event
    conceptualizations (gold train positives plus pseudo records passing the
    same filter) as generative training pairs.

    Records banded negative are excluded even when their raw score passes:
    negative propagation must be able to veto a high-scoring triple.
    """
    selected_triples = [
        triple_store.records[key]
        for key in sorted(triple_store.records)
        if triple_store.records[key].score > threshold
        and triple_store.records[key].band != NEGATIVE
    ]
    comet_lines = [comet_record(r.item, bundle.events) for r in selected_triples]
    _atomic_write_text(comet_path, "".join(line + "\n" for line in comet_lines))

    pairs: list[tuple[str, str]] = []
    gold_positive = [
        c for c in bundle.conceptualizations if c.label == 1 and c.split == "train"
    ]
    chosen_events: list[Conceptualization] = sorted(gold_positive, key=lambda c: c.key)
    for key in sorted(event_store.records):
        record = event_store.records[key]
        if record.score > threshold and record.band != NEGATIVE:
            chosen_events.append(record.item)
    for c in chosen_events:
        prompt, target = generative_concept_prompt(
            bundle.events[c.event], c.span, c.concept, prompt_cfg
        )
        pairs.append((prompt, target))
    lines = [
        json.dumps({"input": p, "target": t}, ensure_ascii=False, separators=(", ", ": "))
        for p, t in pairs
    ]
    _atomic_write_text(generative_path, "".join(line + "\n" for line in lines))
    return {"comet_records": len(comet_lines), "generative_pairs": len(pairs)}


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out_dir: str,
    config_snapshot: dict,
    input_digests: dict[str, str],
    backend_identities: dict[str, str],
) -> str:
    """Digest every artifact under ``out_dir`` and write manifest.json last.

    The created_at timestamp honors SOURCE_DATE_EPOCH so reproducible runs
    yield byte-identical manifests.
    """
    outputs: dict[str, str] = {}
    for root, _, files in os.walk(out_dir):
        for name in sorted(files):
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out_dir)
            if rel == "manifest.json":
                continue
            outputs[rel] = file_digest(path)
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    created_at = (
        time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(int(epoch)))
        if epoch
        else time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    )
    manifest = {
        "config": config_snapshot,
        "inputs": dict(sorted(input_digests.items())),
        "backends": dict(sorted(backend_identities.items())),
        "outputs": dict(sorted(outputs.items())),
        "created_at": created_at,
    }
    path = os.path.join(out_dir, "manifest.json")
    _atomic_write_text(path, json.dumps(manifest, ensure_ascii=False, indent=2) + "\n")
    return path
