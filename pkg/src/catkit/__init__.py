"""catkit: conceptualize event-centric commonsense knowledge bases with a
teacher-student pseudo-labeling loop, pluggable plausibility scorers, and a
full evaluation suite."""

from .core import (
    AbstractTriple,
    CatkitError,
    Concept,
    Conceptualization,
    EventId,
    EventRecord,
    InstanceSpan,
    PseudoLabelRecord,
    Relation,
    conceptualized_head,
)
from .ingest import ConceptIndex, DatasetBundle, build_index, compute_stats, load_bundle
from .metrics import GenerationEvalItem, auc, evaluate_generations
from .pipeline import (
    BackendSuite,
    PipelineConfig,
    PseudoLabelStore,
    assign_pseudo_labels,
    compose_student_data,
    export_abstract_knowledge,
    propagate_negatives,
    refine_pseudo_labels,
    retrieve_alternative_concepts,
    retrieve_instantiations,
    run_cat,
)
from .prompts import PromptConfig, relation_text
from .scoring import (
    LexicalOverlapScorer,
    LogisticOverlapScorer,
    RecordedScorer,
    RemoteScorer,
    ScoreBatch,
    ScorerBackend,
    bce_loss,
)

__version__ = "0.1.0"
