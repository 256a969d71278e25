"""Lifelong aspect extraction with a linear-chain CRF.

A CRF trained once on labeled reviews is applied to a stream of new
domains.  Aspects extracted in enough distinct domains become reliable
knowledge that enriches the dependency-pattern features of later domains,
improving extraction without ever retraining the model.
"""

from .corpus import (
    LABELS,
    AspectSpan,
    Corpus,
    CorpusFormatError,
    Sentence,
    Token,
    gold_aspects,
    labels_from_spans,
    parse_corpus,
    parse_corpus_file,
    spans_from_labels,
    write_corpus,
)
from .crf import (
    CrfModel,
    LatticeScores,
    ModelFormatError,
    TrainingConfig,
    load_model,
    objective_and_gradient,
    save_model,
    score_lattice,
    train,
    viterbi,
)
from .evaluation import (
    EvalReport,
    Occurrence,
    aggregate_reports,
    crf_plus_r,
    evaluate,
    occurrences_from_labels,
)
from .features import (
    DependencyPattern,
    DependencyRelation,
    FeatureSpace,
    FeatureValue,
    FeaturizedSentence,
    build_feature_space,
    featurize,
    featurize_corpus,
    generalize_relation,
    relations_for_token,
)
from .knowledge import (
    AspectStore,
    KnowledgeBase,
    load_knowledge,
    mine_reliable,
    remove_domain,
    save_knowledge,
    token_vocabulary,
    upsert_domain,
)
from .lifelong import (
    ExtractionResult,
    LifelongState,
    extract_domain,
    extract_single_pass,
    run_sequence,
    train_phase,
)

__version__ = "0.1.0"
