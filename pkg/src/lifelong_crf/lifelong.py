"""Training phase and the lifelong prediction loop.

The model is trained once and never changes afterwards.  Each new domain is
processed by an iterative loop: featurize with the current reliable-aspect
vocabulary, extract, tentatively add the extractions to the store, mine
frequent aspects, and stop once the mined set reaches a fixed point from
one iteration to the next.  A hard iteration cap guarantees termination;
hitting it is reported, not hidden.
"""

from dataclasses import dataclass, field

from .corpus import LABELS, gold_aspects, spans_from_labels
from .crf import CrfModel, TrainingConfig, train, viterbi
from .features import build_feature_space, featurize_corpus
from .knowledge import (
    KnowledgeBase,
    mine_reliable,
    token_vocabulary,
    upsert_domain,
)

DEFAULT_ITERATION_CAP = 10


@dataclass(frozen=True)
class IterationTrace:
    iteration: int
    knowledge_size: int  # |K| used to featurize this iteration
    extracted_count: int  # |A| extracted this iteration


@dataclass
class ExtractionResult:
    domain_name: str
    aspects: set[str]
    label_sequences: list[list[str]]
    iterations_used: int
    converged: bool
    first_mining_empty: bool = False  # stopped because the first mined set was empty


@dataclass
class TrainingSummary:
    objective: float
    iterations: int
    feature_count: int


@dataclass
class LifelongState:
    model: CrfModel
    kb: KnowledgeBase
    iteration_cap: int = DEFAULT_ITERATION_CAP
    history: dict[str, list[IterationTrace]] = field(default_factory=dict)


def extract_single_pass(model, corpus, aspect_words):
    """Featurize with a fixed vocabulary and Viterbi-decode every sentence."""
    featurized = featurize_corpus(corpus, aspect_words)
    label_sequences = [viterbi(fs, model) for fs in featurized]
    aspects = set()
    for sentence, labels in zip(corpus.sentences, label_sequences):
        for span in spans_from_labels(sentence, labels):
            aspects.add(span.phrase)
    return label_sequences, aspects


def train_phase(training_corpus, config=None, threshold=2, iteration_cap=DEFAULT_ITERATION_CAP):
    """Train the CRF on labeled data and initialize the knowledge base.

    The training aspects seed the reliable set; the per-domain store starts
    empty.  Returns the lifelong state and a training summary.
    """
    if config is None:
        config = TrainingConfig()
    if not training_corpus.labeled:
        raise ValueError(
            f"training corpus {training_corpus.domain_name!r} is not fully labeled"
        )
    training_aspects = gold_aspects(training_corpus)
    vocabulary = token_vocabulary(training_aspects)
    featurized = featurize_corpus(training_corpus, vocabulary)
    space = build_feature_space(featurized, LABELS)
    model, objective, iterations = train(featurized, space, config)
    kb = KnowledgeBase(
        training_aspects=frozenset(training_aspects), threshold=threshold
    )
    state = LifelongState(model=model, kb=kb, iteration_cap=iteration_cap)
    summary = TrainingSummary(
        objective=objective, iterations=iterations, feature_count=space.H
    )
    return state, summary


def extract_domain(state, new_corpus):
    """Run the lifelong prediction loop on one new domain.

    Stops when the mined reliable set repeats between consecutive
    iterations (fixed point) or at the iteration cap.  The new domain's own
    tentative extractions count toward the frequency threshold while mining.
    Commits the final extraction to the store and refreshes the reliable
    set; the model itself is never touched.
    """
    domain = new_corpus.domain_name
    kb = state.kb
    if domain in kb.store:
        raise ValueError(f"domain {domain!r} was already processed")

    training = kb.training_aspects
    knowledge = set(kb.reliable)
    previous_mined: set[str] = set()
    traces = []
    converged = False
    first_mining_empty = False
    label_sequences: list[list[str]] = []
    aspects: set[str] = set()
    tentative_store = kb.store

    for iteration in range(1, state.iteration_cap + 1):
        label_sequences, aspects = extract_single_pass(
            state.model, new_corpus, token_vocabulary(knowledge)
        )
        tentative_store = upsert_domain(kb.store, domain, aspects)
        mined = mine_reliable(tentative_store, kb.threshold)
        traces.append(
            IterationTrace(
                iteration=iteration,
                knowledge_size=len(knowledge),
                extracted_count=len(aspects),
            )
        )
        if mined == previous_mined:
            converged = True
            first_mining_empty = iteration == 1 and not mined
            break
        knowledge = set(training) | mined
        previous_mined = mined

    kb.store = tentative_store
    kb.refresh()
    state.history[domain] = traces
    result = ExtractionResult(
        domain_name=domain,
        aspects=aspects,
        label_sequences=label_sequences,
        iterations_used=len(traces),
        converged=converged,
        first_mining_empty=first_mining_empty,
    )
    return result, state


def run_sequence(state, corpora):
    """Process a stream of domains in order, threading the lifelong state."""
    names = [c.domain_name for c in corpora]
    duplicates = {n for n in names if names.count(n) > 1}
    if duplicates:
        raise ValueError(f"duplicate domain names: {sorted(duplicates)}")
    results = []
    for corpus in corpora:
        result, state = extract_domain(state, corpus)
        results.append(result)
    return results
