"""Phrase-level scoring and the dictionary-union baseline.

Occurrence mode matches exact spans (sentence, start, length); type mode
matches distinct normalized phrases.  Both are reported because knowledge
mining operates on types while span matching is the stricter, standard
sequence-labeling measure.
"""

from dataclasses import dataclass

from .corpus import B_ASP, I_ASP, spans_from_labels


@dataclass(frozen=True)
class Occurrence:
    """One aspect mention located in a corpus."""

    sentence: int  # 0-based sentence index within the corpus
    start: int  # 1-based token index within the sentence
    length: int
    phrase: str


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    true_positive: int
    predicted_count: int
    gold_count: int
    domain: str = "all"
    breakdown: tuple["EvalReport", ...] = ()


MODES = ("occurrence", "type")


def occurrences_from_labels(corpus, label_sequences):
    """Locate every aspect mention encoded by per-sentence label sequences."""
    if len(label_sequences) != len(corpus.sentences):
        raise ValueError(
            f"prediction has {len(label_sequences)} sentences, "
            f"corpus has {len(corpus.sentences)}"
        )
    occurrences = []
    for i, (sentence, labels) in enumerate(zip(corpus.sentences, label_sequences)):
        for span in spans_from_labels(sentence, labels):
            occurrences.append(
                Occurrence(
                    sentence=i, start=span.start, length=span.length, phrase=span.phrase
                )
            )
    return occurrences


def _keys(occurrences, mode):
    if mode == "occurrence":
        return {(o.sentence, o.start, o.length) for o in occurrences}
    if mode == "type":
        return {o.phrase for o in occurrences}
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _metrics(tp, predicted, gold):
    precision = tp / predicted if predicted else 0.0
    recall = tp / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def evaluate(predicted, gold, mode="occurrence", domain="all"):
    """Precision/recall/F1 of predicted against gold aspect occurrences."""
    pred_keys = _keys(predicted, mode)
    gold_keys = _keys(gold, mode)
    tp = len(pred_keys & gold_keys)
    precision, recall, f1 = _metrics(tp, len(pred_keys), len(gold_keys))
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        true_positive=tp,
        predicted_count=len(pred_keys),
        gold_count=len(gold_keys),
        domain=domain,
    )


def aggregate_reports(reports):
    """Micro-averaged totals over per-domain reports, kept as a breakdown."""
    reports = tuple(reports)
    tp = sum(r.true_positive for r in reports)
    predicted = sum(r.predicted_count for r in reports)
    gold = sum(r.gold_count for r in reports)
    precision, recall, f1 = _metrics(tp, predicted, gold)
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        true_positive=tp,
        predicted_count=predicted,
        gold_count=gold,
        domain="all",
        breakdown=reports,
    )


def crf_plus_r(label_sequences, corpus, reliable_aspects):
    """Union extractor predictions with dictionary matches of the reliable set.

    Every maximal token subsequence matching a reliable phrase
    (case-insensitive, longest match first, left to right) is added as a
    predicted span unless it overlaps an existing or already-added span.
    Existing spans are never removed.
    """
    if len(label_sequences) != len(corpus.sentences):
        raise ValueError(
            f"prediction has {len(label_sequences)} sentences, "
            f"corpus has {len(corpus.sentences)}"
        )
    phrases = sorted(
        (tuple(p.lower().split()) for p in reliable_aspects if p.strip()),
        key=lambda p: (-len(p), p),
    )
    result = []
    for sentence, labels in zip(corpus.sentences, label_sequences):
        occupied = set()
        for span in spans_from_labels(sentence, labels):
            occupied.update(range(span.start, span.start + span.length))
        forms = [t.form.lower() for t in sentence.tokens]
        new_labels = list(labels)
        i = 0
        while i < len(forms):
            start = i + 1  # 1-based
            if start in occupied:
                i += 1
                continue
            matched = 0
            for phrase in phrases:
                n = len(phrase)
                if i + n > len(forms):
                    continue
                if tuple(forms[i : i + n]) == phrase and not any(
                    p in occupied for p in range(start, start + n)
                ):
                    matched = n
                    break
            if not matched:
                i += 1
                continue
            occupied.update(range(start, start + matched))
            new_labels[i] = B_ASP
            for j in range(i + 1, i + matched):
                new_labels[j] = I_ASP
            i += matched
        result.append(new_labels)
    return result
