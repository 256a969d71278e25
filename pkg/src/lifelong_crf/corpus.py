"""Data model and ingestion for dependency-parsed review sentences.

Input is the extended CoNLL format: one token per line with six
tab-separated columns (INDEX, FORM, POS, HEAD, DEPREL, ASPECT), sentences
separated by blank lines, ``#`` starting a comment line.  The ASPECT column
carries BIO labels or ``_`` for unlabeled text.
"""

from dataclasses import dataclass, field
from pathlib import Path

LABELS = ("B-ASP", "I-ASP", "O")
B_ASP, I_ASP, OUT = LABELS
UNLABELED_MARK = "_"

COLUMN_COUNT = 6


class CorpusFormatError(ValueError):
    """Malformed extended-CoNLL input; carries the offending line number."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    """One token with its position, POS tag and governor arc."""

    index: int  # 1-based position in the sentence
    form: str
    pos: str
    head: int  # index of the governor token, 0 = ROOT
    dep_type: str


@dataclass
class Sentence:
    tokens: list[Token]
    gold_labels: list[str] | None = None

    def __len__(self):
        return len(self.tokens)

    @property
    def labeled(self):
        return self.gold_labels is not None


@dataclass
class Corpus:
    domain_name: str
    sentences: list[Sentence] = field(default_factory=list)

    @property
    def labeled(self):
        return all(s.labeled for s in self.sentences)

    def __len__(self):
        return len(self.sentences)


@dataclass(frozen=True)
class AspectSpan:
    """An aspect phrase with its sentence-local position.

    ``phrase`` is case-normalized and space-joined; ``start`` is the 1-based
    index of the first token; ``length`` counts tokens.
    """

    phrase: str
    start: int
    length: int


def normalize_phrase(forms):
    """Case-normalized, single-space-joined phrase for a token sequence."""
    return " ".join(f.lower() for f in forms)


def _validate_sentence(tokens, label_fields, first_line_no, token_lines):
    length = len(tokens)
    root_count = 0
    for tok, line_no in zip(tokens, token_lines):
        if tok.head < 0 or tok.head > length:
            raise CorpusFormatError(
                f"head index {tok.head} out of range for sentence of length {length}",
                line_no,
            )
        if tok.head == tok.index:
            raise CorpusFormatError(f"token {tok.index} is its own head", line_no)
        if tok.head == 0:
            root_count += 1
    if root_count != 1:
        raise CorpusFormatError(
            f"sentence must have exactly one root token (head 0), found {root_count}",
            first_line_no,
        )

    # Gold labels are all-or-none per sentence; validate strict BIO on gold.
    marks = [lf for lf, _ in label_fields]
    if all(m == UNLABELED_MARK for m in marks):
        return None
    if any(m == UNLABELED_MARK for m in marks):
        line_no = next(ln for m, ln in label_fields if m == UNLABELED_MARK)
        raise CorpusFormatError(
            "sentence mixes labeled and unlabeled tokens", line_no
        )
    prev = None
    for mark, line_no in label_fields:
        if mark == I_ASP and prev not in (B_ASP, I_ASP):
            raise CorpusFormatError(
                "invalid BIO transition: I-ASP must follow B-ASP or I-ASP", line_no
            )
        prev = mark
    return marks


def parse_corpus(stream, domain_name):
    """Parse an extended-CoNLL character stream into a Corpus.

    ``stream`` is any iterable of lines (an open file works).  Errors are
    reported with their 1-based line number.
    """
    sentences = []
    tokens: list[Token] = []
    label_fields: list[tuple[str, int]] = []
    token_lines: list[int] = []
    first_line_no = None

    def flush():
        nonlocal tokens, label_fields, token_lines, first_line_no
        if not tokens:
            return
        gold = _validate_sentence(tokens, label_fields, first_line_no, token_lines)
        sentences.append(Sentence(tokens=tokens, gold_labels=gold))
        tokens, label_fields, token_lines = [], [], []
        first_line_no = None

    line_no = 0
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if line.startswith("#"):
            continue
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) != COLUMN_COUNT:
            raise CorpusFormatError(
                f"expected {COLUMN_COUNT} tab-separated columns, got {len(cols)}",
                line_no,
            )
        idx_s, form, pos, head_s, dep_type, aspect = cols
        try:
            index = int(idx_s)
            head = int(head_s)
        except ValueError:
            raise CorpusFormatError(
                f"INDEX and HEAD must be integers, got {idx_s!r}/{head_s!r}", line_no
            ) from None
        if index < 1:
            raise CorpusFormatError(f"token index must be >= 1, got {index}", line_no)
        if any(t.index == index for t in tokens):
            raise CorpusFormatError(f"duplicate token index {index}", line_no)
        if index != len(tokens) + 1:
            raise CorpusFormatError(
                f"token index {index} out of sequence (expected {len(tokens) + 1})",
                line_no,
            )
        if aspect not in LABELS and aspect != UNLABELED_MARK:
            raise CorpusFormatError(
                f"ASPECT must be one of {', '.join(LABELS)} or '_', got {aspect!r}",
                line_no,
            )
        if first_line_no is None:
            first_line_no = line_no
        tokens.append(Token(index=index, form=form, pos=pos, head=head, dep_type=dep_type))
        label_fields.append((aspect, line_no))
        token_lines.append(line_no)
    flush()
    return Corpus(domain_name=domain_name, sentences=sentences)


def parse_corpus_file(path, domain_name=None):
    """Parse a corpus file; the domain name defaults to the file stem."""
    path = Path(path)
    if domain_name is None:
        domain_name = path.stem
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, domain_name)


def write_corpus(corpus, stream, labels_per_sentence=None):
    """Write a corpus in the extended CoNLL format.

    ``labels_per_sentence`` overrides the ASPECT column (used to emit
    predictions); otherwise gold labels are written, or ``_`` when absent.
    """
    for i, sentence in enumerate(corpus.sentences):
        if labels_per_sentence is not None:
            labels = labels_per_sentence[i]
        else:
            labels = sentence.gold_labels
        for j, tok in enumerate(sentence.tokens):
            aspect = labels[j] if labels is not None else UNLABELED_MARK
            stream.write(
                f"{tok.index}\t{tok.form}\t{tok.pos}\t{tok.head}\t{tok.dep_type}\t{aspect}\n"
            )
        stream.write("\n")


def spans_from_labels(sentence, labels):
    """Decode BIO labels into aspect spans (lenient: orphan I opens a span)."""
    if len(labels) != len(sentence.tokens):
        raise ValueError(
            f"label count {len(labels)} does not match token count {len(sentence.tokens)}"
        )
    spans = []
    start = None
    for i, label in enumerate(labels):
        if label == B_ASP:
            if start is not None:
                spans.append((start, i - start))
            start = i
        elif label == I_ASP:
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i - start))
                start = None
    if start is not None:
        spans.append((start, len(labels) - start))
    return [
        AspectSpan(
            phrase=normalize_phrase(t.form for t in sentence.tokens[s : s + n]),
            start=s + 1,
            length=n,
        )
        for s, n in spans
    ]


def labels_from_spans(length, spans):
    """Inverse of span decoding: BIO labels for the given spans."""
    labels = [OUT] * length
    for span in spans:
        i = span.start - 1
        labels[i] = B_ASP
        for j in range(i + 1, i + span.length):
            labels[j] = I_ASP
    return labels


def gold_aspects(corpus):
    """The set of distinct normalized aspect phrases annotated in a corpus."""
    if not corpus.labeled:
        raise ValueError(f"corpus {corpus.domain_name!r} is not fully labeled")
    aspects = set()
    for sentence in corpus.sentences:
        for span in spans_from_labels(sentence, sentence.gold_labels):
            aspects.add(span.phrase)
    return aspects
