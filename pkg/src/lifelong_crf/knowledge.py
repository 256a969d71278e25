"""Reliable-aspect knowledge: training aspects, per-domain store, frequency mining.

The store keeps one aspect set per processed domain.  An aspect is reliable
once it has been extracted in at least ``threshold`` distinct domains;
training aspects are always reliable.
"""

import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field


@dataclass(frozen=True)
class AspectStore:
    """Ordered, immutable map of domain name to extracted aspect set."""

    entries: tuple[tuple[str, frozenset[str]], ...] = ()

    def domains(self):
        return [name for name, _ in self.entries]

    def get(self, domain_name):
        for name, aspects in self.entries:
            if name == domain_name:
                return aspects
        return None

    def __contains__(self, domain_name):
        return any(name == domain_name for name, _ in self.entries)


def upsert_domain(store, domain_name, aspects):
    """Replace (in place) or append the entry for a domain."""
    aspects = frozenset(aspects)
    entries = list(store.entries)
    for i, (name, _) in enumerate(entries):
        if name == domain_name:
            entries[i] = (domain_name, aspects)
            return AspectStore(entries=tuple(entries))
    entries.append((domain_name, aspects))
    return AspectStore(entries=tuple(entries))


def remove_domain(store, domain_name):
    """Drop a domain's entry; no-op when absent."""
    entries = tuple((n, a) for n, a in store.entries if n != domain_name)
    return AspectStore(entries=entries)


def mine_reliable(store, threshold):
    """Aspects present in at least ``threshold`` distinct domains of the store.

    Multiplicity within a domain is irrelevant: each domain votes once per
    phrase, so the result is invariant under entry reordering.
    """
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    counts = Counter()
    for _, aspects in store.entries:
        counts.update(aspects)
    return {phrase for phrase, n in counts.items() if n >= threshold}


def token_vocabulary(aspects):
    """Individual case-normalized words of every phrase.

    Pattern generation tests single words against the knowledge, so
    multi-word phrases contribute each of their tokens.
    """
    vocab = set()
    for phrase in aspects:
        vocab.update(w.lower() for w in phrase.split())
    return vocab


@dataclass
class KnowledgeBase:
    """Lifelong knowledge: K_t, the per-domain store S and the reliable set K."""

    training_aspects: frozenset[str]
    threshold: int
    store: AspectStore = field(default_factory=AspectStore)
    reliable: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold}")
        if not self.reliable:
            self.refresh()

    def refresh(self):
        """Re-derive the reliable set from the store; K always includes K_t."""
        self.reliable = set(self.training_aspects) | mine_reliable(
            self.store, self.threshold
        )
        return self.reliable


# Knowledge persistence: line-oriented text with [meta], [training] and
# [domain <name>] sections, one phrase per line, sorted for determinism.

class KnowledgeFormatError(ValueError):
    pass


def _render_knowledge(kb):
    lines = ["[meta]", f"lambda={kb.threshold}", "[training]"]
    lines.extend(sorted(kb.training_aspects))
    for name in sorted(kb.store.domains()):
        lines.append(f"[domain {name}]")
        lines.extend(sorted(kb.store.get(name)))
    return "\n".join(lines) + "\n"


def save_knowledge(kb, path):
    """Atomically rewrite the knowledge file (write temp, then rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp_path = tempfile.mkstemp(prefix=".knowledge-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(_render_knowledge(kb))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_knowledge(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    threshold = None
    training: set[str] = set()
    store = AspectStore()
    section = None
    current_domain = None
    domain_aspects: set[str] = set()

    def flush_domain():
        nonlocal store, current_domain, domain_aspects
        if current_domain is not None:
            store = upsert_domain(store, current_domain, domain_aspects)
        current_domain = None
        domain_aspects = set()

    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            flush_domain()
            header = line[1:-1]
            if header == "meta":
                section = "meta"
            elif header == "training":
                section = "training"
            elif header.startswith("domain "):
                section = "domain"
                current_domain = header[len("domain "):]
                if current_domain in store:
                    raise KnowledgeFormatError(
                        f"line {line_no}: duplicate domain section {current_domain!r}"
                    )
            else:
                raise KnowledgeFormatError(f"line {line_no}: unknown section {line!r}")
        elif section == "meta":
            key, _, value = line.partition("=")
            if key != "lambda":
                raise KnowledgeFormatError(f"line {line_no}: unknown meta key {key!r}")
            try:
                threshold = int(value)
            except ValueError:
                raise KnowledgeFormatError(
                    f"line {line_no}: lambda must be an integer, got {value!r}"
                ) from None
        elif section == "training":
            training.add(line)
        elif section == "domain":
            domain_aspects.add(line)
        else:
            raise KnowledgeFormatError(f"line {line_no}: content before any section")
    flush_domain()

    if threshold is None:
        raise KnowledgeFormatError("missing [meta] section with lambda=<int>")
    kb = KnowledgeBase(
        training_aspects=frozenset(training), threshold=threshold, store=store
    )
    kb.refresh()
    return kb
