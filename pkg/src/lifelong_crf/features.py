"""Per-token feature extraction and the trained feature dictionary.

Each token emits values for the template set {G, W, -1W, +1W, P, -1P, +1P}:
its own word and POS tag, the neighbouring words and tags, and one G value
per dependency pattern.  A pattern is a dependency relation with positions
dropped, the current word replaced by a wildcard, and the other word
abstracted to 'A' (a known aspect word) or 'O' plus its POS tag, e.g.
``(nmod, A, NN, *)``.  Because patterns contain no surface words, they carry
across domains, and growing the known-aspect vocabulary grows the set of
A-marked patterns without touching the model.
"""

from dataclasses import dataclass

TEMPLATES = ("G", "W", "-1W", "+1W", "P", "-1P", "+1P")

GOVERNOR = "governor"
DEPENDENT = "dependent"
ROOT_FORM = "ROOT"


@dataclass(frozen=True)
class DependencyRelation:
    """A typed arc between a governor and a dependent token."""

    rel_type: str
    gov_form: str
    gov_index: int  # 0 for ROOT
    gov_pos: str
    dep_form: str
    dep_index: int
    dep_pos: str


@dataclass(frozen=True)
class DependencyPattern:
    """A generalized relation: the current word's side is a wildcard."""

    rel_type: str
    current_role: str  # GOVERNOR or DEPENDENT
    other_label: str  # "A" or "O"
    other_pos: str

    def render(self):
        if self.current_role == DEPENDENT:
            return f"({self.rel_type}, {self.other_label}, {self.other_pos}, *)"
        return f"({self.rel_type}, *, {self.other_label}, {self.other_pos})"


@dataclass(frozen=True)
class FeatureValue:
    template: str
    value: str

    def render(self):
        return f"{self.template}={self.value}"


@dataclass
class FeaturizedSentence:
    """Per-token feature-value lists, with gold labels carried through."""

    token_features: list[tuple[FeatureValue, ...]]
    gold_labels: list[str] | None = None

    def __len__(self):
        return len(self.token_features)


def relations_for_token(sentence, index):
    """All dependency relations a token takes part in.

    Returns the relation to the token's own governor plus one relation per
    token governed by it, ordered by dependent index then governor index.
    For a root token the governor is rendered as ROOT at position 0 with the
    token's own POS echoed.
    """
    tokens = sentence.tokens
    if not 1 <= index <= len(tokens):
        raise IndexError(f"token index {index} out of range 1..{len(tokens)}")
    current = tokens[index - 1]

    relations = []
    if current.head == 0:
        relations.append(
            DependencyRelation(
                rel_type=current.dep_type,
                gov_form=ROOT_FORM,
                gov_index=0,
                gov_pos=current.pos,
                dep_form=current.form,
                dep_index=current.index,
                dep_pos=current.pos,
            )
        )
    else:
        gov = tokens[current.head - 1]
        relations.append(
            DependencyRelation(
                rel_type=current.dep_type,
                gov_form=gov.form,
                gov_index=gov.index,
                gov_pos=gov.pos,
                dep_form=current.form,
                dep_index=current.index,
                dep_pos=current.pos,
            )
        )
    for tok in tokens:
        if tok.head == index:
            relations.append(
                DependencyRelation(
                    rel_type=tok.dep_type,
                    gov_form=current.form,
                    gov_index=current.index,
                    gov_pos=current.pos,
                    dep_form=tok.form,
                    dep_index=tok.index,
                    dep_pos=tok.pos,
                )
            )
    relations.sort(key=lambda r: (r.dep_index, r.gov_index))
    return relations


def generalize_relation(rel, current_index, aspect_words):
    """Turn a relation into a pattern from the viewpoint of one of its words.

    The current word's side becomes the wildcard; the other word maps to 'A'
    when its case-normalized form is a known aspect word, else 'O'.
    """
    if current_index == rel.dep_index:
        role = DEPENDENT
        other_form, other_pos = rel.gov_form, rel.gov_pos
    elif current_index == rel.gov_index:
        role = GOVERNOR
        other_form, other_pos = rel.dep_form, rel.dep_pos
    else:
        raise ValueError(
            f"index {current_index} is on neither side of the relation {rel}"
        )
    label = "A" if other_form.lower() in aspect_words else "O"
    return DependencyPattern(
        rel_type=rel.rel_type,
        current_role=role,
        other_label=label,
        other_pos=other_pos,
    )


def featurize(sentence, aspect_words):
    """Extract the full template set for every token of a sentence."""
    tokens = sentence.tokens
    token_features = []
    for i, tok in enumerate(tokens):
        values = [FeatureValue("W", tok.form), FeatureValue("P", tok.pos)]
        if i > 0:
            values.append(FeatureValue("-1W", tokens[i - 1].form))
            values.append(FeatureValue("-1P", tokens[i - 1].pos))
        if i + 1 < len(tokens):
            values.append(FeatureValue("+1W", tokens[i + 1].form))
            values.append(FeatureValue("+1P", tokens[i + 1].pos))
        patterns = {
            generalize_relation(rel, tok.index, aspect_words).render()
            for rel in relations_for_token(sentence, tok.index)
        }
        values.extend(FeatureValue("G", p) for p in sorted(patterns))
        token_features.append(tuple(values))
    return FeaturizedSentence(
        token_features=token_features, gold_labels=sentence.gold_labels
    )


def featurize_corpus(corpus, aspect_words):
    return [featurize(s, aspect_words) for s in corpus.sentences]


class FeatureSpace:
    """Dense index over emission and transition features.

    Every (template, value) pair observed in training gets a column; an
    emission feature pairs a column with a label, so ids are laid out as
    ``column * n_labels + label``.  The n_labels^2 transition features
    follow.  The dictionary is closed: values first seen at prediction time
    have no index and contribute nothing.
    """

    def __init__(self, labels, obs_strings):
        self.labels = tuple(labels)
        self.obs_strings = list(obs_strings)
        self.obs_index = {s: i for i, s in enumerate(self.obs_strings)}
        if len(self.obs_index) != len(self.obs_strings):
            raise ValueError("duplicate observation strings")

    @property
    def n_labels(self):
        return len(self.labels)

    @property
    def n_obs(self):
        return len(self.obs_strings)

    @property
    def H(self):
        return self.n_obs * self.n_labels + self.n_labels ** 2

    def emission_id(self, column, label_index):
        return column * self.n_labels + label_index

    def transition_id(self, prev_index, next_index):
        return self.n_obs * self.n_labels + prev_index * self.n_labels + next_index

    def feature_id(self, label, template, value):
        """Index of an emission feature, or None when unseen in training."""
        column = self.obs_index.get(f"{template}={value}")
        if column is None:
            return None
        return self.emission_id(column, self.labels.index(label))

    def transition_feature_id(self, prev_label, next_label):
        return self.transition_id(
            self.labels.index(prev_label), self.labels.index(next_label)
        )

    def columns(self, feature_values):
        """Indexed columns for a token's feature values (unseen ones dropped)."""
        cols = []
        for fv in feature_values:
            column = self.obs_index.get(fv.render())
            if column is not None:
                cols.append(column)
        return cols

    def feature_string(self, feature_id):
        """Canonical string for any feature id (used by model serialization)."""
        n_emission = self.n_obs * self.n_labels
        if feature_id < n_emission:
            column, label_index = divmod(feature_id, self.n_labels)
            return f"{self.labels[label_index]}:{self.obs_strings[column]}"
        t = feature_id - n_emission
        prev_index, next_index = divmod(t, self.n_labels)
        return f"T:{self.labels[prev_index]}:{self.labels[next_index]}"

    def __eq__(self, other):
        return (
            isinstance(other, FeatureSpace)
            and self.labels == other.labels
            and self.obs_strings == other.obs_strings
        )


def build_feature_space(featurized_corpus, labels):
    """Index every observation seen in the corpus, in first-seen order."""
    if not featurized_corpus:
        raise ValueError("cannot build a feature space from an empty corpus")
    obs_strings = []
    seen = set()
    for fs in featurized_corpus:
        for values in fs.token_features:
            for fv in values:
                rendered = fv.render()
                if rendered not in seen:
                    seen.add(rendered)
                    obs_strings.append(rendered)
    return FeatureSpace(labels=labels, obs_strings=obs_strings)
