"""Linear-chain CRF numerics.

Scores factor into per-token emission features and label-pair transition
features.  All inference runs in log space with log-sum-exp; training
minimizes the negated conditional log likelihood plus a Gaussian (L2)
penalty, which keeps the objective finite on separable data.
"""

import hashlib
import io
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .features import FeatureSpace

OPTIMIZERS = ("lbfgs", "asgd")

MODEL_MAGIC = "lifelong-crf-model"
MODEL_VERSION = "v1"


class ModelFormatError(ValueError):
    """Unreadable model file."""


class ModelVersionError(ModelFormatError):
    pass


class ModelTruncatedError(ModelFormatError):
    pass


class ModelChecksumError(ModelFormatError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    l2_sigma: float = 1.0
    max_iterations: int = 200
    convergence_tol: float = 1e-7  # relative objective change
    optimizer: str = "lbfgs"
    seed: int = 0

    def validate(self):
        if self.l2_sigma <= 0:
            raise ValueError(f"l2_sigma must be positive, got {self.l2_sigma}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.convergence_tol <= 0:
            raise ValueError(
                f"convergence_tol must be positive, got {self.convergence_tol}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(
                f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}"
            )


@dataclass
class CrfModel:
    weights: np.ndarray
    feature_space: FeatureSpace
    config: TrainingConfig

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.feature_space.H,):
            raise ValueError(
                f"weight vector has length {self.weights.shape}, "
                f"feature space has H={self.feature_space.H}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("model weights must be finite")

    @property
    def label_set(self):
        return self.feature_space.labels


@dataclass
class LatticeScores:
    """Log-domain scores and marginals for one sentence."""

    emissions: np.ndarray  # (L, Y) emission log-scores
    transitions: np.ndarray  # (Y, Y) transition log-scores
    log_z: float
    marginals: np.ndarray  # (L, Y) per-position label marginals
    pairwise: np.ndarray  # (L-1, Y, Y) per-edge pairwise marginals


def _weight_matrices(weights, space):
    n_em = space.n_obs * space.n_labels
    Wm = weights[:n_em].reshape(space.n_obs, space.n_labels)
    Tm = weights[n_em:].reshape(space.n_labels, space.n_labels)
    return Wm, Tm


class _CompiledSentence:
    """A sentence reduced to indexed columns, reused across optimizer steps."""

    __slots__ = ("columns", "gold")

    def __init__(self, fs, space, require_gold=False):
        self.columns = [
            np.asarray(space.columns(values), dtype=np.intp)
            for values in fs.token_features
        ]
        if fs.gold_labels is not None:
            self.gold = np.asarray(
                [space.labels.index(y) for y in fs.gold_labels], dtype=np.intp
            )
        elif require_gold:
            raise ValueError("sentence has no gold labels")
        else:
            self.gold = None

    def emission_scores(self, Wm, n_labels):
        emissions = np.zeros((len(self.columns), n_labels))
        for l, cols in enumerate(self.columns):
            if cols.size:
                emissions[l] = Wm[cols].sum(axis=0)
        return emissions


def forward_backward(emissions, transitions):
    """Forward and backward log-message tables (alpha, beta)."""
    L, Y = emissions.shape
    alpha = np.empty((L, Y))
    beta = np.zeros((L, Y))
    if L == 0:
        return alpha, beta
    alpha[0] = emissions[0]
    for l in range(1, L):
        alpha[l] = emissions[l] + logsumexp(
            alpha[l - 1][:, None] + transitions, axis=0
        )
    for l in range(L - 2, -1, -1):
        beta[l] = logsumexp(
            transitions + emissions[l + 1][None, :] + beta[l + 1][None, :], axis=1
        )
    return alpha, beta


def lattice_from_scores(emissions, transitions):
    """Partition function and marginals from explicit score matrices."""
    L, Y = emissions.shape
    if L == 0:
        return LatticeScores(
            emissions=emissions,
            transitions=transitions,
            log_z=0.0,
            marginals=np.zeros((0, Y)),
            pairwise=np.zeros((0, Y, Y)),
        )
    alpha, beta = forward_backward(emissions, transitions)
    log_z = float(logsumexp(alpha[-1]))
    marginals = np.exp(alpha + beta - log_z)
    pairwise = np.exp(
        alpha[:-1, :, None]
        + transitions[None, :, :]
        + emissions[1:, None, :]
        + beta[1:, None, :]
        - log_z
    )
    return LatticeScores(
        emissions=emissions,
        transitions=transitions,
        log_z=log_z,
        marginals=marginals,
        pairwise=pairwise,
    )


def score_lattice(fs, model):
    """LatticeScores for a featurized sentence under a model."""
    space = model.feature_space
    if model.weights.shape != (space.H,):
        raise ValueError("model weights do not match its feature space")
    compiled = _CompiledSentence(fs, space)
    Wm, Tm = _weight_matrices(model.weights, space)
    return lattice_from_scores(compiled.emission_scores(Wm, space.n_labels), Tm)


def sequence_score(emissions, transitions, labels):
    """Unnormalized log-score of one label sequence."""
    labels = np.asarray(labels, dtype=np.intp)
    score = emissions[np.arange(len(labels)), labels].sum()
    if len(labels) > 1:
        score += transitions[labels[:-1], labels[1:]].sum()
    return float(score)


def _corpus_value_grad(theta, compiled, space, l2_sigma):
    Wm, Tm = _weight_matrices(theta, space)
    Y = space.n_labels
    grad_em = np.zeros_like(Wm)
    grad_tr = np.zeros_like(Tm)
    value = 0.0
    for sent in compiled:
        emissions = sent.emission_scores(Wm, Y)
        lattice = lattice_from_scores(emissions, Tm)
        gold = sent.gold
        value += lattice.log_z - sequence_score(emissions, Tm, gold)
        # expected minus empirical feature counts
        for l, cols in enumerate(sent.columns):
            if cols.size:
                np.add.at(grad_em, cols, lattice.marginals[l])
                grad_em[cols, gold[l]] -= 1.0
        if len(gold) > 1:
            grad_tr += lattice.pairwise.sum(axis=0)
            np.subtract.at(grad_tr, (gold[:-1], gold[1:]), 1.0)
    grad = np.concatenate([grad_em.ravel(), grad_tr.ravel()])
    value += float(theta @ theta) / (2.0 * l2_sigma ** 2)
    grad += theta / l2_sigma ** 2
    if not np.isfinite(value):
        raise ValueError(
            "objective is not finite; check the corpus or use a larger l2_sigma"
        )
    return value, grad


def objective_and_gradient(featurized_corpus, model, config):
    """Penalized negative log likelihood and its gradient at the model's weights."""
    space = model.feature_space
    compiled = [_CompiledSentence(fs, space, require_gold=True) for fs in featurized_corpus]
    return _corpus_value_grad(model.weights, compiled, space, config.l2_sigma)


def _train_lbfgs(compiled, space, config):
    result = minimize(
        _corpus_value_grad,
        np.zeros(space.H),
        args=(compiled, space, config.l2_sigma),
        method="L-BFGS-B",
        jac=True,
        options={
            "maxiter": config.max_iterations,
            "ftol": config.convergence_tol,
        },
    )
    return result.x, float(result.fun), int(result.nit)


def _train_asgd(compiled, space, config):
    """Averaged stochastic gradient over shuffled sentences, seeded."""
    rng = np.random.default_rng(config.seed)
    n = len(compiled)
    theta = np.zeros(space.H)
    average = np.zeros(space.H)
    step = 0
    base_rate = 0.5
    value = None
    for epoch in range(config.max_iterations):
        for i in rng.permutation(n):
            _, grad = _corpus_value_grad(
                theta, [compiled[i]], space, config.l2_sigma * np.sqrt(n)
            )
            rate = base_rate / (1.0 + step / n) ** 0.75
            theta -= rate * grad
            step += 1
            average += (theta - average) / step
        new_value, _ = _corpus_value_grad(average, compiled, space, config.l2_sigma)
        if value is not None and abs(value - new_value) <= config.convergence_tol * max(
            1.0, abs(value)
        ):
            value = new_value
            break
        value = new_value
    return average, float(value), epoch + 1


def train(featurized_corpus, feature_space, config):
    """Fit CRF weights on a labeled, featurized corpus."""
    config.validate()
    if not featurized_corpus:
        raise ValueError("training corpus is empty")
    compiled = [
        _CompiledSentence(fs, feature_space, require_gold=True)
        for fs in featurized_corpus
    ]
    if config.optimizer == "lbfgs":
        weights, value, iterations = _train_lbfgs(compiled, feature_space, config)
    else:
        weights, value, iterations = _train_asgd(compiled, feature_space, config)
    if not np.all(np.isfinite(weights)) or not np.isfinite(value):
        raise ValueError("training diverged to a non-finite objective")
    model = CrfModel(weights=weights, feature_space=feature_space, config=config)
    return model, value, iterations


def viterbi_path(emissions, transitions):
    """Highest-scoring label index sequence; ties go to the lowest index."""
    L, Y = emissions.shape
    if L == 0:
        return []
    delta = emissions[0].copy()
    back = np.zeros((L, Y), dtype=np.intp)
    for l in range(1, L):
        scores = delta[:, None] + transitions
        back[l] = np.argmax(scores, axis=0)  # first max = lowest previous label
        delta = scores[back[l], np.arange(Y)] + emissions[l]
    last = int(np.argmax(delta))
    path = [last]
    for l in range(L - 1, 0, -1):
        last = int(back[l, last])
        path.append(last)
    path.reverse()
    return path


def viterbi(fs, model):
    """Most likely label sequence for a featurized sentence."""
    space = model.feature_space
    compiled = _CompiledSentence(fs, space)
    Wm, Tm = _weight_matrices(model.weights, space)
    path = viterbi_path(compiled.emission_scores(Wm, space.n_labels), Tm)
    return [space.labels[i] for i in path]


# Model persistence: versioned tab-separated text with a trailing checksum.
# Exact feature strings and hex-encoded weights make round trips bit-exact.

def _render_model(model):
    space = model.feature_space
    cfg = model.config
    buf = io.StringIO()
    buf.write(f"{MODEL_MAGIC}\t{MODEL_VERSION}\n")
    buf.write("labels\t" + "\t".join(space.labels) + "\n")
    buf.write(
        "config"
        f"\tl2_sigma={cfg.l2_sigma!r}"
        f"\tmax_iterations={cfg.max_iterations}"
        f"\tconvergence_tol={cfg.convergence_tol!r}"
        f"\toptimizer={cfg.optimizer}"
        f"\tseed={cfg.seed}\n"
    )
    buf.write(f"nobs\t{space.n_obs}\n")
    for i, s in enumerate(space.obs_strings):
        buf.write(f"obs\t{i}\t{s}\n")
    n_em = space.n_obs * space.n_labels
    buf.write(f"ntrans\t{space.n_labels ** 2}\n")
    for t in range(space.n_labels ** 2):
        buf.write(f"trans\t{n_em + t}\t{space.feature_string(n_em + t)}\n")
    buf.write(f"nweights\t{space.H}\n")
    for i, w in enumerate(model.weights):
        buf.write(f"w\t{i}\t{float(w).hex()}\n")
    payload = buf.getvalue()
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    return payload + f"checksum\t{digest}\n"


def save_model(model, sink):
    """Write a model to a path or text file object."""
    text = _render_model(model)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(os.fspath(sink), "w", encoding="utf-8") as fh:
            fh.write(text)


def _parse_config(fields):
    kwargs = {}
    for f in fields:
        key, _, value = f.partition("=")
        if key in ("l2_sigma", "convergence_tol"):
            kwargs[key] = float(value)
        elif key in ("max_iterations", "seed"):
            kwargs[key] = int(value)
        elif key == "optimizer":
            kwargs[key] = value
        else:
            raise ModelFormatError(f"unknown config key {key!r}")
    return TrainingConfig(**kwargs)


def load_model(source):
    """Read a model from a path or text file object."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(os.fspath(source), encoding="utf-8") as fh:
            text = fh.read()

    lines = text.splitlines()
    if not lines or not lines[0].startswith(MODEL_MAGIC):
        raise ModelVersionError("not a model file (bad magic header)")
    header = lines[0].split("\t")
    version = header[1] if len(header) > 1 else "?"
    if len(header) != 2 or version != MODEL_VERSION:
        raise ModelVersionError(
            f"unsupported model version {version!r}; expected {MODEL_VERSION}"
        )
    if not lines[-1].startswith("checksum\t"):
        raise ModelTruncatedError("model file is truncated (no checksum line)")
    payload = "\n".join(lines[:-1]) + "\n"
    stated = lines[-1].split("\t", 1)[1]
    actual = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    if stated != actual:
        raise ModelChecksumError("model file checksum mismatch")

    labels = None
    config = None
    obs_strings = []
    weights = None
    n_obs = n_weights = None
    try:
        for line in lines[1:-1]:
            fields = line.split("\t")
            kind = fields[0]
            if kind == "labels":
                labels = tuple(fields[1:])
            elif kind == "config":
                config = _parse_config(fields[1:])
            elif kind == "nobs":
                n_obs = int(fields[1])
            elif kind == "obs":
                obs_strings.append(fields[2])
            elif kind == "ntrans" or kind == "trans":
                continue  # transition table is implied by the label order
            elif kind == "nweights":
                n_weights = int(fields[1])
                weights = np.empty(n_weights)
            elif kind == "w":
                weights[int(fields[1])] = float.fromhex(fields[2])
            else:
                raise ModelFormatError(f"unknown record kind {kind!r}")
    except (IndexError, ValueError, TypeError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model record: {exc}") from exc

    if labels is None or config is None or n_obs is None or weights is None:
        raise ModelTruncatedError("model file is missing required sections")
    if len(obs_strings) != n_obs:
        raise ModelTruncatedError(
            f"model file lists {len(obs_strings)} observations, expected {n_obs}"
        )
    space = FeatureSpace(labels=labels, obs_strings=obs_strings)
    if n_weights != space.H:
        raise ModelTruncatedError(
            f"model file has {n_weights} weights, expected {space.H}"
        )
    return CrfModel(weights=weights, feature_space=space, config=config)
