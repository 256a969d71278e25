"""Command-line workflows: train, extract, lifelong, eval.

Exit codes: 0 success, 1 input error (missing files, duplicate domains,
precondition violations), 2 format error (unparseable corpus, model or
knowledge file; also used by the argument parser for usage errors),
3 non-convergence when --strict is set.
"""

import os
import sys
from contextlib import contextmanager
from pathlib import Path

import click

from .corpus import (
    CorpusFormatError,
    labels_from_spans,
    parse_corpus_file,
    spans_from_labels,
    write_corpus,
)
from .crf import (
    OPTIMIZERS,
    ModelFormatError,
    TrainingConfig,
    load_model,
    save_model,
)
from .evaluation import (
    MODES,
    crf_plus_r,
    evaluate,
    occurrences_from_labels,
)
from .knowledge import (
    KnowledgeFormatError,
    load_knowledge,
    save_knowledge,
    token_vocabulary,
)
from .lifelong import (
    DEFAULT_ITERATION_CAP,
    LifelongState,
    extract_domain,
    extract_single_pass,
    train_phase,
)
from . import report

EXIT_INPUT_ERROR = 1
EXIT_FORMAT_ERROR = 2
EXIT_NOT_CONVERGED = 3


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@contextmanager
def _guarded():
    """Map library errors onto the exit-status taxonomy."""
    try:
        yield
    except (CorpusFormatError, ModelFormatError, KnowledgeFormatError) as exc:
        _fail(EXIT_FORMAT_ERROR, exc)
    except (ValueError, OSError) as exc:
        _fail(EXIT_INPUT_ERROR, exc)


@contextmanager
def _knowledge_lock(knowledge_path):
    """Process-level lock file guarding knowledge rewrites."""
    lock_path = Path(str(knowledge_path) + ".lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValueError(
            f"knowledge file is locked ({lock_path}); "
            "remove the lock file if no other run is active"
        ) from None
    os.close(fd)
    try:
        yield
    finally:
        lock_path.unlink(missing_ok=True)


def _canonical_labels(corpus, label_sequences):
    """Re-encode predictions as valid BIO (lenient decode, then re-encode)."""
    out = []
    for sentence, labels in zip(corpus.sentences, label_sequences):
        spans = spans_from_labels(sentence, labels)
        out.append(labels_from_spans(len(sentence), spans))
    return out


def _write_predictions(corpus, label_sequences, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        write_corpus(corpus, fh, labels_per_sentence=label_sequences)


@click.group()
def main():
    """Aspect extraction with a linear-chain CRF and lifelong knowledge."""


@main.command("train")
@click.option("--train", "train_path", required=True, type=click.Path(path_type=Path))
@click.option("--model", "model_path", required=True, type=click.Path(path_type=Path))
@click.option("--knowledge", "knowledge_path", required=True, type=click.Path(path_type=Path))
@click.option("--domain", default=None, help="Domain name (default: file stem).")
@click.option("--lambda", "threshold", default=2, show_default=True,
              help="Domain-frequency threshold for reliable aspects.")
@click.option("--max-iter", default=200, show_default=True,
              help="Optimizer iteration budget.")
@click.option("--sigma", default=1.0, show_default=True,
              help="Gaussian prior standard deviation (L2).")
@click.option("--optimizer", type=click.Choice(OPTIMIZERS), default="lbfgs",
              show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_train(train_path, model_path, knowledge_path, domain, threshold,
              max_iter, sigma, optimizer, seed):
    """Train the CRF on a labeled corpus and initialize the knowledge file."""
    with _guarded():
        corpus = parse_corpus_file(train_path, domain)
        if not corpus.labeled:
            raise ValueError(f"training corpus {train_path} is not fully labeled")
        config = TrainingConfig(
            l2_sigma=sigma,
            max_iterations=max_iter,
            optimizer=optimizer,
            seed=seed,
        )
        state, summary = train_phase(corpus, config, threshold)
        save_model(state.model, model_path)
        with _knowledge_lock(knowledge_path):
            save_knowledge(state.kb, knowledge_path)
        click.echo(
            f"trained on {len(corpus)} sentences of {corpus.domain_name!r}: "
            f"iterations={summary.iterations} objective={summary.objective:.6f} "
            f"H={summary.feature_count}"
        )
        click.echo(f"training aspects: {len(state.kb.training_aspects)}")
        click.echo(f"model written to {model_path}")
        click.echo(f"knowledge written to {knowledge_path}")


@main.command("extract")
@click.option("--model", "model_path", required=True, type=click.Path(path_type=Path))
@click.option("--knowledge", "knowledge_path", required=True, type=click.Path(path_type=Path))
@click.option("--test", "test_paths", required=True, multiple=True,
              type=click.Path(path_type=Path))
@click.option("--out", "out_dir", default=Path("."), type=click.Path(path_type=Path),
              show_default=True)
def cmd_extract(model_path, knowledge_path, test_paths, out_dir):
    """Single-pass CRF prediction with training aspects only; no knowledge update."""
    with _guarded():
        model = load_model(model_path)
        kb = load_knowledge(knowledge_path)
        vocabulary = token_vocabulary(kb.training_aspects)
        for path in test_paths:
            corpus = parse_corpus_file(path)
            label_sequences, aspects = extract_single_pass(model, corpus, vocabulary)
            canonical = _canonical_labels(corpus, label_sequences)
            out_path = out_dir / f"{corpus.domain_name}.crf.conll"
            _write_predictions(corpus, canonical, out_path)
            click.echo(
                f"domain={corpus.domain_name} aspects={len(aspects)} "
                f"predictions={out_path}"
            )


@main.command("lifelong")
@click.option("--model", "model_path", required=True, type=click.Path(path_type=Path))
@click.option("--knowledge", "knowledge_path", required=True, type=click.Path(path_type=Path))
@click.option("--domains", "domain_paths", required=True, multiple=True,
              type=click.Path(path_type=Path))
@click.option("--max-iter", default=DEFAULT_ITERATION_CAP, show_default=True,
              help="Iteration cap per domain.")
@click.option("--strict", is_flag=True,
              help="Exit with status 3 if any domain fails to converge.")
@click.option("--out", "out_dir", default=Path("."), type=click.Path(path_type=Path),
              show_default=True)
def cmd_lifelong(model_path, knowledge_path, domain_paths, max_iter, strict, out_dir):
    """Process new domains with the lifelong prediction loop, growing knowledge."""
    with _guarded():
        model = load_model(model_path)
        kb = load_knowledge(knowledge_path)
        names = [Path(p).stem for p in domain_paths]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate domain names: {duplicates}")
        already = sorted(n for n in names if n in kb.store)
        if already:
            raise ValueError(f"domains already processed: {already}")

        state = LifelongState(model=model, kb=kb, iteration_cap=max_iter)
        results = []
        with _knowledge_lock(knowledge_path):
            for path in domain_paths:
                corpus = parse_corpus_file(path)
                result, state = extract_domain(state, corpus)
                save_knowledge(kb, knowledge_path)
                canonical = _canonical_labels(corpus, result.label_sequences)
                pred_path = out_dir / f"{corpus.domain_name}.lifelong.conll"
                _write_predictions(corpus, canonical, pred_path)
                aspects_path = out_dir / f"{corpus.domain_name}.aspects.txt"
                aspects_path.write_text(
                    "".join(a + "\n" for a in sorted(result.aspects)),
                    encoding="utf-8",
                )
                results.append(result)
                click.echo(
                    f"domain={result.domain_name} aspects={len(result.aspects)} "
                    f"iterations={result.iterations_used} "
                    f"converged={str(result.converged).lower()} "
                    f"K={len(kb.reliable)}"
                )

        trace_text = report.format_trace_lines(state.history, results)
        (out_dir / "trace.txt").write_text(trace_text, encoding="utf-8")
        figures_dir = out_dir / "figures"
        figures_dir.mkdir(parents=True, exist_ok=True)
        report.render_knowledge_growth_figure(
            state.history, figures_dir / "knowledge_growth.png"
        )
        not_converged = [r.domain_name for r in results if not r.converged]
        if strict and not_converged:
            _fail(
                EXIT_NOT_CONVERGED,
                f"domains did not converge within {max_iter} iterations: "
                f"{not_converged} (results were still committed)",
            )


def _parse_pred_options(pred_options):
    systems = []
    for entry in pred_options:
        name, sep, path = entry.partition("=")
        if not sep or not name or not path:
            raise ValueError(
                f"--pred expects <system>=<path>, got {entry!r}"
            )
        systems.append((name, Path(path)))
    names = [n for n, _ in systems]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise ValueError(f"duplicate prediction systems: {duplicates}")
    return systems


def _aligned_labels(gold_corpus, pred_corpus, system):
    if len(pred_corpus.sentences) != len(gold_corpus.sentences):
        raise ValueError(
            f"alignment mismatch for system {system!r}: predictions have "
            f"{len(pred_corpus.sentences)} sentences, gold has "
            f"{len(gold_corpus.sentences)}"
        )
    labels = []
    for i, (pred, gold) in enumerate(zip(pred_corpus.sentences, gold_corpus.sentences)):
        if [t.form for t in pred.tokens] != [t.form for t in gold.tokens]:
            raise ValueError(
                f"alignment mismatch for system {system!r} at sentence {i + 1}: "
                "token forms differ from gold"
            )
        if pred.gold_labels is None:
            raise ValueError(
                f"prediction file for system {system!r} has an unlabeled "
                f"sentence at index {i + 1}"
            )
        labels.append(pred.gold_labels)
    return labels


@main.command("eval")
@click.option("--test", "gold_path", required=True, type=click.Path(path_type=Path),
              help="Gold-labeled corpus.")
@click.option("--pred", "pred_options", required=True, multiple=True,
              help="Prediction file as <system>=<path>; repeatable.")
@click.option("--knowledge", "knowledge_path", default=None,
              type=click.Path(path_type=Path),
              help="Knowledge file; adds a crf+r system derived from 'crf'.")
@click.option("--mode", default="both", show_default=True,
              type=click.Choice([*MODES, "both"]))
@click.option("--out", "out_dir", default=Path("."), type=click.Path(path_type=Path),
              show_default=True)
def cmd_eval(gold_path, pred_options, knowledge_path, mode, out_dir):
    """Score prediction files against a gold corpus and render reports."""
    with _guarded():
        gold_corpus = parse_corpus_file(gold_path)
        if not gold_corpus.labeled:
            raise ValueError(f"gold corpus {gold_path} is not fully labeled")
        systems = _parse_pred_options(pred_options)

        labels_by_system = {}
        for system, path in systems:
            pred_corpus = parse_corpus_file(path)
            labels_by_system[system] = _aligned_labels(gold_corpus, pred_corpus, system)

        if knowledge_path is not None and "crf" in labels_by_system:
            kb = load_knowledge(knowledge_path)
            labels_by_system["crf+r"] = crf_plus_r(
                labels_by_system["crf"], gold_corpus, kb.reliable
            )

        gold_occ = occurrences_from_labels(
            gold_corpus, [s.gold_labels for s in gold_corpus.sentences]
        )
        modes = list(MODES) if mode == "both" else [mode]
        rows = []
        for system in labels_by_system:
            pred_occ = occurrences_from_labels(gold_corpus, labels_by_system[system])
            for m in modes:
                rep = evaluate(pred_occ, gold_occ, mode=m, domain=gold_corpus.domain_name)
                rows.append(report.report_row(system, m, rep))

        table = report.format_table(rows)
        kv_lines = report.format_key_value_lines(rows)
        click.echo(table, nl=False)
        click.echo(kv_lines, nl=False)

        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(table, encoding="utf-8")
        (out_dir / "metrics.kv").write_text(kv_lines, encoding="utf-8")
        (out_dir / "metrics.tsv").write_text(report.format_tsv(rows), encoding="utf-8")
        figures_dir = out_dir / "figures"
        figures_dir.mkdir(parents=True, exist_ok=True)
        for m in modes:
            report.render_metrics_figure(rows, figures_dir / f"metrics_{m}.png", m)


if __name__ == "__main__":
    main()
