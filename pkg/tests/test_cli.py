import shutil

import pytest
from click.testing import CliRunner

from lifelong_crf.cli import main
from lifelong_crf.corpus import gold_aspects, parse_corpus_file
from lifelong_crf.knowledge import load_knowledge


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, fixtures_dir):
    """One trained model + pristine knowledge file shared by the module."""
    base = tmp_path_factory.mktemp("trained")
    runner = CliRunner()
    result = runner.invoke(
        main,
        [
            "train",
            "--train", str(fixtures_dir / "train_cameras.conll"),
            "--model", str(base / "model.crf"),
            "--knowledge", str(base / "knowledge.txt"),
            "--lambda", "2",
        ],
    )
    assert result.exit_code == 0, result.output
    return base


@pytest.fixture
def workdir(trained_dir, tmp_path):
    """A throwaway copy of the trained artifacts for mutating commands."""
    shutil.copy(trained_dir / "model.crf", tmp_path / "model.crf")
    shutil.copy(trained_dir / "knowledge.txt", tmp_path / "knowledge.txt")
    return tmp_path


def lifelong_args(workdir, *domain_paths, extra=()):
    args = [
        "lifelong",
        "--model", str(workdir / "model.crf"),
        "--knowledge", str(workdir / "knowledge.txt"),
        "--out", str(workdir / "out"),
    ]
    for path in domain_paths:
        args += ["--domains", str(path)]
    return args + list(extra)


class TestTrain:
    def test_outputs_and_summary(self, runner, trained_dir, fixtures_dir):
        assert (trained_dir / "model.crf").exists()
        kb = load_knowledge(trained_dir / "knowledge.txt")
        corpus = parse_corpus_file(fixtures_dir / "train_cameras.conll")
        assert kb.training_aspects == gold_aspects(corpus)
        assert kb.threshold == 2
        assert kb.store.entries == ()

    def test_missing_input_no_partial_outputs(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "train",
                "--train", str(tmp_path / "missing.conll"),
                "--model", str(tmp_path / "model.crf"),
                "--knowledge", str(tmp_path / "knowledge.txt"),
            ],
        )
        assert result.exit_code == 1
        assert not (tmp_path / "model.crf").exists()
        assert not (tmp_path / "knowledge.txt").exists()

    def test_malformed_corpus_is_format_error(self, runner, tmp_path):
        bad = tmp_path / "bad.conll"
        bad.write_text("1\tonly\tthree\n")
        result = runner.invoke(
            main,
            [
                "train",
                "--train", str(bad),
                "--model", str(tmp_path / "m"),
                "--knowledge", str(tmp_path / "k"),
            ],
        )
        assert result.exit_code == 2
        assert "line 1" in result.output

    def test_unlabeled_corpus_is_input_error(self, runner, tmp_path, fixtures_dir):
        result = runner.invoke(
            main,
            [
                "train",
                "--train", str(fixtures_dir / "tablets.conll"),
                "--model", str(tmp_path / "m"),
                "--knowledge", str(tmp_path / "k"),
            ],
        )
        assert result.exit_code == 1
        assert "not fully labeled" in result.output

    def test_reruns_are_byte_identical(self, runner, trained_dir, fixtures_dir, tmp_path):
        result = runner.invoke(
            main,
            [
                "train",
                "--train", str(fixtures_dir / "train_cameras.conll"),
                "--model", str(tmp_path / "model.crf"),
                "--knowledge", str(tmp_path / "knowledge.txt"),
                "--lambda", "2",
            ],
        )
        assert result.exit_code == 0
        assert (tmp_path / "model.crf").read_bytes() == (
            trained_dir / "model.crf"
        ).read_bytes()
        assert (tmp_path / "knowledge.txt").read_bytes() == (
            trained_dir / "knowledge.txt"
        ).read_bytes()


class TestExtract:
    def test_writes_predictions_and_leaves_knowledge_untouched(
        self, runner, workdir, fixtures_dir
    ):
        knowledge_before = (workdir / "knowledge.txt").read_bytes()
        result = runner.invoke(
            main,
            [
                "extract",
                "--model", str(workdir / "model.crf"),
                "--knowledge", str(workdir / "knowledge.txt"),
                "--test", str(fixtures_dir / "phones_test.conll"),
                "--out", str(workdir / "out"),
            ],
        )
        assert result.exit_code == 0, result.output
        predictions = parse_corpus_file(workdir / "out" / "phones_test.crf.conll")
        assert predictions.labeled
        assert len(predictions) == 6
        assert (workdir / "knowledge.txt").read_bytes() == knowledge_before

    def test_matches_first_lifelong_iteration_on_fresh_knowledge(
        self, runner, workdir, fixtures_dir
    ):
        # with an empty store the lifelong loop stops after one iteration,
        # so both commands decode with the training vocabulary
        result = runner.invoke(
            main,
            [
                "extract",
                "--model", str(workdir / "model.crf"),
                "--knowledge", str(workdir / "knowledge.txt"),
                "--test", str(fixtures_dir / "tablets.conll"),
                "--out", str(workdir / "out"),
            ],
        )
        assert result.exit_code == 0
        result = runner.invoke(
            main, lifelong_args(workdir, fixtures_dir / "tablets.conll")
        )
        assert result.exit_code == 0, result.output
        crf = parse_corpus_file(workdir / "out" / "tablets.crf.conll")
        lifelong = parse_corpus_file(workdir / "out" / "tablets.lifelong.conll")
        assert [s.gold_labels for s in crf.sentences] == [
            s.gold_labels for s in lifelong.sentences
        ]

    def test_missing_model_is_input_error(self, runner, workdir, fixtures_dir):
        result = runner.invoke(
            main,
            [
                "extract",
                "--model", str(workdir / "nope.crf"),
                "--knowledge", str(workdir / "knowledge.txt"),
                "--test", str(fixtures_dir / "tablets.conll"),
            ],
        )
        assert result.exit_code == 1


class TestLifelong:
    def test_full_sequence(self, runner, workdir, fixtures_dir):
        result = runner.invoke(
            main,
            lifelong_args(
                workdir,
                fixtures_dir / "tablets.conll",
                fixtures_dir / "monitors.conll",
                fixtures_dir / "laptops.conll",
            ),
        )
        assert result.exit_code == 0, result.output
        kb = load_knowledge(workdir / "knowledge.txt")
        assert set(kb.store.domains()) == {"tablets", "monitors", "laptops"}
        assert kb.reliable - kb.training_aspects == {"screen", "cover"}
        out = workdir / "out"
        assert (out / "tablets.lifelong.conll").exists()
        assert (out / "tablets.aspects.txt").read_text().splitlines() == [
            "cover",
            "screen",
        ]
        trace = (out / "trace.txt").read_text()
        assert "domain=tablets iteration=1" in trace
        assert "domain=monitors iteration=2" in trace
        assert "domain=tablets converged=true" in trace
        assert "(first mining empty)" in trace  # tablets stops on an empty mine
        assert (out / "figures" / "knowledge_growth.png").stat().st_size > 0

    def test_duplicate_domain_rejected(self, runner, workdir, fixtures_dir):
        result = runner.invoke(
            main, lifelong_args(workdir, fixtures_dir / "tablets.conll")
        )
        assert result.exit_code == 0
        result = runner.invoke(
            main, lifelong_args(workdir, fixtures_dir / "tablets.conll")
        )
        assert result.exit_code == 1
        assert "already processed" in result.output

    def test_duplicate_arguments_rejected(self, runner, workdir, fixtures_dir):
        result = runner.invoke(
            main,
            lifelong_args(
                workdir, fixtures_dir / "tablets.conll", fixtures_dir / "tablets.conll"
            ),
        )
        assert result.exit_code == 1
        assert "duplicate" in result.output

    def test_interrupted_run_leaves_valid_knowledge(
        self, runner, workdir, fixtures_dir, tmp_path
    ):
        corrupt = tmp_path / "broken.conll"
        corrupt.write_text("1\tbad\n")
        result = runner.invoke(
            main, lifelong_args(workdir, fixtures_dir / "tablets.conll", corrupt)
        )
        assert result.exit_code == 2
        kb = load_knowledge(workdir / "knowledge.txt")  # still parses
        assert kb.store.domains() == ["tablets"]
        assert not (workdir / "knowledge.txt.lock").exists()

    def test_strict_flags_nonconvergence(self, runner, workdir, fixtures_dir):
        result = runner.invoke(
            main, lifelong_args(workdir, fixtures_dir / "tablets.conll")
        )
        assert result.exit_code == 0
        result = runner.invoke(
            main,
            lifelong_args(
                workdir,
                fixtures_dir / "monitors.conll",
                extra=["--max-iter", "1", "--strict"],
            ),
        )
        assert result.exit_code == 3
        assert "did not converge" in result.output
        # results are still committed
        kb = load_knowledge(workdir / "knowledge.txt")
        assert "monitors" in kb.store

    def test_lock_contention(self, runner, workdir, fixtures_dir):
        lock = workdir / "knowledge.txt.lock"
        lock.touch()
        result = runner.invoke(
            main, lifelong_args(workdir, fixtures_dir / "tablets.conll")
        )
        assert result.exit_code == 1
        assert "locked" in result.output
        lock.unlink()


class TestEval:
    def run_pipeline(self, runner, workdir, fixtures_dir):
        result = runner.invoke(
            main,
            lifelong_args(
                workdir,
                fixtures_dir / "tablets.conll",
                fixtures_dir / "monitors.conll",
                fixtures_dir / "laptops.conll",
            ),
        )
        assert result.exit_code == 0
        result = runner.invoke(
            main,
            [
                "extract",
                "--model", str(workdir / "model.crf"),
                "--knowledge", str(workdir / "knowledge.txt"),
                "--test", str(fixtures_dir / "phones_test.conll"),
                "--out", str(workdir / "out"),
            ],
        )
        assert result.exit_code == 0
        result = runner.invoke(
            main, lifelong_args(workdir, fixtures_dir / "phones_test.conll")
        )
        assert result.exit_code == 0

    def test_gold_predictions_score_one(self, runner, workdir, fixtures_dir):
        gold = fixtures_dir / "phones_test.conll"
        result = runner.invoke(
            main,
            [
                "eval",
                "--test", str(gold),
                "--pred", f"crf={gold}",
                "--mode", "both",
                "--out", str(workdir / "report"),
            ],
        )
        assert result.exit_code == 0, result.output
        kv = (workdir / "report" / "metrics.kv").read_text().splitlines()
        assert len(kv) == 2
        for line in kv:
            assert "P=1.0000 R=1.0000 F1=1.0000" in line
            assert line.startswith("domain=phones_test ")

    def test_three_system_report(self, runner, workdir, fixtures_dir):
        self.run_pipeline(runner, workdir, fixtures_dir)
        result = runner.invoke(
            main,
            [
                "eval",
                "--test", str(fixtures_dir / "phones_test.conll"),
                "--pred", f"crf={workdir / 'out' / 'phones_test.crf.conll'}",
                "--pred", f"lifelong={workdir / 'out' / 'phones_test.lifelong.conll'}",
                "--knowledge", str(workdir / "knowledge.txt"),
                "--out", str(workdir / "report"),
            ],
        )
        assert result.exit_code == 0, result.output
        kv = (workdir / "report" / "metrics.kv").read_text()
        metrics = {}
        for line in kv.splitlines():
            fields = dict(f.split("=", 1) for f in line.split())
            metrics[(fields["system"], fields["mode"])] = (
                float(fields["P"]),
                float(fields["R"]),
                float(fields["F1"]),
            )
        assert set(metrics) == {
            (s, m)
            for s in ("crf", "crf+r", "lifelong")
            for m in ("occurrence", "type")
        }
        crf_p, crf_r, crf_f = metrics[("crf", "type")]
        plus_p, plus_r, _ = metrics[("crf+r", "type")]
        ll_p, ll_r, ll_f = metrics[("lifelong", "type")]
        assert ll_r > crf_r
        assert ll_f > crf_f
        assert plus_r >= crf_r
        assert plus_p <= crf_p
        report_dir = workdir / "report"
        assert (report_dir / "report.txt").exists()
        assert (report_dir / "metrics.tsv").read_text().startswith("domain\tsystem\tmode")
        assert (report_dir / "figures" / "metrics_occurrence.png").stat().st_size > 0
        assert (report_dir / "figures" / "metrics_type.png").stat().st_size > 0

    def test_sentence_count_mismatch(self, runner, workdir, fixtures_dir):
        result = runner.invoke(
            main,
            [
                "eval",
                "--test", str(fixtures_dir / "phones_test.conll"),
                "--pred", f"crf={fixtures_dir / 'tablets.conll'}",
            ],
        )
        assert result.exit_code == 1
        assert "4 sentences" in result.output and "6" in result.output

    def test_bad_pred_option(self, runner, fixtures_dir):
        result = runner.invoke(
            main,
            [
                "eval",
                "--test", str(fixtures_dir / "phones_test.conll"),
                "--pred", "no-equals-sign",
            ],
        )
        assert result.exit_code == 1
        assert "--pred" in result.output
