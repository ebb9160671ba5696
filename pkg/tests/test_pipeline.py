import numpy as np
import pytest

from karyogate import pipeline
from karyogate.classify import ExternalScores, ScoreVector
from karyogate.errors import InvalidInputError, ParseError
from karyogate.pipeline import (
    ContingencyMatrix,
    Instance,
    precision_recall,
    run_cascade,
    split_by_subject,
)
from karyogate.reliability import ThresholdTable


def make_instances(subject_sizes, label=1):
    out = []
    for s, size in enumerate(subject_sizes):
        for k in range(size):
            out.append(Instance(f"img_{s}_{k}.png", label, f"subj{s}"))
    return out


class TestSplitBySubject:
    def test_even_subjects_land_six_two_two(self):
        # 10 subjects of 4 instances, fractions (0.6, 0.2, 0.2)
        insts = make_instances([4] * 10)
        out = split_by_subject(insts, (0.6, 0.2, 0.2), seed=0)
        per_split = {s: 0 for s in pipeline.SPLITS}
        for inst in out:
            per_split[inst.split] += 1
        assert per_split["train"] == 24
        assert per_split["valid"] == 8
        assert per_split["test"] == 8

    def test_subjects_never_straddle_splits(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            sizes = rng.integers(1, 12, size=int(rng.integers(5, 15)))
            insts = make_instances(list(sizes))
            out = split_by_subject(insts, (0.7, 0.2, 0.1), seed=trial)
            seen = {}
            for inst in out:
                seen.setdefault(inst.subject, set()).add(inst.split)
            assert all(len(v) == 1 for v in seen.values())

    def test_giant_subject_goes_to_train(self):
        insts = make_instances([50, 2, 2, 2])
        out = split_by_subject(insts, (0.6, 0.2, 0.2), seed=2)
        giant = {i.split for i in out if i.subject == "subj0"}
        assert giant == {"train"}

    def test_deterministic_for_seed(self):
        insts = make_instances([3] * 8)
        a = split_by_subject(insts, (0.5, 0.25, 0.25), seed=7)
        b = split_by_subject(insts, (0.5, 0.25, 0.25), seed=7)
        assert [i.split for i in a] == [i.split for i in b]

    def test_bad_fractions_rejected(self):
        with pytest.raises(InvalidInputError):
            split_by_subject(make_instances([2, 2]), (0.5, 0.2, 0.2))

    def test_too_few_subjects_rejected(self):
        with pytest.raises(InvalidInputError):
            split_by_subject(make_instances([4, 4]), (0.6, 0.2, 0.2))

    def test_zero_fraction_split_unused(self):
        insts = make_instances([3] * 6)
        out = split_by_subject(insts, (0.8, 0.2, 0.0), seed=3)
        assert all(i.split != "test" for i in out)


class TestPrecisionRecall:
    def test_worked_example(self):
        counts = np.array([[3, 1], [2, 4]])
        p, r = precision_recall(counts)
        assert p[0] == pytest.approx(3 / 5)
        assert p[1] == pytest.approx(4 / 5)
        assert r[0] == pytest.approx(3 / 4)
        assert r[1] == pytest.approx(4 / 6)

    def test_zero_denominators_are_nan(self):
        counts = np.array([[2, 0], [0, 0]])
        p, r = precision_recall(counts)
        assert np.isnan(p[1]) and np.isnan(r[1])
        assert p[0] == 1.0 and r[0] == 1.0

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            counts = rng.integers(0, 5, (n, n))
            p, r = precision_recall(counts)
            for i in range(n):
                col = counts[:, i].sum()
                row = counts[i, :].sum()
                if col:
                    assert p[i] == pytest.approx(counts[i, i] / col, abs=1e-12)
                else:
                    assert np.isnan(p[i])
                if row:
                    assert r[i] == pytest.approx(counts[i, i] / row, abs=1e-12)
                else:
                    assert np.isnan(r[i])

    def test_non_square_rejected(self):
        with pytest.raises(InvalidInputError):
            precision_recall(np.zeros((2, 3)))


def scores_for(labels, n_labels, strength=0.9):
    vecs = []
    for lab in labels:
        s = np.full(n_labels, (1 - strength) / (n_labels - 1))
        s[lab] = strength
        vecs.append(ScoreVector(s))
    return vecs


class TestManifestIo:
    def test_round_trip(self, tmp_path):
        insts = [
            Instance("a.png", 1, "s1", "semi_straight", "train"),
            Instance("b.png", 24, "s2", "curved", "valid"),
        ]
        path = tmp_path / "manifest.tsv"
        pipeline.save_manifest(path, insts)
        assert pipeline.load_manifest(path) == insts

    def test_bad_header_raises(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("wrong\theader\n")
        with pytest.raises(ParseError):
            pipeline.load_manifest(path)

    def test_short_row_raises(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("path\tlabel\tsubject\tprune_label\tsplit\nx\t1\n")
        with pytest.raises(ParseError):
            pipeline.load_manifest(path)


class FixedScorer:
    """Scorer contract shim returning canned score vectors."""

    def __init__(self, vectors, labels):
        self.vectors = list(vectors)
        self.labels_ = np.asarray(labels)

    def score_batch(self, X):
        return list(self.vectors)


class TestRunCascade:
    def _instances(self, labels):
        return [Instance(f"i{k}.png", int(v), f"s{k}") for k, v in enumerate(labels)]

    def test_ungated_counts_without_table(self):
        true = [0, 0, 1, 1]
        est = [0, 1, 1, 1]
        identifier = FixedScorer(scores_for(est, 2), [0, 1])
        report = run_cascade(self._instances(true), np.zeros((4, 3)), identifier)
        assert np.array_equal(report.ungated.counts, [[1, 1], [0, 2]])
        assert np.array_equal(report.gated.counts, report.ungated.counts)
        assert report.rejection_rate == 0.0

    def test_very_low_thresholds_match_ungated(self):
        true = [0, 1, 1, 0]
        est = [0, 1, 0, 0]
        identifier = FixedScorer(scores_for(est, 2), [0, 1])
        table = ThresholdTable("I", "mean", 0.5, {0: -100.0, 1: -100.0})
        report = run_cascade(
            self._instances(true), np.zeros((4, 3)), identifier, table
        )
        assert np.array_equal(report.gated.counts, report.ungated.counts)
        assert report.gated.rejected_per_label.sum() == 0

    def test_rejections_tally_per_true_label(self):
        true = [0, 1]
        est = [0, 1]
        identifier = FixedScorer(scores_for(est, 2), [0, 1])
        # metric I of each vector is 0.9; threshold 0.95 rejects all
        table = ThresholdTable("I", "mean", 0.5, {0: 0.95, 1: 0.95})
        report = run_cascade(
            self._instances(true), np.zeros((2, 3)), identifier, table
        )
        assert report.gated.counts.sum() == 0
        assert np.array_equal(report.gated.rejected_per_label, [1, 1])
        assert report.rejection_rate == 1.0

    def test_all_pruned_out_gives_rejection_rate_one(self):
        true = [0, 1, 0]
        identifier = FixedScorer(scores_for([0, 1, 0], 2), [0, 1])
        pruner = FixedScorer(
            scores_for([1, 2, 3], 4), pipeline.PRUNE_LABELS
        )  # nothing semi-straight
        report = run_cascade(
            self._instances(true), np.zeros((3, 3)), identifier, pruner=pruner
        )
        assert report.n_pruned_out == 3
        assert report.ungated.counts.sum() == 0
        assert report.rejection_rate == 1.0

    def test_pruner_passes_only_semi_straight(self):
        true = [0, 1, 0, 1]
        prune_est = [0, 1, 0, 2]  # indices into PRUNE_LABELS; 0 passes
        identifier = FixedScorer(scores_for([0, 1, 0, 1], 2), [0, 1])
        pruner = FixedScorer(scores_for(prune_est, 4), pipeline.PRUNE_LABELS)
        report = run_cascade(
            self._instances(true), np.zeros((4, 3)), identifier, pruner=pruner
        )
        assert report.n_pruned_out == 2
        assert report.ungated.counts.sum() == 2

    def test_instance_conservation(self):
        rng = np.random.default_rng(5)
        n = 60
        true = rng.integers(0, 3, n)
        est = rng.integers(0, 3, n)
        identifier = FixedScorer(scores_for(est, 3), [0, 1, 2])
        prune_est = rng.integers(0, 4, n)
        pruner = FixedScorer(scores_for(prune_est, 4), pipeline.PRUNE_LABELS)
        table = ThresholdTable("I", "mean", 0.5, {0: 0.5, 1: 2.0, 2: None})
        report = run_cascade(
            [Instance(f"i{k}.png", int(v), "s") for k, v in enumerate(true)],
            np.zeros((n, 3)),
            identifier,
            table,
            pruner=pruner,
        )
        tallied = (
            report.n_pruned_out
            + report.gated.counts.sum()
            + report.gated.rejected_per_label.sum()
        )
        assert tallied == n
        assert report.ungated.counts.sum() == n - report.n_pruned_out

    def test_deterministic(self):
        true = [0, 1, 2, 0, 1]
        est = [0, 1, 2, 1, 1]
        identifier = FixedScorer(scores_for(est, 3), [0, 1, 2])
        r1 = run_cascade(self._instances(true), np.zeros((5, 3)), identifier)
        r2 = run_cascade(self._instances(true), np.zeros((5, 3)), identifier)
        assert np.array_equal(r1.gated.counts, r2.gated.counts)
        assert r1.to_json() == r2.to_json()

    def test_unknown_true_label_rejected(self):
        identifier = FixedScorer(scores_for([0, 1], 2), [0, 1])
        with pytest.raises(InvalidInputError):
            run_cascade(self._instances([0, 9]), np.zeros((2, 3)), identifier)

    def test_report_serializations(self):
        true = [0, 1, 1]
        est = [0, 1, 0]
        identifier = FixedScorer(scores_for(est, 2), [0, 1])
        report = run_cascade(self._instances(true), np.zeros((3, 3)), identifier)
        text = report.to_text()
        assert "rejection_rate" in text
        payload = report.to_json()
        assert '"n_total": 3' in payload


class TestCompareMetrics:
    def _clean_scores(self, rng, n_labels=5, n=150, noise=0.25):
        vecs, y = [], []
        for _ in range(n):
            lab = int(rng.integers(0, n_labels))
            s = rng.uniform(0, noise, n_labels)
            if rng.uniform() < 0.75:
                s[lab] += 0.7
            else:
                s[(lab + 1) % n_labels] += 0.7
            vecs.append(ScoreVector(s))
            y.append(lab)
        return vecs, np.array(y)

    def test_one_row_per_metric(self):
        rng = np.random.default_rng(6)
        cal, ycal = self._clean_scores(rng)
        ev, yev = self._clean_scores(rng)
        rows = pipeline.compare_metrics_report(cal, ycal, ev, yev)
        assert [r["metric"] for r in rows] == list(
            __import__("karyogate.reliability", fromlist=["METRICS"]).METRICS
        )
        for r in rows:
            assert 0.0 <= r["best_precision"] <= 1.0
            assert r["n_labels_improved"] >= 0

    def test_gating_improves_some_label(self):
        rng = np.random.default_rng(7)
        cal, ycal = self._clean_scores(rng)
        ev, yev = self._clean_scores(rng)
        rows = pipeline.compare_metrics_report(cal, ycal, ev, yev)
        assert max(r["best_improvement"] for r in rows) > 0.0

    def test_text_rendering(self):
        rng = np.random.default_rng(8)
        cal, ycal = self._clean_scores(rng, n=80)
        ev, yev = self._clean_scores(rng, n=80)
        rows = pipeline.compare_metrics_report(cal, ycal, ev, yev)
        text = pipeline.comparison_to_text(rows)
        assert text.splitlines()[0].startswith("metric\t")
        assert len(text.splitlines()) == len(rows) + 1


class TestContingencyMatrix:
    def test_zeros_shape(self):
        m = ContingencyMatrix.zeros(4)
        assert m.counts.shape == (4, 4)
        assert m.rejected_per_label.shape == (4,)
        assert m.counts.sum() == 0
