import itertools

import numpy as np
import pytest

from riskseq.errors import DegenerateInputError, InvalidArgumentError, UndefinedMetricError
from riskseq.metrics import (
    PR_CURVE_HEADER,
    REPORT_HEADER,
    EvalReport,
    ScoredSet,
    auc,
    average_precision,
    bootstrap_ci,
    evaluate,
    mean_score,
    pearson,
    precision_recall_curve,
    threshold_metrics,
)
from utils.csv_writer import read_csv


def threshold_sweep_ap(scores, labels) -> float:
    """AP by sweeping every distinct score as threshold, highest first."""
    total = 0.0
    previous_recall = 0.0
    n_pos = sum(labels)
    for t in sorted(set(scores), reverse=True):
        predicted = [s >= t for s in scores]
        tp = sum(p and y for p, y in zip(predicted, labels))
        precision = tp / sum(predicted)
        recall = tp / n_pos
        total += (recall - previous_recall) * precision
        previous_recall = recall
    return total


def pairwise_auc(scores, labels) -> float:
    pairs = [(p, n) for p, yp in zip(scores, labels) if yp for n, yn in zip(scores, labels) if not yn]
    return sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in pairs) / len(pairs)


def test_threshold_metrics_conventions():
    assert threshold_metrics(ScoredSet([0.9, 0.2, 0.6, 0.4], [1, 1, 0, 0])) == pytest.approx((0.5, 0.5, 0.5))
    assert threshold_metrics(ScoredSet([0.1, 0.2], [1, 0])) == (1.0, 0.0, 0.0)
    assert threshold_metrics(ScoredSet([0.1, 0.2], [0, 0])) == (1.0, 1.0, 1.0)
    assert threshold_metrics(ScoredSet([0.7, 0.2], [0, 0])) == (0.0, 0.0, 0.0)
    # the threshold itself counts as positive
    assert threshold_metrics(ScoredSet([0.5], [1]))[1] == 1.0


def test_average_precision_examples():
    assert average_precision(ScoredSet([0.9, 0.8, 0.1], [1, 1, 0])) == 1.0
    assert average_precision(ScoredSet([0.9, 0.8, 0.7], [0, 1, 1])) == pytest.approx((1 / 2 + 2 / 3) / 2)
    assert average_precision(ScoredSet([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])) == 0.5


def test_average_precision_matches_threshold_sweep_on_all_labelings(rng):
    scores = [0.9, 0.4, 0.4, 0.7, 0.1, 0.7]
    for labels in itertools.product((0, 1), repeat=6):
        if not any(labels):
            continue
        expected = threshold_sweep_ap(scores, labels)
        assert average_precision(ScoredSet(scores, labels)) == pytest.approx(expected, rel=1e-12)
        order = rng.permutation(6)
        shuffled = ScoredSet(np.asarray(scores)[order], np.asarray(labels)[order])
        assert average_precision(shuffled) == pytest.approx(expected, rel=1e-12)


def random_scored_lists(rng, n_max: int = 200):
    """Scores on a coarse grid (so ties are common) with both classes present."""
    n = int(rng.integers(2, n_max + 1))
    scores = rng.integers(0, 9, size=n) / 8
    labels = rng.integers(0, 2, size=n)
    labels[:2] = (0, 1)
    return scores, labels


def test_auc_matches_pairwise_count(rng):
    for _ in range(100):
        scores, labels = random_scored_lists(rng)
        assert auc(ScoredSet(scores, labels)) == pairwise_auc(list(scores), list(labels))
    assert auc(ScoredSet([0.3, 0.3], [1, 0])) == 0.5
    assert auc(ScoredSet([0.1, 0.9], [0, 1])) == 1.0


@pytest.mark.parametrize("transform", [np.exp, lambda s: 2 * s + 1], ids=["exp", "affine"])
def test_ranking_metrics_are_invariant_to_monotone_transforms(rng, transform):
    for _ in range(100):
        scores, labels = random_scored_lists(rng)
        base = ScoredSet(scores, labels)
        moved = ScoredSet(transform(scores), labels)
        assert average_precision(moved) == average_precision(base)
        assert auc(moved) == auc(base)


def test_undefined_metrics():
    no_positives = ScoredSet([0.2, 0.8], [0, 0])
    with pytest.raises(UndefinedMetricError):
        average_precision(no_positives)
    with pytest.raises(UndefinedMetricError):
        auc(no_positives)
    with pytest.raises(UndefinedMetricError):
        auc(ScoredSet([0.2, 0.8], [1, 1]))
    with pytest.raises(UndefinedMetricError):
        precision_recall_curve(no_positives)


@pytest.mark.parametrize("scores,labels", [([], []), ([0.1, 0.2], [1]), ([0.1], [2])])
def test_scored_set_validation(scores, labels):
    with pytest.raises(InvalidArgumentError):
        ScoredSet(scores, labels)


def test_precision_recall_curve_groups_ties():
    curve = precision_recall_curve(ScoredSet([0.9, 0.5, 0.5, 0.1], [1, 0, 1, 0]))
    assert curve == [(0.9, 1.0, 0.5), (0.5, pytest.approx(2 / 3), 1.0), (0.1, 0.5, 1.0)]


def test_bootstrap_ci_brackets_the_estimate(rng):
    for _ in range(100):
        scores = rng.random(int(rng.integers(20, 201)))
        labels = rng.integers(0, 2, scores.size)
        labels[:2] = (0, 1)
        scored = ScoredSet(scores, labels)
        lo, hi = bootstrap_ci(rng, scored, auc, resamples=200)
        assert lo <= auc(scored) <= hi

    scored = ScoredSet(rng.random(200), rng.integers(0, 2, 200))
    lo, hi = bootstrap_ci(np.random.default_rng(1), scored, auc, resamples=500)
    assert hi - lo < 0.3
    assert bootstrap_ci(np.random.default_rng(1), scored, auc, resamples=500) == (lo, hi)


def test_bootstrap_of_run_means():
    runs = ScoredSet([0.6, 0.7, 0.8, 0.9], [1, 1, 1, 1])
    lo, hi = bootstrap_ci(np.random.default_rng(4), runs, mean_score, resamples=1000)
    assert 0.6 <= lo <= 0.75 <= hi <= 0.9


def test_bootstrap_skips_undefined_resamples(caplog):
    scored = ScoredSet(np.linspace(0, 1, 20), [1] + [0] * 19)
    lo, hi = bootstrap_ci(np.random.default_rng(0), scored, auc, resamples=200)
    assert 0.0 <= lo <= hi <= 1.0
    assert "bootstrap resamples with undefined metric" in caplog.text


def test_bootstrap_degenerate_input():
    with pytest.raises(DegenerateInputError):
        bootstrap_ci(np.random.default_rng(0), ScoredSet([0.1, 0.2], [0, 0]), auc, resamples=10)
    with pytest.raises(InvalidArgumentError):
        bootstrap_ci(np.random.default_rng(0), ScoredSet([0.1], [1]), auc, resamples=0)


def test_pearson():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    with pytest.raises(UndefinedMetricError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidArgumentError):
        pearson([1], [2])
    with pytest.raises(InvalidArgumentError):
        pearson([1, 2], [1, 2, 3])


def test_evaluate_and_report_csv(tmp_path):
    report = evaluate(ScoredSet([0.9, 0.6, 0.4, 0.2], [1, 0, 1, 0]))
    assert isinstance(report, EvalReport)
    assert (report.precision, report.recall, report.f1) == (0.5, 0.5, 0.5)
    assert report.auc == 0.75
    report.ci["auc"] = (0.5, 1.0)
    report.extra["pearson_len_recall"] = 0.25

    rows = read_csv(report.write(tmp_path / "report.csv"))
    assert tuple(rows[0].keys()) == REPORT_HEADER
    assert [row["metric"] for row in rows] == ["precision", "recall", "f1", "ap", "auc", "pearson_len_recall"]
    by_name = {row["metric"]: row for row in rows}
    assert float(by_name["auc"]["ci_lo"]) == 0.5 and by_name["recall"]["ci_lo"] == ""
    assert float(by_name["ap"]["value"]) == report.average_precision
    assert PR_CURVE_HEADER == ("threshold", "precision", "recall")


def test_auc_tie_example_and_score_reversal(rng):
    assert auc(ScoredSet([0.9, 0.5, 0.5, 0.1], [1, 1, 0, 0])) == 0.875
    scores = rng.random(50)
    labels = rng.integers(0, 2, 50)
    labels[:2] = (0, 1)
    assert auc(ScoredSet(-scores, labels)) == pytest.approx(1 - auc(ScoredSet(scores, labels)), abs=1e-12)


def test_all_positive_labels_have_perfect_precision(rng):
    scored = ScoredSet(rng.random(12), np.ones(12))
    assert average_precision(scored) == pytest.approx(1.0)
    precision, recall, f1 = threshold_metrics(ScoredSet([0.9, 0.7, 0.2, 0.6], [1, 0, 1, 1]))
    assert f1 == pytest.approx(2 * precision * recall / (precision + recall))


def test_pearson_small_example():
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)


def test_pearson_agrees_with_correlation_matrix(rng):
    x = rng.normal(size=40)
    y = 0.5 * x + rng.normal(size=40)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], rel=1e-12)
    assert pearson([0.0, 1.0], [5.0, 3.0]) == pytest.approx(-1.0)
