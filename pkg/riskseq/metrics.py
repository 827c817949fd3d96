"""Threshold and ranking metrics for binary detection, with bootstrap confidence intervals."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import pearsonr, rankdata

from riskseq.errors import DegenerateInputError, InvalidArgumentError, UndefinedMetricError
from utils.csv_writer import write_csv

logger = logging.getLogger(__name__)

REPORT_HEADER = ("metric", "value", "ci_lo", "ci_hi")
PR_CURVE_HEADER = ("threshold", "precision", "recall")


@dataclass(frozen=True)
class ScoredSet:
    """
    Scores with their binary ground-truth labels.

    Attributes:
        scores (np.ndarray): Real-valued scores, higher means more likely positive.
        labels (np.ndarray): 0/1 labels, same length as scores.
    """

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(self.labels).reshape(-1)
        if scores.size == 0:
            raise InvalidArgumentError("ScoredSet needs at least one sample")
        if scores.shape != labels.shape:
            raise InvalidArgumentError(
                f"scores and labels differ in length: {scores.size} vs {labels.size}"
            )
        if not np.isin(labels, (0, 1)).all():
            raise InvalidArgumentError("labels must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self) -> int:
        return self.scores.size

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos

    def subset(self, indices: np.ndarray) -> "ScoredSet":
        return ScoredSet(self.scores[indices], self.labels[indices])


@dataclass
class EvalReport:
    """
    Evaluation of one model on one scored set.

    Attributes:
        precision, recall, f1 (float): At the report's threshold.
        average_precision (float): Step-interpolated area under the PR curve.
        auc (float): Area under the ROC curve.
        threshold (float): Decision threshold used for the threshold metrics.
        ci (dict[str, tuple[float, float]]): Optional bootstrap bounds per metric.
        extra (dict[str, float]): Additional named values appended to the report.
    """

    precision: float
    recall: float
    f1: float
    average_precision: float
    auc: float
    threshold: float = 0.5
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        values = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "ap": self.average_precision,
            "auc": self.auc,
        }
        values.update(self.extra)
        return values

    def rows(self) -> list[tuple[str, float, str | float, str | float]]:
        rows = []
        for name, value in self.as_dict().items():
            lo, hi = self.ci.get(name, ("", ""))
            rows.append((name, float(value), lo, hi))
        return rows

    def write(self, path):
        """Writes the report as CSV with header metric,value,ci_lo,ci_hi."""
        return write_csv(path, REPORT_HEADER, self.rows())


def threshold_metrics(scored: ScoredSet, threshold: float = 0.5) -> tuple[float, float, float]:
    """
    Precision, recall and F1 when predicting positive iff score >= threshold.

    Conventions: precision is 1.0 when nothing is predicted positive. Recall is 1.0 when
    there are no true positives and nothing is predicted positive, 0.0 when there are no
    true positives but something is predicted positive. F1 is 0 when precision and recall
    are both 0.
    """
    predicted = scored.scores >= threshold
    positives = scored.labels == 1
    tp = int(np.sum(predicted & positives))
    n_predicted = int(predicted.sum())
    n_positive = int(positives.sum())

    precision = tp / n_predicted if n_predicted > 0 else 1.0
    if n_positive > 0:
        recall = tp / n_positive
    else:
        recall = 1.0 if n_predicted == 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def _ranked_blocks(scored: ScoredSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Groups samples by distinct score in descending order.

    Returns:
        tuple: (thresholds, cumulative predicted positives, cumulative true positives) at
            the end of each tied block.
    """
    order = np.argsort(-scored.scores, kind="stable")
    scores = scored.scores[order]
    labels = scored.labels[order]
    # last index of every run of equal scores
    block_end = np.ones(scores.size, dtype=bool)
    block_end[:-1] = scores[:-1] != scores[1:]
    cum_tp = np.cumsum(labels)[block_end]
    cum_pp = np.flatnonzero(block_end) + 1
    return scores[block_end], cum_pp, cum_tp


def average_precision(scored: ScoredSet) -> float:
    """
    Step-interpolated average precision, sum_k (R_k - R_{k-1}) * P_k.

    Tied scores form one block evaluated with the block's cumulative counts, so input
    order never changes the result.
    """
    n_pos = scored.n_pos
    if n_pos == 0:
        raise UndefinedMetricError("average precision is undefined without positive labels")
    _, cum_pp, cum_tp = _ranked_blocks(scored)
    precision = cum_tp / cum_pp
    recall_step = np.diff(np.concatenate(([0], cum_tp))) / n_pos
    return float(np.sum(recall_step * precision))


def precision_recall_curve(scored: ScoredSet) -> list[tuple[float, float, float]]:
    """
    Precision and recall at every distinct score used as threshold, highest first.

    Returns:
        list[tuple[float, float, float]]: Rows (threshold, precision, recall).
    """
    n_pos = scored.n_pos
    if n_pos == 0:
        raise UndefinedMetricError("the precision-recall curve needs positive labels")
    thresholds, cum_pp, cum_tp = _ranked_blocks(scored)
    return [
        (float(t), float(tp / pp), float(tp / n_pos))
        for t, pp, tp in zip(thresholds, cum_pp, cum_tp)
    ]


def auc(scored: ScoredSet) -> float:
    """
    Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked correctly, ties
    counting one half.
    """
    n_pos, n_neg = scored.n_pos, scored.n_neg
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scored.scores, method="average")
    rank_sum = float(ranks[scored.labels == 1].sum())
    u_statistic = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def mean_score(scored: ScoredSet) -> float:
    """Mean of the scores; used to bootstrap run-level values passed as scores."""
    return float(scored.scores.mean())


def bootstrap_ci(
    rng: np.random.Generator,
    scored: ScoredSet,
    metric: Callable[[ScoredSet], float],
    resamples: int = 2000,
    level: float = 0.95,
) -> tuple[float, float]:
    """
    Percentile bootstrap confidence interval of a metric.

    Samples are resampled with replacement; resamples on which the metric is undefined are
    skipped and counted.

    Args:
        rng (np.random.Generator): Source of the resample indices, drawn in one block so the
            resample index to draw mapping is fixed.
        scored (ScoredSet): The evaluation set.
        metric (Callable): Metric taking a ScoredSet.
        resamples (int): Number of bootstrap resamples.
        level (float): Confidence level in (0, 1).

    Returns:
        tuple[float, float]: (lower, upper) bounds.

    Raises:
        DegenerateInputError: If more than half of the resamples are undefined.
    """
    if resamples < 1:
        raise InvalidArgumentError(f"resamples must be >= 1, got {resamples}")
    if not 0 < level < 1:
        raise InvalidArgumentError(f"level must be in (0, 1), got {level}")

    indices = rng.integers(0, len(scored), size=(resamples, len(scored)))
    values = []
    undefined = 0
    for row in indices:
        try:
            values.append(metric(scored.subset(row)))
        except UndefinedMetricError:
            undefined += 1

    if undefined > 0:
        logger.warning(f"Skipped {undefined} of {resamples} bootstrap resamples with undefined metric")
    if undefined * 2 > resamples:
        raise DegenerateInputError(
            f"{undefined} of {resamples} bootstrap resamples are undefined for this metric"
        )

    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(np.asarray(values), [tail, 100.0 - tail], method="linear")
    return float(lo), float(hi)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient of two equally long sequences."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgumentError(f"x and y must be 1-D with equal length, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise InvalidArgumentError("pearson needs at least two points")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise UndefinedMetricError("pearson correlation is undefined for constant input")
    return float(np.clip(pearsonr(x, y).statistic, -1.0, 1.0))


def evaluate(scored: ScoredSet, threshold: float = 0.5) -> EvalReport:
    """Computes every metric of an EvalReport on one scored set."""
    precision, recall, f1 = threshold_metrics(scored, threshold)
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        average_precision=average_precision(scored),
        auc=auc(scored),
        threshold=threshold,
    )
