"""
Inaccuracy-exposure model for risk-tolerant positive sampling.

Labeling the N elements after a sparse label as positive exposes a model to mislabeled
elements once the true event has ended. The element at offset n from the label is
assumed to be mislabeled with probability 1 - exp(-alpha * n * L), an exponential decay of
event survival, where L is the number of frames per element (1 for element-wise
sequences). Averaging over the N sampled offsets gives the expected fraction of mislabeled
positives, the exposure P(N).

All functions are pure and computed in float64, summing terms in forward offset order.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from riskseq.errors import InvalidArgumentError
from utils.csv_writer import write_csv

logger = logging.getLogger(__name__)

EXPOSURE_CURVE_HEADER = ("alpha", "L", "N", "exposure")


@dataclass(frozen=True)
class ExposureParams:
    """
    Parameters of the mislabeling probability model.

    Attributes:
        alpha (float): Decay constant, per element (or per frame when segment_len > 1).
        segment_len (int): Frames per element, L. Use 1 for element-wise sequences.
    """

    alpha: float
    segment_len: int = 1

    def __post_init__(self):
        if not self.alpha > 0 or not math.isfinite(self.alpha):
            raise InvalidArgumentError(f"alpha must be a positive finite number, got {self.alpha}")
        if int(self.segment_len) != self.segment_len or self.segment_len < 1:
            raise InvalidArgumentError(f"segment_len must be an integer >= 1, got {self.segment_len}")

    @property
    def rate(self) -> float:
        """Decay per element, alpha * L."""
        return self.alpha * self.segment_len


@dataclass(frozen=True)
class LabelSet:
    """
    Number of elements sampled after each of T sparse labels.

    Attributes:
        counts (tuple[int, ...]): N_t for every label t, each >= 1.
    """

    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not self.counts:
            raise InvalidArgumentError("LabelSet needs at least one label")
        if any(c < 1 for c in self.counts):
            raise InvalidArgumentError(f"All counts must be >= 1, got {self.counts}")

    @property
    def T(self) -> int:
        return len(self.counts)


def mislabel_prob(params: ExposureParams, offset: int) -> float:
    """
    Probability that the element `offset` positions after the sparse label is mislabeled.

    Args:
        params (ExposureParams): Model parameters.
        offset (int): n - l, must be >= 0.

    Returns:
        float: 1 - exp(-alpha * offset * L), in [0, 1).
    """
    if offset < 0:
        raise InvalidArgumentError(f"offset must be >= 0, got {offset}")
    # -expm1 keeps full precision for small arguments
    return float(-math.expm1(-params.rate * offset))


def exposure(params: ExposureParams, risk_level: int) -> float:
    """
    Expected fraction of mislabeled elements among the N sampled after one label.

    Args:
        params (ExposureParams): Model parameters.
        risk_level (int): N >= 1.

    Returns:
        float: 1 - (1/N) * sum_{n=0}^{N-1} exp(-alpha * n * L).
    """
    if int(risk_level) != risk_level or risk_level < 1:
        raise InvalidArgumentError(f"risk_level must be an integer >= 1, got {risk_level}")
    total = 0.0
    for n in range(int(risk_level)):
        total += math.exp(-params.rate * n)
    return 1.0 - total / risk_level


def exposure_multi(params: ExposureParams, labels: LabelSet) -> float:
    """
    Exposure averaged over T independent labels with possibly different N_t.

    Each label contributes its own per-element average, so labels weigh equally
    regardless of how many elements were sampled after them.
    """
    if len(set(labels.counts)) == 1:
        # uniform counts reduce exactly to the single-label exposure
        return exposure(params, labels.counts[0])
    total = 0.0
    for count in labels.counts:
        total += exposure(params, count)
    return total / labels.T


def calibrate_alpha(expected_duration: float, per: Literal["element", "frame"] = "element",
                    segment_len: int = 1) -> float:
    """
    Calibrates alpha so that the mislabel probability reaches 1/2 at the expected duration.

    Args:
        expected_duration (float): E(M), the estimated average event length, in elements.
        per (str): "element" returns alpha per element. "frame" returns alpha per frame for
            segments of `segment_len` frames, i.e. ln(2) / (E(M) * L), so that
            ExposureParams(alpha, L) has its half-life at E(M) elements.
        segment_len (int): Frames per element, used when per == "frame".

    Returns:
        float: ln(2) / E(M) in the requested unit.
    """
    if not expected_duration > 0 or not math.isfinite(expected_duration):
        raise InvalidArgumentError(f"expected_duration must be positive, got {expected_duration}")
    if per == "element":
        return math.log(2.0) / expected_duration
    if per == "frame":
        if segment_len < 1:
            raise InvalidArgumentError(f"segment_len must be >= 1, got {segment_len}")
        return math.log(2.0) / (expected_duration * segment_len)
    raise InvalidArgumentError(f"per must be 'element' or 'frame', got {per!r}")


def exposure_curve(grid: Iterable[tuple[float, int]], n_max: int) -> list[tuple[float, int, int, float]]:
    """
    Exposure as a function of the risk level for every (alpha, L) grid point.

    Args:
        grid (Iterable[tuple[float, int]]): (alpha, L) pairs.
        n_max (int): Largest risk level, >= 1.

    Returns:
        list[tuple]: Rows (alpha, L, N, exposure) for N in 1..n_max, grid order preserved.
    """
    if n_max < 1:
        raise InvalidArgumentError(f"n_max must be >= 1, got {n_max}")
    rows = []
    for alpha, segment_len in grid:
        params = ExposureParams(alpha=float(alpha), segment_len=int(segment_len))
        for n in range(1, n_max + 1):
            rows.append((params.alpha, params.segment_len, n, exposure(params, n)))
    return rows


def write_exposure_curve(path, rows: Sequence[tuple[float, int, int, float]]):
    """Writes exposure_curve() rows to CSV with header alpha,L,N,exposure."""
    return write_csv(path, EXPOSURE_CURVE_HEADER, rows)


def simulate_exposure(rng: np.random.Generator, params: ExposureParams, risk_level: int,
                      trials: int = 100_000) -> tuple[float, float]:
    """
    Monte-Carlo estimate of exposure(params, N).

    The event always covers the labeled element and survives each further element with
    probability exp(-alpha * L), so its length M is geometric. The N risk positives then
    contain max(0, N - M) mislabeled elements. This memoryless process is the one
    consistent with the exponential mislabel probability.

    Returns:
        tuple[float, float]: Mean mislabeled fraction and its standard error.
    """
    if risk_level < 1:
        raise InvalidArgumentError(f"risk_level must be >= 1, got {risk_level}")
    if trials < 2:
        raise InvalidArgumentError(f"trials must be >= 2, got {trials}")
    end_prob = -math.expm1(-params.rate)
    durations = rng.geometric(end_prob, size=trials)
    fractions = np.maximum(0, risk_level - durations) / risk_level
    mean = float(fractions.mean())
    stderr = float(fractions.std(ddof=1) / math.sqrt(trials))
    return mean, stderr
