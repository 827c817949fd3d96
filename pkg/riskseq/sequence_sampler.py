"""
Synthetic labeled sequences, risk-level-N positive labeling and rule-based negative sampling.

A sequence carries one event starting at the sparse label l and lasting M elements. Only l
is known at training time: the N elements l..l+N-1 are labeled positive, which mislabels
max(0, N - M) of them. Negatives are taken before l, far after l, or straight from the
negative class.
"""

import gzip
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from riskseq.errors import DataFormatError, InvalidArgumentError
from utils.csv_writer import write_csv
from utils.seeding import child_rng

logger = logging.getLogger(__name__)

MANIFEST_HEADER = (
    "sample_id",
    "split",
    "source",
    "assigned_label",
    "true_label",
    "seq_id",
    "index_in_seq",
)

IDX_UBYTE = 0x08


class SampleSource(str, Enum):
    RISK_POSITIVE = "risk_positive"
    PRE_LABEL_NEGATIVE = "pre_label_negative"
    FAR_NEGATIVE = "far_negative"
    DIRECT_NEGATIVE = "direct_negative"


@dataclass(frozen=True)
class Element:
    """
    One element of a sequence.

    Attributes:
        features (np.ndarray): H x W single-channel image, float64.
        true_class (int): 1 for positive, 0 for negative.
        element_id (str): Identifier of the pool image the element was drawn from.
    """

    features: np.ndarray
    true_class: int
    element_id: str = ""


@dataclass
class ElementPool:
    """
    A finite source of same-class images, drawn from with replacement.

    Attributes:
        images (np.ndarray): K x H x W images, float64.
        true_class (int): Class of every image in the pool.
        ids (list[str]): One identifier per image.
    """

    images: np.ndarray
    true_class: int
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise InvalidArgumentError(f"pool images must be K x H x W, got shape {self.images.shape}")
        if not self.ids:
            self.ids = [f"c{self.true_class}:{i}" for i in range(len(self.images))]
        if len(self.ids) != len(self.images):
            raise InvalidArgumentError("pool ids and images differ in length")

    def __len__(self) -> int:
        return len(self.images)

    def element(self, index: int) -> Element:
        return Element(self.images[index], self.true_class, self.ids[index])

    def draw(self, rng: np.random.Generator, count: int) -> list[Element]:
        """Draws `count` elements with replacement."""
        if len(self) == 0:
            raise InvalidArgumentError("cannot draw from an empty pool")
        return [self.element(int(i)) for i in rng.integers(0, len(self), size=count)]

    def take(self, indices: Iterable[int]) -> "ElementPool":
        indices = list(indices)
        return ElementPool(self.images[indices], self.true_class, [self.ids[i] for i in indices])

    def map_images(self, transform) -> "ElementPool":
        return ElementPool(transform(self.images), self.true_class, list(self.ids))


@dataclass(frozen=True)
class SequenceSpec:
    """
    How sequences are laid out.

    Attributes:
        seq_len (int): Number of elements per sequence.
        m_lo, m_hi (int): Event duration M is drawn uniformly from [m_lo, m_hi].
        event_start (int | Literal["uniform"]): Fixed sparse-label index l, or "uniform" to
            draw l uniformly from [0, seq_len - M].
    """

    seq_len: int = 10
    m_lo: int = 0
    m_hi: int = 10
    event_start: int | Literal["uniform"] = 0

    def __post_init__(self):
        if self.seq_len < 1:
            raise InvalidArgumentError(f"seq_len must be positive, got {self.seq_len}")
        if not 0 <= self.m_lo <= self.m_hi <= self.seq_len:
            raise InvalidArgumentError(
                f"need 0 <= m_lo <= m_hi <= seq_len, got {self.m_lo}, {self.m_hi}, {self.seq_len}"
            )
        if self.event_start != "uniform":
            if not isinstance(self.event_start, int) or self.event_start < 0:
                raise InvalidArgumentError(f"event_start must be >= 0 or 'uniform', got {self.event_start!r}")
            if self.event_start + self.m_hi > self.seq_len:
                raise InvalidArgumentError(
                    f"event_start {self.event_start} + m_hi {self.m_hi} exceeds seq_len {self.seq_len}"
                )

    @property
    def expected_duration(self) -> float:
        return (self.m_lo + self.m_hi) / 2.0


@dataclass(frozen=True)
class NegativeRules:
    """
    Where negatives may be sampled inside a labeled sequence.

    The far region starts at l + P, so P must exceed the risk level N the same sequence is
    labeled with; otherwise one element would be both a risk positive and a negative.

    Attributes:
        far_gap (int): P, minimum distance from the sparse label for "far" negatives.
        allow_pre_label (bool): Whether indices before the label are eligible.
        risk_level (int): N of the risk labels applied to the same sequences.
    """

    far_gap: int
    allow_pre_label: bool = True
    risk_level: int = 1

    def __post_init__(self):
        if self.far_gap < 1:
            raise InvalidArgumentError(f"far_gap must be >= 1, got {self.far_gap}")
        self.check_risk_level(self.risk_level)

    def check_risk_level(self, risk_level: int):
        if self.far_gap <= risk_level:
            raise InvalidArgumentError(
                f"far gap {self.far_gap} must exceed the risk level {risk_level}"
            )


@dataclass
class LabeledSequence:
    """
    Elements with one event at [event_start, event_start + event_len - 1].

    Attributes:
        elements (list[Element]): Ordered elements.
        event_start (int): Sparse label l.
        event_len (int): True duration M.
        seq_id (int): Identifier within its split.
    """

    elements: list[Element]
    event_start: int
    event_len: int
    seq_id: int = 0

    def __post_init__(self):
        if self.event_start < 0 or self.event_len < 0:
            raise InvalidArgumentError("event_start and event_len must be >= 0")
        if self.event_start + self.event_len > len(self.elements):
            raise InvalidArgumentError(
                f"event [{self.event_start}, {self.event_start + self.event_len}) "
                f"exceeds sequence length {len(self.elements)}"
            )

    def __len__(self) -> int:
        return len(self.elements)

    def true_label(self, index: int) -> int:
        return int(self.event_start <= index < self.event_start + self.event_len)

    @property
    def true_labels(self) -> np.ndarray:
        return np.array([self.true_label(i) for i in range(len(self))], dtype=np.int64)


@dataclass(frozen=True)
class TrainingSample:
    """
    An element with its assigned (possibly wrong) and true labels.

    Attributes:
        element (Element): The sampled element.
        assigned_label (int): Label used for training.
        true_label (int): Ground truth.
        source (SampleSource): Sampling rule that produced the sample.
        seq_id (int): Parent sequence, -1 for direct negatives.
        index_in_seq (int): Position in the parent sequence, -1 for direct negatives.
    """

    element: Element
    assigned_label: int
    true_label: int
    source: SampleSource
    seq_id: int = -1
    index_in_seq: int = -1

    @property
    def mislabeled(self) -> bool:
        return self.assigned_label != self.true_label


@dataclass
class TrainingSet:
    """
    Samples of one split, plus bookkeeping of the labeling pass that produced them.

    Attributes:
        samples (list[TrainingSample]): Samples in construction order.
        risk_level (int): N used for risk labeling.
        sequences (list[LabeledSequence]): Parent sequences.
        clipped (int): Risk positives dropped by lenient clipping.
    """

    samples: list[TrainingSample] = field(default_factory=list)
    risk_level: int = 1
    sequences: list[LabeledSequence] = field(default_factory=list)
    clipped: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (images [n, H, W], assigned labels, true labels)."""
        if not self.samples:
            raise InvalidArgumentError("training set is empty")
        images = np.stack([s.element.features for s in self.samples])
        assigned = np.array([s.assigned_label for s in self.samples], dtype=np.int64)
        true = np.array([s.true_label for s in self.samples], dtype=np.int64)
        return images, assigned, true

    def count(self, source: SampleSource) -> int:
        return sum(1 for s in self.samples if s.source == source)

    @property
    def mislabeled_fraction(self) -> float:
        """Fraction of mislabeled samples among risk positives."""
        positives = [s for s in self.samples if s.source == SampleSource.RISK_POSITIVE]
        if not positives:
            return 0.0
        return sum(s.mislabeled for s in positives) / len(positives)

    @property
    def element_ids(self) -> set[str]:
        return {s.element.element_id for s in self.samples}


@dataclass
class HeldOutSet:
    """Evaluation elements with their true labels."""

    images: np.ndarray
    labels: np.ndarray
    ids: list[str]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class ImageExperiment:
    train: TrainingSet
    val: TrainingSet
    test: HeldOutSet


def make_sequence(
    rng: np.random.Generator,
    spec: SequenceSpec,
    pos_pool: ElementPool,
    neg_pool: ElementPool,
    seq_id: int = 0,
) -> LabeledSequence:
    """
    Draws one labeled sequence: M positives from the event start, negatives elsewhere.

    Args:
        rng (np.random.Generator): Random source.
        spec (SequenceSpec): Sequence layout.
        pos_pool (ElementPool): Positive class images.
        neg_pool (ElementPool): Negative class images.
        seq_id (int): Identifier stored on the sequence.

    Returns:
        LabeledSequence: A sequence of spec.seq_len elements.
    """
    if len(pos_pool) == 0 or len(neg_pool) == 0:
        raise InvalidArgumentError("make_sequence needs nonempty positive and negative pools")

    event_len = int(rng.integers(spec.m_lo, spec.m_hi + 1))
    if spec.event_start == "uniform":
        event_start = int(rng.integers(0, spec.seq_len - event_len + 1))
    else:
        event_start = int(spec.event_start)

    positives = pos_pool.draw(rng, event_len)
    negatives = neg_pool.draw(rng, spec.seq_len - event_len)
    elements = negatives[:event_start] + positives + negatives[event_start:]
    return LabeledSequence(elements, event_start, event_len, seq_id)


def count_false_positives(event_len: int, risk_level: int) -> int:
    """Number of mislabeled risk positives when N elements follow an event of length M."""
    if event_len < 0 or risk_level < 1:
        raise InvalidArgumentError(f"need M >= 0 and N >= 1, got M={event_len}, N={risk_level}")
    return max(0, risk_level - event_len)


def apply_risk_labels(seq: LabeledSequence, risk_level: int, strict: bool = True) -> list[TrainingSample]:
    """
    Labels the N elements starting at the sparse label as positive.

    Args:
        seq (LabeledSequence): The sequence.
        risk_level (int): N >= 1.
        strict (bool): Raise when l + N exceeds the sequence; otherwise clip.

    Returns:
        list[TrainingSample]: Risk positives in sequence order.
    """
    if risk_level < 1:
        raise InvalidArgumentError(f"risk_level must be >= 1, got {risk_level}")
    end = seq.event_start + risk_level
    if end > len(seq):
        if strict:
            raise InvalidArgumentError(
                f"risk level {risk_level} from label {seq.event_start} exceeds sequence length {len(seq)}"
            )
        logger.warning(
            f"Clipped {end - len(seq)} risk positives of sequence {seq.seq_id} at length {len(seq)}"
        )
        end = len(seq)

    return [
        TrainingSample(
            element=seq.elements[index],
            assigned_label=1,
            true_label=seq.true_label(index),
            source=SampleSource.RISK_POSITIVE,
            seq_id=seq.seq_id,
            index_in_seq=index,
        )
        for index in range(seq.event_start, end)
    ]


def eligible_negative_indices(seq: LabeledSequence, rules: NegativeRules) -> np.ndarray:
    """Indices before the label (if allowed) and at or beyond l + P."""
    pre = np.arange(seq.event_start) if rules.allow_pre_label else np.arange(0)
    far = np.arange(seq.event_start + rules.far_gap, len(seq))
    return np.concatenate([pre, far]).astype(np.int64)


def sample_negatives(
    rng: np.random.Generator, seq: LabeledSequence, rules: NegativeRules, count: int
) -> list[TrainingSample]:
    """
    Samples negatives from the eligible regions of a labeled sequence.

    Indices are drawn without replacement while enough are eligible, with replacement
    otherwise.
    """
    if count < 0:
        raise InvalidArgumentError(f"count must be >= 0, got {count}")
    eligible = eligible_negative_indices(seq, rules)
    if eligible.size == 0:
        raise InvalidArgumentError(
            f"no eligible negative indices in sequence {seq.seq_id} "
            f"(label {seq.event_start}, far gap {rules.far_gap}, length {len(seq)})"
        )
    chosen = rng.choice(eligible, size=count, replace=count > eligible.size)
    samples = []
    for index in chosen:
        index = int(index)
        source = (
            SampleSource.PRE_LABEL_NEGATIVE if index < seq.event_start else SampleSource.FAR_NEGATIVE
        )
        samples.append(
            TrainingSample(
                element=seq.elements[index],
                assigned_label=0,
                true_label=seq.true_label(index),
                source=source,
                seq_id=seq.seq_id,
                index_in_seq=index,
            )
        )
    return samples


def sample_direct_negatives(rng: np.random.Generator, neg_pool: ElementPool, count: int) -> list[TrainingSample]:
    """Negatives taken straight from the negative pool, without replacement when possible."""
    if len(neg_pool) == 0:
        raise InvalidArgumentError("cannot sample direct negatives from an empty pool")
    indices = rng.choice(len(neg_pool), size=count, replace=count > len(neg_pool))
    return [
        TrainingSample(neg_pool.element(int(i)), 0, 0, SampleSource.DIRECT_NEGATIVE)
        for i in indices
    ]


def rescale_min_max(images: np.ndarray) -> np.ndarray:
    """
    Rescales every image to [0, 1] with its own minimum and maximum.

    Constant images map to all zeros.
    """
    images = np.asarray(images, dtype=np.float64)
    axes = tuple(range(1, images.ndim))
    lo = images.min(axis=axes, keepdims=True)
    span = images.max(axis=axes, keepdims=True) - lo
    safe_span = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (images - lo) / safe_span, 0.0)


def add_gaussian_noise(rng: np.random.Generator, images: np.ndarray, mean: float, stddev: float) -> np.ndarray:
    """Adds i.i.d. Gaussian noise to every pixel."""
    if stddev < 0:
        raise InvalidArgumentError(f"stddev must be >= 0, got {stddev}")
    images = np.asarray(images, dtype=np.float64)
    if stddev == 0:
        return images + mean
    return images + rng.normal(mean, stddev, size=images.shape)


def balanced_epoch_indices(rng: np.random.Generator, labels: np.ndarray) -> np.ndarray:
    """
    Indices for one balanced epoch.

    The majority class is undersampled without replacement to the minority count, then
    everything is shuffled. A single-class label vector is returned shuffled in full.
    """
    labels = np.asarray(labels)
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)
    if positives.size == 0 or negatives.size == 0:
        return rng.permutation(labels.size)
    keep = min(positives.size, negatives.size)
    if positives.size > keep:
        positives = rng.choice(positives, size=keep, replace=False)
    if negatives.size > keep:
        negatives = rng.choice(negatives, size=keep, replace=False)
    return rng.permutation(np.concatenate([positives, negatives]))


@dataclass(frozen=True)
class SyntheticPoolConfig:
    """
    Generative form of the synthetic pools.

    Every image is `noise`-stddev Gaussian pixel noise. Positive images add a 2D Gaussian
    bump of height `amplitude` and width `bump_sigma` centred in the image; negative images
    carry no bump. The blob region is the 3 x 3 window at the centre.

    Attributes:
        size (int): Image height and width.
        pool_size (int): Images per class.
        amplitude (float): Bump height.
        bump_sigma (float): Bump standard deviation in pixels.
        noise (float): Pixel noise standard deviation.
    """

    size: int = 12
    pool_size: int = 500
    amplitude: float = 1.0
    bump_sigma: float = 1.5
    noise: float = 1.0

    def __post_init__(self):
        if self.size < 4:
            raise InvalidArgumentError(f"image size must be >= 4, got {self.size}")
        if self.pool_size < 1:
            raise InvalidArgumentError(f"pool_size must be >= 1, got {self.pool_size}")
        if self.noise < 0 or self.bump_sigma <= 0:
            raise InvalidArgumentError("noise must be >= 0 and bump_sigma > 0")

    def bump(self) -> np.ndarray:
        centre = (self.size - 1) / 2.0
        coords = np.arange(self.size) - centre
        squared = coords[:, None] ** 2 + coords[None, :] ** 2
        return self.amplitude * np.exp(-squared / (2.0 * self.bump_sigma**2))

    def blob_region(self) -> tuple[slice, slice]:
        start = self.size // 2 - 1
        return slice(start, start + 3), slice(start, start + 3)


def make_synthetic_pools(
    rng: np.random.Generator, config: SyntheticPoolConfig, prefix: str = ""
) -> tuple[ElementPool, ElementPool]:
    """
    Draws a positive and a negative pool of raw (not yet rescaled) images.

    Returns:
        tuple[ElementPool, ElementPool]: (positive pool, negative pool).
    """
    shape = (config.pool_size, config.size, config.size)
    pos_images = config.bump()[None, :, :] + rng.normal(0.0, config.noise, size=shape)
    neg_images = rng.normal(0.0, config.noise, size=shape)
    pos_ids = [f"{prefix}pos:{i}" for i in range(config.pool_size)]
    neg_ids = [f"{prefix}neg:{i}" for i in range(config.pool_size)]
    return ElementPool(pos_images, 1, pos_ids), ElementPool(neg_images, 0, neg_ids)


def blob_probe(images: np.ndarray, config: SyntheticPoolConfig) -> np.ndarray:
    """Mean pixel inside the blob region of every image; a fixed linear probe."""
    rows, cols = config.blob_region()
    return np.asarray(images)[:, rows, cols].mean(axis=(1, 2))


@dataclass(frozen=True)
class ImageExperimentConfig:
    """
    Construction of the train/validation/test splits of the image-sequence experiment.

    Attributes:
        risk_level (int): N.
        sequence (SequenceSpec): Sequence layout.
        n_sequences (int): Sequences per split (train and validation each).
        n_direct_negatives (int): Direct negatives per split.
        n_sequence_negatives (int): Negatives sampled inside every sequence (pre-label
            and far region); 0 disables.
        far_gap (int | None): P of the in-sequence negatives; defaults to N + 1.
        allow_pre_label (bool): Whether in-sequence negatives may precede the label.
        noise_mean, noise_std (float): Gaussian noise added before rescaling; 0/0 disables.
        strict (bool): Risk-label clipping policy.
    """

    risk_level: int = 1
    sequence: SequenceSpec = field(default_factory=SequenceSpec)
    n_sequences: int = 50
    n_direct_negatives: int = 50
    n_sequence_negatives: int = 0
    far_gap: int | None = None
    allow_pre_label: bool = True
    noise_mean: float = 0.0
    noise_std: float = 0.0
    strict: bool = True

    def __post_init__(self):
        if self.risk_level < 1:
            raise InvalidArgumentError(f"risk_level must be >= 1, got {self.risk_level}")
        if self.n_sequences < 1 or self.n_direct_negatives < 0:
            raise InvalidArgumentError("need n_sequences >= 1 and n_direct_negatives >= 0")
        if self.n_sequence_negatives < 0:
            raise InvalidArgumentError(f"n_sequence_negatives must be >= 0, got {self.n_sequence_negatives}")
        self.negative_rules()

    def negative_rules(self) -> NegativeRules:
        far_gap = self.risk_level + 1 if self.far_gap is None else self.far_gap
        return NegativeRules(far_gap, self.allow_pre_label, self.risk_level)


@dataclass
class ExperimentPools:
    """Training pools (split into train/validation halves) and held-out test pools."""

    train_pos: ElementPool
    train_neg: ElementPool
    test_pos: ElementPool
    test_neg: ElementPool


def preprocess_pool(rng: np.random.Generator, pool: ElementPool, noise_mean: float, noise_std: float) -> ElementPool:
    """Noise (if any) followed by per-image min-max rescaling."""
    if noise_std > 0 or noise_mean != 0:
        pool = pool.map_images(lambda images: add_gaussian_noise(rng, images, noise_mean, noise_std))
    return pool.map_images(rescale_min_max)


def split_pool(rng: np.random.Generator, pool: ElementPool) -> tuple[ElementPool, ElementPool]:
    """Shuffles a pool and splits it into two equal halves."""
    if len(pool) < 2:
        raise InvalidArgumentError(
            f"pool of class {pool.true_class} has {len(pool)} images, need >= 2 for disjoint splits"
        )
    order = rng.permutation(len(pool))
    half = len(pool) // 2
    return pool.take(order[:half]), pool.take(order[half:2 * half])


def build_training_set(
    rng: np.random.Generator,
    config: ImageExperimentConfig,
    pos_pool: ElementPool,
    neg_pool: ElementPool,
) -> TrainingSet:
    """Sequences, risk labels, in-sequence negatives and direct negatives for one split."""
    training_set = TrainingSet(risk_level=config.risk_level)
    rules = config.negative_rules()
    for seq_id in range(config.n_sequences):
        seq = make_sequence(rng, config.sequence, pos_pool, neg_pool, seq_id)
        training_set.sequences.append(seq)
        samples = apply_risk_labels(seq, config.risk_level, strict=config.strict)
        training_set.clipped += config.risk_level - len(samples)
        training_set.samples.extend(samples)
        if config.n_sequence_negatives:
            training_set.samples.extend(sample_negatives(rng, seq, rules, config.n_sequence_negatives))
    training_set.samples.extend(sample_direct_negatives(rng, neg_pool, config.n_direct_negatives))
    return training_set


def build_image_experiment(
    seed: int, config: ImageExperimentConfig, pools: ExperimentPools, test_seed: int | None = None
) -> ImageExperiment:
    """
    Builds the train, validation and test splits of the image-sequence experiment.

    The training pools are preprocessed, then split into disjoint halves for training and
    validation. Each split gets its own sequences (with their own M draws), risk labels and
    direct negatives. Test elements are every test pool image with its true label. Each
    stage draws from its own substream of `seed`.

    Args:
        seed (int): Dataset seed.
        config (ImageExperimentConfig): Construction parameters.
        pools (ExperimentPools): Raw pools.
        test_seed (int | None): Seed of the test-pool noise; defaults to `seed`. Passing the
            same value for every cell keeps the test split identical across cells.

    Returns:
        ImageExperiment: The three splits.
    """
    if config.sequence.m_hi > 0 and len(pools.train_pos) < 2:
        raise InvalidArgumentError("positive training pool too small for disjoint train/validation splits")
    if len(pools.train_neg) < 2:
        raise InvalidArgumentError("negative training pool too small for disjoint train/validation splits")
    if len(pools.test_pos) + len(pools.test_neg) == 0:
        raise InvalidArgumentError("test pools are empty")

    noise_rng = child_rng(seed, "noise")
    train_pos = preprocess_pool(noise_rng, pools.train_pos, config.noise_mean, config.noise_std)
    train_neg = preprocess_pool(noise_rng, pools.train_neg, config.noise_mean, config.noise_std)
    test_rng = child_rng(seed if test_seed is None else test_seed, "test-noise")
    test_pos = preprocess_pool(test_rng, pools.test_pos, config.noise_mean, config.noise_std)
    test_neg = preprocess_pool(test_rng, pools.test_neg, config.noise_mean, config.noise_std)

    split_rng = child_rng(seed, "split")
    pos_halves = split_pool(split_rng, train_pos)
    neg_halves = split_pool(split_rng, train_neg)

    train = build_training_set(child_rng(seed, "train"), config, pos_halves[0], neg_halves[0])
    val = build_training_set(child_rng(seed, "val"), config, pos_halves[1], neg_halves[1])

    test = HeldOutSet(
        images=np.concatenate([test_pos.images, test_neg.images]),
        labels=np.concatenate([np.ones(len(test_pos), np.int64), np.zeros(len(test_neg), np.int64)]),
        ids=test_pos.ids + test_neg.ids,
    )
    if train.clipped or val.clipped:
        logger.warning(f"Lenient mode clipped {train.clipped + val.clipped} risk positives")
    return ImageExperiment(train, val, test)


def check_split_hygiene(experiment: ImageExperiment):
    """Raises if any test element also appears in the training or validation split."""
    overlap = set(experiment.test.ids) & (experiment.train.element_ids | experiment.val.element_ids)
    if overlap:
        raise InvalidArgumentError(f"{len(overlap)} test elements leak into training data, e.g. {sorted(overlap)[:3]}")


def manifest_rows(experiment: ImageExperiment) -> list[tuple]:
    """Rows of the dataset manifest, header MANIFEST_HEADER."""
    rows = []
    for split_name, split in (("train", experiment.train), ("val", experiment.val)):
        for k, sample in enumerate(split.samples):
            rows.append(
                (
                    f"{split_name}-{k:05d}",
                    split_name,
                    sample.source.value,
                    sample.assigned_label,
                    sample.true_label,
                    sample.seq_id,
                    sample.index_in_seq,
                )
            )
    for k, label in enumerate(experiment.test.labels):
        rows.append((f"test-{k:05d}", "test", "test", int(label), int(label), -1, -1))
    return rows


def write_manifest(path, experiment: ImageExperiment):
    return write_csv(path, MANIFEST_HEADER, manifest_rows(experiment))


def load_idx(path: str | Path) -> np.ndarray:
    """
    Reads an IDX file of unsigned bytes.

    Layout (big-endian): 2 zero bytes, a type byte (0x08 for unsigned bytes), a byte with
    the number of dimensions, one 32-bit size per dimension, then the raw payload. MNIST
    image files use magic 0x00000803 (3 dimensions), label files 0x00000801. Files ending
    in .gz are decompressed transparently.

    Returns:
        np.ndarray: The payload as float64 in [0, 255] with the stored shape.

    Raises:
        DataFormatError: Bad magic, truncated header or payload, or dimension overflow.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as file:
        data = file.read()

    if len(data) < 4:
        raise DataFormatError(f"file has {len(data)} bytes, too short for the magic number", 0, str(path))
    zero_a, zero_b, dtype_code, ndim = data[0], data[1], data[2], data[3]
    magic = struct.unpack(">I", data[:4])[0]
    if zero_a != 0 or zero_b != 0 or dtype_code != IDX_UBYTE or ndim == 0:
        raise DataFormatError(f"bad magic 0x{magic:08x}", 0, str(path))

    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise DataFormatError(f"truncated header, expected {ndim} dimension sizes", len(data), str(path))
    dims = struct.unpack(f">{ndim}I", data[4:header_end])

    expected = 1
    for axis, dim in enumerate(dims):
        expected *= dim
        if expected > len(data):
            raise DataFormatError(
                f"dimension {axis} of size {dim} overflows the file ({len(data)} bytes)",
                4 + 4 * axis,
                str(path),
            )
    if len(data) - header_end < expected:
        raise DataFormatError(
            f"truncated payload: expected {expected} bytes, found {len(data) - header_end}",
            len(data),
            str(path),
        )
    if len(data) - header_end > expected:
        raise DataFormatError(
            f"{len(data) - header_end - expected} trailing bytes after payload", header_end + expected, str(path)
        )
    payload = np.frombuffer(data, dtype=np.uint8, count=expected, offset=header_end)
    return payload.reshape(dims).astype(np.float64)


def write_idx(path: str | Path, array: np.ndarray) -> Path:
    """Writes an unsigned-byte IDX file; the inverse of load_idx()."""
    array = np.asarray(array)
    if array.ndim == 0 or array.ndim > 255:
        raise InvalidArgumentError(f"cannot write an IDX file with {array.ndim} dimensions")
    if array.size and (array.min() < 0 or array.max() > 255 or not np.all(array == np.round(array))):
        raise InvalidArgumentError("IDX unsigned-byte payload must hold integers in [0, 255]")
    path = Path(path)
    header = bytes([0, 0, IDX_UBYTE, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as file:
        file.write(header + array.astype(np.uint8).tobytes())
    return path


MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def find_mnist_file(mnist_dir: str | Path, name: str) -> Path | None:
    base = Path(mnist_dir) / MNIST_FILES[name]
    for candidate in (base, base.with_name(base.name + ".gz")):
        if candidate.exists():
            return candidate
    return None


def mnist_available(mnist_dir: str | Path | None) -> bool:
    return bool(mnist_dir) and all(find_mnist_file(mnist_dir, name) for name in MNIST_FILES)


def load_mnist_pools(mnist_dir: str | Path, pos_digit: int = 1, neg_digit: int = 0) -> ExperimentPools:
    """
    Positive/negative digit pools from the MNIST IDX files, pixels scaled to [0, 1].

    Raises:
        DataFormatError: If a file is missing or malformed, or the label count does not match.
    """
    loaded = {}
    for name in MNIST_FILES:
        path = find_mnist_file(mnist_dir, name)
        if path is None:
            raise DataFormatError(f"missing MNIST file {MNIST_FILES[name]}", path=str(mnist_dir))
        loaded[name] = load_idx(path)

    pools = {}
    for split in ("train", "test"):
        images = loaded[f"{split}_images"] / 255.0
        labels = loaded[f"{split}_labels"].astype(np.int64)
        if images.ndim != 3 or labels.shape != (images.shape[0],):
            raise DataFormatError(f"MNIST {split} images {images.shape} and labels {labels.shape} do not match")
        for digit, true_class in ((pos_digit, 1), (neg_digit, 0)):
            indices = np.flatnonzero(labels == digit)
            ids = [f"mnist-{split}:{i}" for i in indices]
            pools[(split, true_class)] = ElementPool(images[indices], true_class, ids)
            logger.info(f"Loaded {len(indices)} MNIST {split} images of digit {digit}")

    return ExperimentPools(
        train_pos=pools[("train", 1)],
        train_neg=pools[("train", 0)],
        test_pos=pools[("test", 1)],
        test_neg=pools[("test", 0)],
    )
