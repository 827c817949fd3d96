"""
Mini-batch training with early stopping, and the two-stage pretrain/fine-tune protocol.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from riskseq.errors import InvalidArgumentError
from riskseq.metrics import ScoredSet, threshold_metrics
from riskseq.sequence_sampler import balanced_epoch_indices
from riskseq.tensor_autonet.network import (
    ConvNetConfig,
    ModelParams,
    backward,
    copy_params,
    forward,
    init_params,
    loss_bce,
    loss_bce_grad_logit,
    predict,
)
from riskseq.tensor_autonet.optimizers import init_optimizer, optimizer_step
from utils.csv_writer import write_csv
from utils.seeding import child_rng

logger = logging.getLogger(__name__)

HISTORY_HEADER = ("epoch", "train_loss", "val_loss", "val_f1", "selected")
FINETUNE_NEGATIVE_RATIO = 10


@dataclass(frozen=True)
class TrainSchedule:
    """
    How a model is trained and which epoch is kept.

    Attributes:
        optimizer (str): "adadelta" or "adam".
        criterion (str): "val_loss_min" keeps the epoch with the lowest validation loss,
            "val_f1_max" the one with the highest validation F1 at threshold 0.5.
        patience (int): Stop after this many epochs without strict improvement.
        max_epochs (int): Hard limit; 0 returns the initial parameters.
        batch_size (int): Mini-batch size.
        learning_rate (float | None): Overrides the optimizer's default.
        pos_weight (float | "auto"): Positive-class loss weight; "auto" uses the training
            negatives/positives ratio.
        balanced (bool): Undersample the majority class every epoch.
    """

    optimizer: Literal["adadelta", "adam"] = "adadelta"
    criterion: Literal["val_loss_min", "val_f1_max"] = "val_loss_min"
    patience: int = 50
    max_epochs: int = 2000
    batch_size: int = 32
    learning_rate: float | None = None
    pos_weight: float | Literal["auto"] = 1.0
    balanced: bool = True

    def __post_init__(self):
        if self.optimizer not in ("adadelta", "adam"):
            raise InvalidArgumentError(f"unknown optimizer {self.optimizer!r}")
        if self.criterion not in ("val_loss_min", "val_f1_max"):
            raise InvalidArgumentError(f"unknown selection criterion {self.criterion!r}")
        if self.patience < 1 or self.max_epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("need patience >= 1, max_epochs >= 0 and batch_size >= 1")
        if self.pos_weight != "auto" and self.pos_weight < 0:
            raise InvalidArgumentError(f"pos_weight must be >= 0 or 'auto', got {self.pos_weight}")


@dataclass
class LabeledArrays:
    """Images [n, H, W] with their training labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.images) != len(self.labels):
            raise InvalidArgumentError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def select(self, indices: np.ndarray) -> "LabeledArrays":
        return LabeledArrays(self.images[indices], self.labels[indices])

    @staticmethod
    def concat(*parts: "LabeledArrays") -> "LabeledArrays":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise InvalidArgumentError("nothing to concatenate")
        return LabeledArrays(
            np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts])
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float
    selected: bool = False

    def row(self) -> tuple:
        return (self.epoch, self.train_loss, self.val_loss, self.val_f1, self.selected)


@dataclass
class TrainResult:
    """
    Attributes:
        params (ModelParams): Parameters of the selected epoch (initial ones if none ran).
        history (list[EpochRecord]): One record per completed epoch, 1-based.
        best_epoch (int): Selected epoch, 0 when no epoch ran.
    """

    params: ModelParams
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


@dataclass
class TwoStageResult:
    params: ModelParams
    pretrain: TrainResult
    finetune: TrainResult | None = None


def resolve_pos_weight(pos_weight: float | str, labels: np.ndarray) -> float:
    if pos_weight != "auto":
        return float(pos_weight)
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0:
        raise InvalidArgumentError("pos_weight 'auto' needs at least one positive training label")
    return (len(labels) - n_pos) / n_pos


def _improved(criterion: str, value: float, best: float) -> bool:
    return value < best if criterion == "val_loss_min" else value > best


def train(
    config: ConvNetConfig,
    train_data: LabeledArrays,
    val_data: LabeledArrays,
    schedule: TrainSchedule,
    rng: np.random.Generator,
    params: ModelParams | None = None,
) -> TrainResult:
    """
    Trains the network and keeps the best epoch under the schedule's criterion.

    Args:
        config (ConvNetConfig): Network shape.
        train_data (LabeledArrays): Training images and (assigned) labels.
        val_data (LabeledArrays): Validation images and labels.
        schedule (TrainSchedule): Optimizer, selection rule and limits.
        rng (np.random.Generator): Epoch ordering (and initialization when params is None).
        params (ModelParams | None): Starting parameters; drawn from rng when omitted.

    Returns:
        TrainResult: Selected parameters and per-epoch history.

    Raises:
        InvalidArgumentError: If either split is empty.
        NumericalError: If a loss, activation or gradient becomes non-finite.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise InvalidArgumentError("training and validation sets must be nonempty")

    params = init_params(config, rng) if params is None else copy_params(params)
    pos_weight = resolve_pos_weight(schedule.pos_weight, train_data.labels)
    state = init_optimizer(schedule.optimizer, params, schedule.learning_rate)

    best = TrainResult(params=copy_params(params))
    best_value = np.inf if schedule.criterion == "val_loss_min" else -np.inf
    history = []
    stale = 0

    for epoch in range(1, schedule.max_epochs + 1):
        if schedule.balanced:
            order = balanced_epoch_indices(rng, train_data.labels)
        else:
            order = rng.permutation(len(train_data))

        loss_sum = 0.0
        for start in range(0, len(order), schedule.batch_size):
            batch = order[start:start + schedule.batch_size]
            labels = train_data.labels[batch]
            prob, cache = forward(params, config, train_data.images[batch])
            loss_sum += loss_bce(prob, labels, pos_weight) * len(batch)
            grads = backward(cache, loss_bce_grad_logit(prob, labels, pos_weight))
            params, state = optimizer_step(state, params, grads)

        val_prob = predict(params, config, val_data.images)
        val_loss = loss_bce(val_prob, val_data.labels)
        _, _, val_f1 = threshold_metrics(ScoredSet(val_prob, val_data.labels), 0.5)
        history.append(EpochRecord(epoch, loss_sum / len(order), val_loss, val_f1))

        value = val_loss if schedule.criterion == "val_loss_min" else val_f1
        if _improved(schedule.criterion, value, best_value):
            best_value = value
            best.params = copy_params(params)
            best.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        logger.debug(f"Epoch {epoch}: train_loss={history[-1].train_loss:.5f} val_loss={val_loss:.5f} val_f1={val_f1:.4f}")
        if stale >= schedule.patience:
            logger.info(f"Stopping after epoch {epoch}: no improvement for {schedule.patience} epochs")
            break

    best.history = [
        EpochRecord(r.epoch, r.train_loss, r.val_loss, r.val_f1, r.epoch == best.best_epoch) for r in history
    ]
    if history:
        logger.info(f"Selected epoch {best.best_epoch} of {len(history)} ({schedule.criterion})")
    return best


def write_history(path, history: list[EpochRecord]):
    """Writes the history CSV, header epoch,train_loss,val_loss,val_f1,selected."""
    return write_csv(path, HISTORY_HEADER, [record.row() for record in history])


def finetune_stage(
    config: ConvNetConfig,
    params: ModelParams,
    strong_train: LabeledArrays,
    weak_set: LabeledArrays,
    val_data: LabeledArrays,
    schedule: TrainSchedule,
    rng: np.random.Generator,
    negative_ratio: int = FINETUNE_NEGATIVE_RATIO,
) -> TrainResult:
    """
    Continues training on strong and weak positives with `negative_ratio` times as many
    negatives, drawn without replacement from the negatives of both sets (all of them when
    fewer are available).
    """
    pooled = LabeledArrays.concat(strong_train, weak_set)
    positives = np.flatnonzero(pooled.labels == 1)
    negatives = np.flatnonzero(pooled.labels == 0)
    wanted = negative_ratio * positives.size
    if negatives.size > wanted:
        negatives = np.sort(rng.choice(negatives, size=wanted, replace=False))
    elif negatives.size < wanted:
        logger.warning(f"Only {negatives.size} negatives available for {wanted} requested in fine-tuning")
    data = pooled.select(np.concatenate([positives, negatives]))
    logger.info(f"Fine-tuning on {positives.size} positives and {negatives.size} negatives")
    return train(config, data, val_data, schedule, rng, params=params)


def pretrain_then_finetune(
    config: ConvNetConfig,
    strong_train: LabeledArrays,
    strong_val: LabeledArrays,
    weak_set: LabeledArrays,
    pretrain_schedule: TrainSchedule,
    finetune_schedule: TrainSchedule,
    seed: int,
) -> TwoStageResult:
    """
    Two-stage training: pretrain on strong labels with balanced epochs, then fine-tune from
    the pretrained model on strong plus weak positives with ten times more negatives.

    The fine-tuning stage is skipped when the weak set is empty; zero fine-tuning epochs
    also return the pretrained parameters unchanged.
    """
    if len(strong_train) == 0:
        raise InvalidArgumentError("the strong training set is empty")

    pretrain_schedule = replace(pretrain_schedule, balanced=True)
    stage1 = train(
        config,
        strong_train,
        strong_val,
        pretrain_schedule,
        child_rng(seed, "pretrain"),
        params=init_params(config, child_rng(seed, "init")),
    )
    if len(weak_set) == 0:
        logger.info("Weak set is empty; skipping fine-tuning")
        return TwoStageResult(stage1.params, stage1)

    stage2 = finetune_stage(
        config, stage1.params, strong_train, weak_set, strong_val, finetune_schedule, child_rng(seed, "finetune")
    )
    return TwoStageResult(stage2.params, stage1, stage2)
