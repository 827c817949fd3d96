import hashlib
import json
import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from riskseq.errors import ConfigError
from riskseq.sequence_sampler import ImageExperimentConfig, SequenceSpec, SyntheticPoolConfig
from riskseq.tensor_autonet import ConvNetConfig, TrainSchedule
from riskseq.xcorr_preproc import StreamConfig, VideoConfig

DEFAULT_OUT_DIR = "results"

ExperimentKind = Literal["synthetic_seq", "mnist_1v0", "xcorr_demo"]


class Section(BaseModel):
    """Base of every config section: unknown keys are errors, instances are immutable."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class ExperimentSection(Section):
    kind: ExperimentKind = "synthetic_seq"
    seed: int = Field(default=0, ge=0, lt=2**64)
    risk_levels: list[int] = [1, 2, 3, 4, 5, 6, 7, 8, 9]
    runs: int = Field(default=10, ge=1)
    out_dir: str = ""
    strict: bool = True
    bootstrap_resamples: int = Field(default=2000, ge=1)

    @field_validator("risk_levels")
    @classmethod
    def _sorted_unique(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("at least one risk level is required")
        if any(n < 1 for n in value):
            raise ValueError("risk levels must be >= 1")
        return sorted(set(value))


class SequenceSection(Section):
    seq_len: int = Field(default=10, ge=1)
    m_lo: int = Field(default=0, ge=0)
    m_hi: int = Field(default=10, ge=0)
    event_start: int | Literal["uniform"] = 0
    n_sequences: int = Field(default=50, ge=1)
    n_direct_negatives: int = Field(default=50, ge=0)
    n_sequence_negatives: int = Field(default=0, ge=0)
    far_gap: int | None = Field(default=None, ge=1)
    allow_pre_label: bool = True
    noise_mean: float = 0.0
    noise_std: float = Field(default=0.0, ge=0)


class PoolsSection(Section):
    size: int = Field(default=12, ge=4)
    pool_size: int = Field(default=500, ge=2)
    test_pool_size: int = Field(default=500, ge=1)
    amplitude: float = 1.0
    bump_sigma: float = Field(default=1.5, gt=0)
    noise: float = Field(default=1.0, ge=0)


class MnistSection(Section):
    dir: str = ""
    pos_digit: int = Field(default=1, ge=0, le=9)
    neg_digit: int = Field(default=0, ge=0, le=9)


class NetworkSection(Section):
    block1_filters: int = Field(default=32, ge=1)
    block2_filters: int = Field(default=64, ge=1)


class ScheduleSection(Section):
    optimizer: Literal["adadelta", "adam"] = "adadelta"
    criterion: Literal["val_loss_min", "val_f1_max"] = "val_loss_min"
    patience: int = Field(default=50, ge=1)
    max_epochs: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float | None = Field(default=None, gt=0)
    pos_weight: float | Literal["auto"] = 1.0
    balanced: bool = True

    def to_schedule(self) -> TrainSchedule:
        return TrainSchedule(**self.model_dump())


class FinetuneSection(ScheduleSection):
    optimizer: Literal["adadelta", "adam"] = "adam"
    criterion: Literal["val_loss_min", "val_f1_max"] = "val_f1_max"
    patience: int = Field(default=400, ge=1)
    pos_weight: float | Literal["auto"] = "auto"
    balanced: bool = False


class ExposureSection(Section):
    grid: list[tuple[float, int]] = [(0.1386, 1), (0.1386, 5), (0.0277, 5), (0.0277, 15)]
    n_max: int = Field(default=9, ge=1)
    expected_duration: float = Field(default=5.0, gt=0)
    simulate_trials: int = Field(default=100_000, ge=2)


class XcorrSection(Section):
    height: int = Field(default=12, ge=2)
    width: int = Field(default=12, ge=2)
    fps: float = Field(default=6.0, gt=0)
    seconds: float = Field(default=4.0, gt=0)
    noise: float = Field(default=0.05, ge=0)
    blob_sigma: float = Field(default=1.5, gt=0)
    event_segments: tuple[int, int] = (1, 4)
    period_range: tuple[int, int] = (4, 8)
    gap_segments: int = Field(default=8, ge=1)
    gap_jitter: int = Field(default=2, ge=0)
    strong_events: int = Field(default=8, ge=1)
    weak_events: int = Field(default=16, ge=1)
    val_events: int = Field(default=6, ge=1)
    test_events: int = Field(default=10, ge=1)
    risk_levels: list[int] = [1, 3]
    far_gap_seconds: float = Field(default=16.0, gt=0)
    weak_negatives_per_label: int = Field(default=3, ge=1)
    saliency_band: int = Field(default=3, ge=0)

    def video(self) -> VideoConfig:
        return VideoConfig(
            height=self.height,
            width=self.width,
            fps=self.fps,
            seconds=self.seconds,
            noise=self.noise,
            blob_sigma=self.blob_sigma,
        )

    def stream(self, n_events: int) -> StreamConfig:
        return StreamConfig(
            video=self.video(),
            n_events=n_events,
            event_segments=self.event_segments,
            period_range=self.period_range,
            gap_segments=self.gap_segments,
            gap_jitter=self.gap_jitter,
        )


class ExperimentConfig(Section):
    """The whole experiment configuration, one TOML table per section."""

    experiment: ExperimentSection = ExperimentSection()
    sequence: SequenceSection = SequenceSection()
    pools: PoolsSection = PoolsSection()
    mnist: MnistSection = MnistSection()
    network: NetworkSection = NetworkSection()
    schedule: ScheduleSection = ScheduleSection()
    finetune: FinetuneSection = FinetuneSection()
    exposure: ExposureSection = ExposureSection()
    xcorr: XcorrSection = XcorrSection()

    @model_validator(mode="after")
    def _check_sweep_levels(self) -> "ExperimentConfig":
        if self.experiment.kind != "xcorr_demo" and max(self.experiment.risk_levels) > 9:
            raise ValueError("sweep risk levels must lie in [1, 9]")
        if self.sequence.m_hi > self.sequence.seq_len or self.sequence.m_lo > self.sequence.m_hi:
            raise ValueError("need 0 <= m_lo <= m_hi <= seq_len")
        far_gap = self.sequence.far_gap
        if far_gap is not None and far_gap <= max(self.experiment.risk_levels):
            raise ValueError(f"sequence.far_gap {far_gap} must exceed every risk level")
        return self

    @property
    def seed(self) -> int:
        return self.experiment.seed

    @property
    def kind(self) -> str:
        return self.experiment.kind

    def out_root(self) -> Path:
        return Path(self.experiment.out_dir or os.environ.get("RISKSEQ_OUT_DIR") or DEFAULT_OUT_DIR)

    def sequence_spec(self) -> SequenceSpec:
        s = self.sequence
        return SequenceSpec(seq_len=s.seq_len, m_lo=s.m_lo, m_hi=s.m_hi, event_start=s.event_start)

    def image_experiment(self, risk_level: int) -> ImageExperimentConfig:
        s = self.sequence
        return ImageExperimentConfig(
            risk_level=risk_level,
            sequence=self.sequence_spec(),
            n_sequences=s.n_sequences,
            n_direct_negatives=s.n_direct_negatives,
            n_sequence_negatives=s.n_sequence_negatives,
            far_gap=s.far_gap,
            allow_pre_label=s.allow_pre_label,
            noise_mean=s.noise_mean,
            noise_std=s.noise_std,
            strict=self.experiment.strict,
        )

    def pool_config(self, test: bool = False) -> SyntheticPoolConfig:
        p = self.pools
        return SyntheticPoolConfig(
            size=p.size,
            pool_size=p.test_pool_size if test else p.pool_size,
            amplitude=p.amplitude,
            bump_sigma=p.bump_sigma,
            noise=p.noise,
        )

    def convnet(self, height: int, width: int) -> ConvNetConfig:
        return ConvNetConfig(height, width, self.network.block1_filters, self.network.block2_filters)

    def mnist_dir(self) -> str:
        return self.mnist.dir or os.environ.get("RISKSEQ_MNIST_DIR", "")

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: str | Path | None) -> ExperimentConfig:
    """
    Loads and validates a TOML experiment configuration; defaults when path is None.

    Raises:
        ConfigError: If the file is missing, is not valid TOML, or fails validation.
    """
    logger = logging.getLogger("ConfigLoader")
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        with open(path, "rb") as file:
            raw = tomllib.load(file)
    except FileNotFoundError as e:
        raise ConfigError(f"config file {path} not found") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}") from e
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
    logger.info(f"Loaded {config.kind} config from {path}")
    return config


def apply_overrides(config: ExperimentConfig, seed: int | None = None, out: str | None = None,
                    strict: bool | None = None) -> ExperimentConfig:
    """Returns a copy with command-line values replacing the file's."""
    update = {}
    if seed is not None:
        update["seed"] = seed
    if out is not None:
        update["out_dir"] = out
    if strict is not None:
        update["strict"] = strict
    if not update:
        return config
    try:
        experiment = ExperimentSection.model_validate({**config.experiment.model_dump(), **update})
    except ValidationError as e:
        raise ConfigError(f"invalid command-line override: {e}") from e
    return config.model_copy(update={"experiment": experiment})
