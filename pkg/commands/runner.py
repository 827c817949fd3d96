import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from commands.config import ExperimentConfig
from riskseq.errors import ConfigError, RiskSeqError
from riskseq.metrics import EvalReport, ScoredSet, auc, average_precision, bootstrap_ci, evaluate
from riskseq.sequence_sampler import (
    ExperimentPools,
    ImageExperiment,
    build_image_experiment,
    check_split_hygiene,
    load_mnist_pools,
    make_synthetic_pools,
    mnist_available,
    write_manifest,
)
from riskseq.tensor_autonet import (
    ConvNetConfig,
    LabeledArrays,
    ModelParams,
    TrainResult,
    init_params,
    predict,
    save_params,
    train,
    write_history,
)
from utils.seeding import derive_seed, substream

SWEEP_HEADER = (
    "risk_level",
    "run",
    "data_seed",
    "init_seed",
    "epoch_seed",
    "recall",
    "precision",
    "f1",
    "ap",
    "auc",
    "mislabeled_fraction",
)


@dataclass(frozen=True)
class CellResult:
    """
    One row of the sweep table.

    Data and init seeds depend on the run only, so every risk level of one run sees the
    same sequences and starting weights; the epoch seed also depends on N.
    """

    risk_level: int
    run: int
    data_seed: int
    init_seed: int
    epoch_seed: int
    recall: float
    precision: float
    f1: float
    ap: float
    auc: float
    mislabeled_fraction: float

    def row(self) -> tuple:
        return (
            self.risk_level,
            self.run,
            self.data_seed,
            self.init_seed,
            self.epoch_seed,
            self.recall,
            self.precision,
            self.f1,
            self.ap,
            self.auc,
            self.mislabeled_fraction,
        )


def split_hash(images: np.ndarray, labels: np.ndarray) -> str:
    """SHA-256 over the float64 pixels and int64 labels of a split."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(images, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(labels, dtype="<i8").tobytes())
    return digest.hexdigest()


def write_run_manifest(path: Path, config: ExperimentConfig, **fields) -> Path:
    """manifest.json with the config hash, the given fields and a UTC timestamp."""
    manifest = {
        "kind": config.kind,
        "config_hash": config.config_hash(),
        "master_seed": config.seed,
        **fields,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def report_with_ci(scored: ScoredSet, rng: np.random.Generator, resamples: int, threshold: float = 0.5) -> EvalReport:
    """evaluate() plus 95% bootstrap intervals for AP and AUC."""
    report = evaluate(scored, threshold)
    for name, metric in (("ap", average_precision), ("auc", auc)):
        report.ci[name] = bootstrap_ci(rng, scored, metric, resamples=resamples)
    return report


class ExperimentRunner:
    """
    Builds the data of an image-sequence experiment and runs (N, run) cells.

    Seeds: the dataset and the initial weights of run r depend on (master, r) only, so all
    risk levels of one run share them; the epoch order also depends on N. The test split
    is derived once from the master seed.

    Attributes:
        config (ExperimentConfig): Effective configuration.
        logger (logging.Logger): Logger instance.
    """

    def __init__(self, config: ExperimentConfig):
        if config.kind not in ("synthetic_seq", "mnist_1v0"):
            raise ConfigError(f"experiment kind {config.kind} has no image-sequence cells")
        self.config = config
        self.logger = logging.getLogger("ExperimentRunner")
        self._pools: ExperimentPools | None = None

    @property
    def kind_dir(self) -> Path:
        return self.config.out_root() / self.config.kind

    def run_dir(self, risk_level: int, run: int) -> Path:
        return self.kind_dir / f"N={risk_level}" / f"run={run}"

    def seeds(self, risk_level: int, run: int) -> dict[str, int]:
        master = self.config.seed
        return {
            "data": derive_seed(master, 0, run, "data"),
            "init": derive_seed(master, 0, run, "init"),
            "epochs": derive_seed(master, risk_level, run, "epochs"),
            "test": derive_seed(master, 0, 0, "test"),
        }

    def pools(self) -> ExperimentPools:
        if self._pools is not None:
            return self._pools
        if self.config.kind == "mnist_1v0":
            mnist_dir = self.config.mnist_dir()
            if not mnist_available(mnist_dir):
                raise ConfigError(
                    "mnist_1v0 needs the four MNIST IDX files; set [mnist] dir or RISKSEQ_MNIST_DIR"
                )
            self._pools = load_mnist_pools(mnist_dir, self.config.mnist.pos_digit, self.config.mnist.neg_digit)
        else:
            master = self.config.seed
            train_pos, train_neg = make_synthetic_pools(
                substream(master, 0, 0, "pools"), self.config.pool_config(), prefix="train-"
            )
            test_pos, test_neg = make_synthetic_pools(
                substream(master, 0, 0, "test-pools"), self.config.pool_config(test=True), prefix="test-"
            )
            self._pools = ExperimentPools(train_pos, train_neg, test_pos, test_neg)
        return self._pools

    def build_dataset(self, risk_level: int, run: int) -> ImageExperiment:
        seeds = self.seeds(risk_level, run)
        experiment = build_image_experiment(
            seeds["data"], self.config.image_experiment(risk_level), self.pools(), test_seed=seeds["test"]
        )
        check_split_hygiene(experiment)
        return experiment

    def network(self, experiment: ImageExperiment) -> ConvNetConfig:
        height, width = experiment.test.images.shape[1:]
        return self.config.convnet(height, width)

    def train_cell(self, risk_level: int, run: int, experiment: ImageExperiment) -> TrainResult:
        seeds = self.seeds(risk_level, run)
        network = self.network(experiment)
        train_images, train_labels, _ = experiment.train.arrays()
        val_images, val_labels, _ = experiment.val.arrays()
        return train(
            network,
            LabeledArrays(train_images, train_labels),
            LabeledArrays(val_images, val_labels),
            self.config.schedule.to_schedule(),
            np.random.default_rng(seeds["epochs"]),
            params=init_params(network, np.random.default_rng(seeds["init"])),
        )

    def evaluate_params(self, params: ModelParams, network: ConvNetConfig, experiment: ImageExperiment,
                        rng: np.random.Generator) -> EvalReport:
        scores = predict(params, network, experiment.test.images)
        scored = ScoredSet(scores, experiment.test.labels)
        return report_with_ci(scored, rng, self.config.experiment.bootstrap_resamples)

    def write_dataset(self, risk_level: int, run: int, experiment: ImageExperiment) -> Path:
        directory = self.run_dir(risk_level, run)
        write_manifest(directory / "dataset.csv", experiment)
        seeds = self.seeds(risk_level, run)
        write_run_manifest(
            directory / "manifest.json",
            self.config,
            risk_level=risk_level,
            run=run,
            seeds=seeds,
            test_split_hash=split_hash(experiment.test.images, experiment.test.labels),
        )
        return directory

    def run_cell(self, risk_level: int, run: int) -> CellResult:
        """
        Builds the cell's dataset, trains, evaluates on the test split and writes the run
        directory (manifest.json, dataset.csv, history.csv, params.bin, report.csv).
        """
        self.logger.info(f"Starting cell N={risk_level}, run={run}")
        try:
            experiment = self.build_dataset(risk_level, run)
            result = self.train_cell(risk_level, run, experiment)
            network = self.network(experiment)
            seeds = self.seeds(risk_level, run)
            report = self.evaluate_params(
                result.params, network, experiment, substream(self.config.seed, risk_level, run, "bootstrap")
            )
            report.extra["mislabeled_fraction"] = experiment.train.mislabeled_fraction
            report.extra["best_epoch"] = float(result.best_epoch)

            directory = self.write_dataset(risk_level, run, experiment)
            write_history(directory / "history.csv", result.history)
            save_params(result.params, directory / "params.bin")
            report.write(directory / "report.csv")
        except RiskSeqError as e:
            self.logger.error(f"Cell N={risk_level}, run={run} failed: {e}")
            e.add_note(f"while running cell N={risk_level}, run={run}")
            raise

        self.logger.info(
            f"Finished cell N={risk_level}, run={run}: recall={report.recall:.3f} ap={report.average_precision:.3f}"
        )
        return CellResult(
            risk_level=risk_level,
            run=run,
            data_seed=seeds["data"],
            init_seed=seeds["init"],
            epoch_seed=seeds["epochs"],
            recall=report.recall,
            precision=report.precision,
            f1=report.f1,
            ap=report.average_precision,
            auc=report.auc,
            mislabeled_fraction=experiment.train.mislabeled_fraction,
        )


def run_cell(config_json: str, risk_level: int, run: int) -> CellResult:
    """Process-pool entry point: rebuilds the runner from the serialized config."""
    config = ExperimentConfig.model_validate_json(config_json)
    return ExperimentRunner(config).run_cell(risk_level, run)
