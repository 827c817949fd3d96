import logging

import numpy as np

from commands.config import ExperimentConfig
from commands.runner import ExperimentRunner, report_with_ci
from riskseq.errors import ConfigError, DataFormatError
from riskseq.metrics import ScoredSet
from riskseq.tensor_autonet import load_params, predict
from utils.seeding import substream


def load_test_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    """Test images and labels from a data.npz written by the generate command."""
    try:
        with np.load(path) as data:
            return data["test_images"], data["test_labels"]
    except (OSError, KeyError, ValueError) as e:
        raise DataFormatError(f"cannot read test split: {e}", path=str(path)) from e


def main(args, config: ExperimentConfig):
    """
    Evaluates a checkpoint on a test split and writes report.csv with bootstrap intervals.

    The split comes from --data (a data.npz) or is rebuilt from the config.
    """
    logger = logging.getLogger("EvaluateCommand")
    if not args.checkpoint:
        raise ConfigError("evaluate needs --checkpoint")

    if args.data:
        images, labels = load_test_arrays(args.data)
    else:
        runner = ExperimentRunner(config)
        experiment = runner.build_dataset(args.risk_level or config.experiment.risk_levels[0], args.run)
        images, labels = experiment.test.images, experiment.test.labels

    network = config.convnet(images.shape[1], images.shape[2])
    params = load_params(args.checkpoint, network)
    scored = ScoredSet(predict(params, network, images), labels)
    report = report_with_ci(scored, substream(config.seed, 0, 0, "evaluate"), config.experiment.bootstrap_resamples)

    path = report.write(config.out_root() / config.kind / "evaluate" / "report.csv")
    logger.info(
        f"Evaluated {len(scored)} samples: precision {report.precision:.4f}, recall {report.recall:.4f}, "
        f"AP {report.average_precision:.4f}, AUC {report.auc:.4f} ({path})"
    )
    return report
