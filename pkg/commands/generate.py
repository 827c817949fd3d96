import logging

import numpy as np

from commands.config import ExperimentConfig
from commands.runner import ExperimentRunner


def main(args, config: ExperimentConfig):
    """
    Builds the dataset of one (N, run) cell and writes dataset.csv, manifest.json and
    data.npz (train/val/test images with assigned and true labels) to the run directory.
    """
    logger = logging.getLogger("GenerateCommand")
    runner = ExperimentRunner(config)
    risk_level = args.risk_level or config.experiment.risk_levels[0]
    experiment = runner.build_dataset(risk_level, args.run)
    directory = runner.write_dataset(risk_level, args.run, experiment)

    arrays = {}
    for name, split in (("train", experiment.train), ("val", experiment.val)):
        images, assigned, true = split.arrays()
        arrays[f"{name}_images"] = images
        arrays[f"{name}_labels"] = assigned
        arrays[f"{name}_true_labels"] = true
    arrays["test_images"] = experiment.test.images
    arrays["test_labels"] = experiment.test.labels
    np.savez(directory / "data.npz", **arrays)

    logger.info(
        f"Generated N={risk_level}, run={args.run}: {len(experiment.train)} train, {len(experiment.val)} val, "
        f"{len(experiment.test)} test samples, mislabeled fraction {experiment.train.mislabeled_fraction:.3f}"
    )
