import logging
from dataclasses import replace

import numpy as np

from commands.config import ExperimentConfig
from commands.runner import ExperimentRunner, write_run_manifest
from riskseq.errors import ConfigError
from riskseq.tensor_autonet import LabeledArrays, finetune_stage, load_params, save_params, write_history
from utils.seeding import substream


def main(args, config: ExperimentConfig):
    """
    Fine-tunes a checkpoint on the training set of one (N, run) cell with the [finetune]
    schedule (Adam, weighted cross-entropy, ten negatives per positive when available).
    Artifacts go to <run dir>/finetune/.
    """
    logger = logging.getLogger("FinetuneCommand")
    if not args.checkpoint:
        raise ConfigError("finetune needs --checkpoint")

    runner = ExperimentRunner(config)
    risk_level = args.risk_level or config.experiment.risk_levels[0]
    experiment = runner.build_dataset(risk_level, args.run)
    network = runner.network(experiment)
    params = load_params(args.checkpoint, network)

    schedule = config.finetune.to_schedule()
    if args.epochs is not None:
        schedule = replace(schedule, max_epochs=args.epochs)

    train_images, train_labels, _ = experiment.train.arrays()
    val_images, val_labels, _ = experiment.val.arrays()
    empty = LabeledArrays(np.zeros((0,) + train_images.shape[1:]), np.zeros(0))
    result = finetune_stage(
        network,
        params,
        LabeledArrays(train_images, train_labels),
        empty,
        LabeledArrays(val_images, val_labels),
        schedule,
        substream(config.seed, risk_level, args.run, "finetune"),
    )

    directory = runner.run_dir(risk_level, args.run) / "finetune"
    save_params(result.params, directory / "params.bin")
    write_history(directory / "history.csv", result.history)
    report = runner.evaluate_params(
        result.params, network, experiment, substream(config.seed, risk_level, args.run, "finetune-bootstrap")
    )
    report.write(directory / "report.csv")
    write_run_manifest(
        directory / "manifest.json",
        config,
        risk_level=risk_level,
        run=args.run,
        checkpoint=str(args.checkpoint),
        epochs=schedule.max_epochs,
    )
    logger.info(f"Fine-tuned checkpoint written to {directory / 'params.bin'} (best epoch {result.best_epoch})")
