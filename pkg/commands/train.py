import logging

from commands.config import ExperimentConfig
from commands.runner import ExperimentRunner


def main(args, config: ExperimentConfig):
    """Trains and evaluates a single (N, run) cell."""
    logger = logging.getLogger("TrainCommand")
    runner = ExperimentRunner(config)
    risk_level = args.risk_level or config.experiment.risk_levels[0]
    result = runner.run_cell(risk_level, args.run)
    logger.info(f"Run directory: {runner.run_dir(risk_level, args.run)}")
    logger.info(f"Test recall {result.recall:.4f}, precision {result.precision:.4f}, AP {result.ap:.4f}")
