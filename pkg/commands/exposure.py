import logging

from commands.config import ExperimentConfig
from riskseq.exposure_model import ExposureParams, exposure_curve, simulate_exposure, write_exposure_curve
from utils.csv_writer import write_csv
from utils.seeding import substream

SIMULATION_HEADER = ("alpha", "L", "N", "exposure", "mc_mean", "mc_stderr")


def main(args, config: ExperimentConfig):
    """Writes the exposure curve of every (alpha, L) grid point, optionally with Monte-Carlo checks."""
    logger = logging.getLogger("ExposureCommand")
    section = config.exposure
    out_dir = config.out_root() / "exposure"

    rows = exposure_curve(section.grid, section.n_max)
    write_exposure_curve(out_dir / "exposure_curve.csv", rows)
    logger.info(f"Computed {len(rows)} exposure values for {len(section.grid)} grid points")

    if getattr(args, "simulate", False):
        simulated = []
        for index, (alpha, segment_len, risk_level, value) in enumerate(rows):
            rng = substream(config.seed, risk_level, index, "exposure-mc")
            mean, stderr = simulate_exposure(
                rng, ExposureParams(alpha, segment_len), risk_level, section.simulate_trials
            )
            simulated.append((alpha, segment_len, risk_level, value, mean, stderr))
        write_csv(out_dir / "exposure_simulated.csv", SIMULATION_HEADER, simulated)
