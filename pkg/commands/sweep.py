import logging
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np
from tqdm import tqdm

from commands.config import ExperimentConfig
from commands.runner import SWEEP_HEADER, CellResult, ExperimentRunner, run_cell
from riskseq.exposure_model import ExposureParams, calibrate_alpha, exposure
from riskseq.metrics import ScoredSet, bootstrap_ci, mean_score
from utils.csv_writer import write_csv
from utils.seeding import substream

SUMMARY_HEADER = ("risk_level", "metric", "mean", "ci_lo", "ci_hi", "runs")
SUMMARY_METRICS = ("recall", "precision", "f1", "ap", "auc", "mislabeled_fraction")


class SweepRunner:
    """
    Runs every (N, run) cell of a risk-level sweep, serially or in worker processes, and
    aggregates the results.

    Attributes:
        config (ExperimentConfig): Effective configuration.
        jobs (int): Worker processes; 1 runs in-process.
        logger (logging.Logger): Logger instance.
    """

    def __init__(self, config: ExperimentConfig, jobs: int = 1):
        self.config = config
        self.jobs = max(1, jobs)
        self.logger = logging.getLogger("SweepRunner")

    def cells(self) -> list[tuple[int, int]]:
        return [(n, r) for n in self.config.experiment.risk_levels for r in range(self.config.experiment.runs)]

    def run(self) -> list[CellResult]:
        cells = self.cells()
        self.logger.info(f"Sweeping {len(cells)} cells with {self.jobs} worker(s)")
        results = []
        if self.jobs == 1:
            runner = ExperimentRunner(self.config)
            for risk_level, run in tqdm(cells, desc="sweep", unit="cell"):
                results.append(runner.run_cell(risk_level, run))
        else:
            config_json = self.config.model_dump_json()
            with ProcessPoolExecutor(max_workers=self.jobs) as executor:
                futures = [executor.submit(run_cell, config_json, n, r) for n, r in cells]
                for future in tqdm(as_completed(futures), total=len(futures), desc="sweep", unit="cell"):
                    results.append(future.result())
        return sorted(results, key=lambda cell: (cell.risk_level, cell.run))

    def summarize(self, results: list[CellResult]) -> list[tuple]:
        """
        Per risk level: mean and 95% bootstrap interval over runs of every metric, plus the
        exposure predicted with alpha calibrated from the configured expected event duration.
        """
        alpha = calibrate_alpha(self.config.exposure.expected_duration)
        rows = []
        for risk_level in self.config.experiment.risk_levels:
            cells = [cell for cell in results if cell.risk_level == risk_level]
            if not cells:
                continue
            rng = substream(self.config.seed, risk_level, 0, "summary")
            for metric in SUMMARY_METRICS:
                values = np.array([getattr(cell, metric) for cell in cells])
                scored = ScoredSet(values, np.ones(len(values), dtype=np.int64))
                lo, hi = bootstrap_ci(rng, scored, mean_score, self.config.experiment.bootstrap_resamples)
                rows.append((risk_level, metric, float(values.mean()), lo, hi, len(cells)))
            rows.append((risk_level, "exposure_estimate", exposure(ExposureParams(alpha), risk_level), "", "", len(cells)))
        return rows


def main(args, config: ExperimentConfig):
    """Runs the sweep and writes sweep.csv and summary.csv under <out>/<kind>/."""
    sweep = SweepRunner(config, jobs=getattr(args, "jobs", 1) or 1)
    results = sweep.run()
    kind_dir = config.out_root() / config.kind
    write_csv(kind_dir / "sweep.csv", SWEEP_HEADER, [cell.row() for cell in results])
    write_csv(kind_dir / "summary.csv", SUMMARY_HEADER, sweep.summarize(results))
    return results
