import logging

from commands.config import ExperimentConfig
from riskseq.errors import ConfigError, InvalidArgumentError
from riskseq.tensor_autonet import guided_backprop, load_params
from riskseq.xcorr_preproc import XCorrMatrix, diagonal_band_stats, read_matrix, write_matrix, write_matrix_csv
from utils.csv_writer import write_csv

STATS_HEADER = ("metric", "value")


def main(args, config: ExperimentConfig):
    """
    Guided-backpropagation saliency of a checkpoint on one matrix file.

    Writes saliency.bin (matrix format), saliency.csv and saliency_stats.csv to
    <out>/saliency/.
    """
    logger = logging.getLogger("SaliencyCommand")
    if not args.checkpoint or not args.input:
        raise ConfigError("saliency needs --checkpoint and --input")

    matrix = read_matrix(args.input)
    expected = config.xcorr.video().n_frames
    if matrix.size != expected:
        raise InvalidArgumentError(
            f"{args.input}: {matrix.size}x{matrix.size} matrix, the network expects {expected}x{expected}"
        )
    network = config.convnet(matrix.size, matrix.size)
    params = load_params(args.checkpoint, network)
    saliency = guided_backprop(params, network, matrix.values)

    out_dir = config.out_root() / "saliency"
    write_matrix(out_dir / "saliency.bin", saliency)
    write_matrix_csv(out_dir / "saliency.csv", XCorrMatrix(saliency))
    stats = diagonal_band_stats(saliency, config.xcorr.saliency_band)
    write_csv(out_dir / "saliency_stats.csv", STATS_HEADER, list(stats.items()))
    logger.info(f"Saliency near-diagonal ratio {stats['near_diagonal_ratio']:.3f}")
    return saliency
