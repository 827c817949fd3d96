import argparse
import importlib
import logging
import os
import sys

from dotenv import load_dotenv

from commands.config import apply_overrides, load_config
from riskseq.errors import RiskSeqError

# Subcommands; "xcorr-demo" runs commands/xcorr_demo.py and so on
COMMANDS = {
    "exposure": "Exposure curves of the risk-labeling rule.",
    "generate": "Build the dataset of one (N, run) cell.",
    "train": "Train and evaluate one (N, run) cell.",
    "finetune": "Fine-tune a checkpoint on one cell's training set.",
    "evaluate": "Evaluate a checkpoint on a test split.",
    "sweep": "Run every (N, run) cell and summarize.",
    "xcorr-demo": "Repetitive-motion detection on synthetic video streams.",
    "saliency": "Guided-backpropagation saliency of a checkpoint on one matrix.",
}


def setup_logging():
    """Set up logging configuration for the application."""
    level = os.environ.get("RISKSEQ_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(asctime)s - %(levelname)s - %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Risk-tolerant training with sparse event labels.")
    parser.add_argument("--config", help="TOML experiment configuration; built-in defaults when omitted.")
    parser.add_argument("--seed", type=int, help="Master seed, overrides [experiment] seed.")
    parser.add_argument("--out", help="Output root, overrides [experiment] out_dir.")
    parser.add_argument("--jobs", type=int, default=1, help="Worker processes for sweep.")
    strict = parser.add_mutually_exclusive_group()
    strict.add_argument("--strict", dest="strict", action="store_true", default=None,
                        help="Raise on clipped risk positives and frame-count mismatches.")
    strict.add_argument("--no-strict", dest="strict", action="store_false", help="Clip and warn instead.")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        if name in ("generate", "train", "finetune", "evaluate"):
            sub.add_argument("--risk-level", type=int, help="N; the first configured level when omitted.")
            sub.add_argument("--run", type=int, default=0, help="Run index.")
        if name in ("finetune", "evaluate", "saliency"):
            sub.add_argument("--checkpoint", help="params.bin to start from.")
        if name == "finetune":
            sub.add_argument("--epochs", type=int, help="Maximum fine-tuning epochs.")
        if name == "evaluate":
            sub.add_argument("--data", help="data.npz holding test_images and test_labels.")
        if name == "saliency":
            sub.add_argument("--input", help="Cross-correlation matrix file.")
        if name == "exposure":
            sub.add_argument("--simulate", action="store_true", help="Also write Monte-Carlo estimates.")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Parses arguments, loads the configuration and executes the requested command."""
    # Load environment variables from .env file
    load_dotenv()
    setup_logging()

    args = build_parser().parse_args(argv)
    module_name = f"commands.{args.command.replace('-', '_')}"

    try:
        config = apply_overrides(load_config(args.config), seed=args.seed, out=args.out, strict=args.strict)
        command = importlib.import_module(module_name)
        logging.info(f"Executing command: {args.command} ({config.kind}, seed {config.seed})")
        command.main(args, config)
    except RiskSeqError as e:
        logging.error(f"{args.command} failed: {e}")
        for note in getattr(e, "__notes__", []):
            logging.error(note)
        return e.exit_code
    except Exception as e:
        logging.exception(f"An error occurred while running {args.command}: {e}")
        return 1
    return 0


if __name__ == "__main__":
    # Entry point of the script
    sys.exit(main())
