import logging

import numpy as np

from commands.config import ExperimentConfig
from commands.runner import report_with_ci, write_run_manifest
from riskseq.errors import InvalidArgumentError, UndefinedMetricError
from riskseq.metrics import PR_CURVE_HEADER, EvalReport, ScoredSet, pearson, precision_recall_curve
from riskseq.tensor_autonet import (
    ConvNetConfig,
    LabeledArrays,
    ModelParams,
    guided_backprop,
    pretrain_then_finetune,
    predict,
    save_params,
    write_history,
)
from riskseq.xcorr_preproc import (
    StreamSegment,
    SyntheticStream,
    diagonal_band_stats,
    make_synthetic_stream,
    segment_matrices,
    segment_stream,
    write_matrix,
    write_raw_video,
)
from utils.csv_writer import write_csv
from utils.seeding import derive_seed, substream

EVENT_LENGTH_HEADER = ("risk_level", "event_id", "event_len", "recall")
DEMO_HEADER = ("risk_level", "weak_positives", "weak_mislabeled_fraction", "recall", "precision", "f1", "ap", "auc")


class XcorrDemo:
    """
    Repetitive-motion detection on synthetic streams.

    A strongly labeled stream (start and end of every event) pretrains the detector; a
    weakly labeled stream (start times only) supplies N risk positives per label for
    fine-tuning. Every risk level starts from the same pretrained model and is evaluated on
    consecutive segments of a held-out stream.

    Attributes:
        config (ExperimentConfig): Effective configuration.
        logger (logging.Logger): Logger instance.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.section = config.xcorr
        self.video = self.section.video()
        self.logger = logging.getLogger("XcorrDemo")
        self.out_dir = config.out_root() / "xcorr_demo"

    def stream(self, name: str, n_events: int) -> SyntheticStream:
        return make_synthetic_stream(substream(self.config.seed, 0, 0, f"{name}-stream"), self.section.stream(n_events))

    def to_arrays(self, segments: list[StreamSegment]) -> LabeledArrays:
        matrices = segment_matrices(
            [s.segment for s in segments], self.video.n_frames, strict=self.config.experiment.strict
        )
        return LabeledArrays(matrices, np.array([s.assigned_label for s in segments]))

    def cut(self, stream: SyntheticStream, mode: str, name: str, risk_level: int = 1,
            n_negatives: int | None = None) -> list[StreamSegment]:
        return segment_stream(
            stream.frames,
            stream.fps,
            stream.seg_seconds,
            [event.start for event in stream.events],
            risk_level,
            self.section.far_gap_seconds,
            substream(self.config.seed, risk_level, 0, f"{name}-segments"),
            mode=mode,
            events=stream.events,
            n_negatives=n_negatives,
            strict=self.config.experiment.strict,
        )

    def network(self) -> ConvNetConfig:
        frames = self.video.n_frames
        return self.config.convnet(frames, frames)

    def event_recall(self, stream: SyntheticStream, test: list[StreamSegment], scores: np.ndarray) -> list[tuple]:
        """Per test event: length in segments and the fraction of its segments detected."""
        rows = []
        for event_id, event in enumerate(stream.events):
            inside = [
                k for k, s in enumerate(test)
                if s.true_label == 1 and event.start <= s.start_time < event.end
            ]
            if not inside:
                continue
            recall = float(np.mean(scores[inside] >= 0.5))
            rows.append((event_id, len(inside), recall))
        return rows

    def saliency_ratio(self, params: ModelParams, network: ConvNetConfig, arrays: LabeledArrays) -> float:
        positives = np.flatnonzero(arrays.labels == 1)
        ratios = [
            diagonal_band_stats(guided_backprop(params, network, arrays.images[k]), self.section.saliency_band)[
                "near_diagonal_ratio"
            ]
            for k in positives
        ]
        return float(np.mean(ratios)) if ratios else 0.0

    def write_examples(self, test: list[StreamSegment], arrays: LabeledArrays):
        np.savez(self.out_dir / "data.npz", test_images=arrays.images, test_labels=arrays.labels)
        for label, name in ((1, "repetitive"), (0, "aperiodic")):
            matches = np.flatnonzero(arrays.labels == label)
            if matches.size:
                write_matrix(self.out_dir / f"example_{name}.bin", arrays.images[matches[0]])
                write_raw_video(self.out_dir / f"example_{name}.rvid", test[matches[0]].segment)

    def run(self) -> list[EvalReport]:
        network = self.network()
        strong = self.stream("strong", self.section.strong_events)
        weak = self.stream("weak", self.section.weak_events)
        val = self.stream("val", self.section.val_events)
        held_out = self.stream("test", self.section.test_events)

        strong_train = self.to_arrays(self.cut(strong, "strong", "strong"))
        strong_val = self.to_arrays(self.cut(val, "strong", "val"))
        test_segments = self.cut(held_out, "test", "test")
        test = LabeledArrays(
            segment_matrices([s.segment for s in test_segments], self.video.n_frames, self.config.experiment.strict),
            np.array([s.true_label for s in test_segments]),
        )
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.write_examples(test_segments, test)
        self.logger.info(
            f"Strong set {len(strong_train)} segments, validation {len(strong_val)}, test {len(test)}"
        )

        reports = []
        demo_rows = []
        length_rows = []
        n_labels = len(weak.events)
        for risk_level in self.section.risk_levels:
            weak_segments = self.cut(
                weak, "weak", "weak", risk_level, n_negatives=self.section.weak_negatives_per_label * n_labels
            )
            positives = [s for s in weak_segments if s.source == "risk_positive"]
            mislabeled = float(np.mean([s.mislabeled for s in positives])) if positives else 0.0
            self.logger.info(f"N={risk_level}: {len(positives)} weak positives, {mislabeled:.3f} mislabeled")

            result = pretrain_then_finetune(
                network,
                strong_train,
                strong_val,
                self.to_arrays(weak_segments),
                self.config.schedule.to_schedule(),
                self.config.finetune.to_schedule(),
                derive_seed(self.config.seed, 0, 0, "xcorr-train"),
            )
            scores = predict(result.params, network, test.images)
            scored = ScoredSet(scores, test.labels)
            report = report_with_ci(
                scored, substream(self.config.seed, risk_level, 0, "xcorr-bootstrap"), self.config.experiment.bootstrap_resamples
            )

            events = self.event_recall(held_out, test_segments, scores)
            length_rows.extend((risk_level, *row) for row in events)
            try:
                report.extra["pearson_len_recall"] = pearson([e[1] for e in events], [e[2] for e in events])
            except (UndefinedMetricError, InvalidArgumentError) as e:
                self.logger.warning(f"N={risk_level}: no event-length correlation ({e})")
            report.extra["near_diagonal_ratio"] = self.saliency_ratio(result.params, network, test)

            directory = self.out_dir / f"N={risk_level}"
            report.write(directory / "report.csv")
            write_csv(directory / "pr_curve.csv", PR_CURVE_HEADER, precision_recall_curve(scored))
            write_history(directory / "pretrain_history.csv", result.pretrain.history)
            if result.finetune is not None:
                write_history(directory / "history.csv", result.finetune.history)
            save_params(result.params, directory / "params.bin")
            write_run_manifest(
                directory / "manifest.json",
                self.config,
                risk_level=risk_level,
                train_seed=derive_seed(self.config.seed, 0, 0, "xcorr-train"),
                weak_positives=len(positives),
            )
            demo_rows.append(
                (risk_level, len(positives), mislabeled, report.recall, report.precision, report.f1,
                 report.average_precision, report.auc)
            )
            reports.append(report)
            self.logger.info(f"N={risk_level}: AP {report.average_precision:.3f}, AUC {report.auc:.3f}")

        write_csv(self.out_dir / "demo.csv", DEMO_HEADER, demo_rows)
        write_csv(self.out_dir / "event_length.csv", EVENT_LENGTH_HEADER, length_rows)
        return reports


def main(args, config: ExperimentConfig):
    """Runs the cross-correlation demo; artifacts go to <out>/xcorr_demo/."""
    return XcorrDemo(config).run()
