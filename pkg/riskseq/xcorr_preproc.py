"""
Frame-to-frame normalized cross-correlation matrices of video segments, synthetic videos
with controllable repetitive motion, and segment sampling from long labeled streams.

Repetitive motion shows up in a matrix as a checkerboard of off-diagonal peaks: frames one
period apart look alike. Only the lower triangle (diagonal included) carries information;
the strict upper triangle is always zero.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from riskseq.errors import DataFormatError, InvalidArgumentError
from riskseq.sequence_sampler import NegativeRules
from utils.csv_writer import write_csv

logger = logging.getLogger(__name__)

MATRIX_MAGIC = b"XCM1"
VIDEO_MAGIC = b"RVID"
PERCENTILES = (1.0, 99.0)

VideoKind = Literal["repetitive", "aperiodic"]
SegmentMode = Literal["weak", "strong", "test"]


@dataclass(frozen=True)
class VideoSegment:
    """
    Grayscale frames [F, H, W] sampled at `fps`.

    The duration is F / fps seconds.
    """

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise InvalidArgumentError(f"frames must be F x H x W with F >= 1, got shape {frames.shape}")
        if not self.fps > 0:
            raise InvalidArgumentError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps


@dataclass(frozen=True)
class XCorrMatrix:
    """
    Attributes:
        values (np.ndarray): F x F matrix, strict upper triangle zero.
        normalized (bool): Whether percentile normalization was applied.
        degenerate (bool): Normalization found p1 == p99 and emitted a constant 0.5.
    """

    values: np.ndarray
    normalized: bool = False
    degenerate: bool = False

    @property
    def size(self) -> int:
        return self.values.shape[0]


def _centered(frame: np.ndarray) -> tuple[np.ndarray, float]:
    flat = np.asarray(frame, dtype=np.float64).reshape(-1)
    if np.ptp(flat) == 0:
        return np.zeros_like(flat), 0.0
    centered = flat - flat.mean()
    return centered, float(np.sqrt(centered @ centered))


def ncc(frame_a: np.ndarray, frame_b: np.ndarray) -> float:
    """
    Global normalized cross-correlation of two frames.

    Both frames are mean-centred and divided by their Euclidean norms before the dot
    product. A constant frame correlates 0 with anything.
    """
    if np.shape(frame_a) != np.shape(frame_b):
        raise InvalidArgumentError(f"frame shapes differ: {np.shape(frame_a)} vs {np.shape(frame_b)}")
    a, norm_a = _centered(frame_a)
    b, norm_b = _centered(frame_b)
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    if np.array_equal(a, b):
        return 1.0
    return float(np.clip((a @ b) / (norm_a * norm_b), -1.0, 1.0))


def xcorr_matrix(segment: VideoSegment, expected_frames: int | None = None, strict: bool = False) -> XCorrMatrix:
    """
    Lower-triangular matrix of ncc(frame_i, frame_j) for j <= i.

    Args:
        segment (VideoSegment): The frames.
        expected_frames (int | None): Frame count the downstream model expects.
        strict (bool): Raise when the segment does not have expected_frames frames.

    Returns:
        XCorrMatrix: Unnormalized matrix; diagonal 1 for nonconstant frames.
    """
    frames = segment.frames
    count = frames.shape[0]
    if count < 2:
        raise InvalidArgumentError(f"need at least 2 frames, got {count}")
    if strict and expected_frames is not None and count != expected_frames:
        raise InvalidArgumentError(f"segment has {count} frames, expected {expected_frames}")

    flat = frames.reshape(count, -1)
    nonconstant = np.ptp(flat, axis=1) > 0
    centered = flat - flat.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", centered, centered))
    unit = np.zeros_like(centered)
    unit[nonconstant] = centered[nonconstant] / norms[nonconstant, None]

    values = np.clip(unit @ unit.T, -1.0, 1.0)
    # bit-identical nonconstant frames correlate exactly 1, the diagonal included
    _, group = np.unique(flat, axis=0, return_inverse=True)
    group = group.reshape(-1)
    same = (group[:, None] == group[None, :]) & nonconstant[:, None]
    values[same] = 1.0
    values[np.diag_indices(count)] = nonconstant.astype(np.float64)
    return XCorrMatrix(np.tril(values))


def normalize_percentile(matrix: XCorrMatrix) -> XCorrMatrix:
    """
    Maps the 1st..99th percentile range of the lower triangle linearly onto [0, 1].

    Percentiles use linear interpolation between order statistics and are computed over
    the lower triangle only; values outside the range are clamped and the upper triangle
    stays zero. When p1 == p99 the lower triangle becomes 0.5 and the result is flagged
    degenerate.
    """
    if matrix.normalized:
        raise InvalidArgumentError("matrix is already normalized")
    values = matrix.values
    lower = np.tril_indices(values.shape[0])
    p_lo, p_hi = np.percentile(values[lower], PERCENTILES, method="linear")
    if not p_hi > p_lo:
        out = np.tril(np.full(values.shape, 0.5))
        return XCorrMatrix(out, normalized=True, degenerate=True)
    out = np.clip((values - p_lo) / (p_hi - p_lo), 0.0, 1.0)
    return XCorrMatrix(np.tril(out), normalized=True)


def segment_matrices(segments: Sequence[VideoSegment], expected_frames: int | None = None,
                     strict: bool = False) -> np.ndarray:
    """Normalized matrices of many segments, stacked [n, F, F] in input order."""
    if not segments:
        return np.zeros((0, 0, 0))
    return np.stack(
        [normalize_percentile(xcorr_matrix(s, expected_frames, strict)).values for s in segments]
    )


@dataclass(frozen=True)
class VideoConfig:
    """
    Rendering of synthetic videos: a Gaussian blob over a flat background plus pixel noise.

    Attributes:
        height, width (int): Frame size.
        fps (float): Frames per second.
        seconds (float): Segment duration; F = round(fps * seconds).
        blob_sigma (float): Blob width in pixels.
        background (float): Background intensity.
        amplitude (float): Blob peak above background.
        noise (float): Pixel noise standard deviation.
        radius (float): Orbit radius of repetitive motion, as a fraction of min(H, W).
        travel (float): Total drift of aperiodic motion, as a fraction of min(H, W).
    """

    height: int = 12
    width: int = 12
    fps: float = 6.0
    seconds: float = 4.0
    blob_sigma: float = 1.5
    background: float = 0.2
    amplitude: float = 0.7
    noise: float = 0.05
    radius: float = 0.25
    travel: float = 0.6

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise InvalidArgumentError("frames must be at least 2 x 2")
        if not self.fps > 0 or not self.seconds > 0:
            raise InvalidArgumentError("fps and seconds must be positive")
        if self.noise < 0 or not self.blob_sigma > 0:
            raise InvalidArgumentError("need noise >= 0 and blob_sigma > 0")

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.seconds))


def _render(centres: np.ndarray, config: VideoConfig, rng: np.random.Generator) -> np.ndarray:
    rows = np.arange(config.height)[None, :, None]
    cols = np.arange(config.width)[None, None, :]
    dist2 = (rows - centres[:, 0, None, None]) ** 2 + (cols - centres[:, 1, None, None]) ** 2
    frames = config.background + config.amplitude * np.exp(-dist2 / (2.0 * config.blob_sigma**2))
    if config.noise > 0:
        frames = frames + rng.normal(0.0, config.noise, size=frames.shape)
    return np.clip(frames, 0.0, 1.0)


def _repetitive_centres(rng: np.random.Generator, period: int, count: int, config: VideoConfig,
                        phase0: float | None = None) -> np.ndarray:
    span = min(config.height, config.width)
    radius = config.radius * span
    middle = np.array([(config.height - 1) / 2.0, (config.width - 1) / 2.0])
    base = middle + rng.uniform(-0.1, 0.1, size=2) * span
    if phase0 is None:
        phase0 = rng.uniform(0.0, 2.0 * np.pi)
    # t % period keeps frames one period apart bit-identical
    phase = phase0 + 2.0 * np.pi * (np.arange(count) % period) / period
    return base + radius * np.stack([np.cos(phase), np.sin(phase)], axis=1)


def _aperiodic_centres(rng: np.random.Generator, count: int, config: VideoConfig) -> np.ndarray:
    span = min(config.height, config.width)
    travel = config.travel * span
    angle = rng.uniform(0.0, 2.0 * np.pi)
    direction = np.array([np.cos(angle), np.sin(angle)])
    steps = rng.uniform(0.5, 1.5, size=count) * travel / count
    distance = np.concatenate(([0.0], np.cumsum(steps)[:-1]))
    middle = np.array([(config.height - 1) / 2.0, (config.width - 1) / 2.0])
    start = middle - direction * distance[-1] / 2.0
    return start + distance[:, None] * direction


def make_synthetic_video(
    rng: np.random.Generator, kind: VideoKind, period: int, config: VideoConfig, n_frames: int | None = None
) -> VideoSegment:
    """
    Renders one synthetic segment.

    Args:
        rng (np.random.Generator): Random source.
        kind (str): "repetitive": the blob circles with the given period, so frames
            `period` apart coincide exactly before noise. "aperiodic": the blob drifts
            monotonically along a random direction and never returns.
        period (int): Period in frames, >= 2 for repetitive videos (ignored otherwise).
        config (VideoConfig): Rendering parameters.
        n_frames (int | None): Overrides config.n_frames.

    Returns:
        VideoSegment: Frames in [0, 1].
    """
    count = config.n_frames if n_frames is None else n_frames
    if count < 1:
        raise InvalidArgumentError(f"need at least one frame, got {count}")
    if kind == "repetitive":
        if period < 2:
            raise InvalidArgumentError(f"period must be >= 2 frames, got {period}")
        centres = _repetitive_centres(rng, period, count, config)
    elif kind == "aperiodic":
        centres = _aperiodic_centres(rng, count, config)
    else:
        raise InvalidArgumentError(f"unknown video kind {kind!r}")
    return VideoSegment(_render(centres, config, rng), config.fps)


@dataclass(frozen=True)
class StreamConfig:
    """
    Layout of a long synthetic stream with repetitive events aligned to segments.

    Attributes:
        video (VideoConfig): Rendering; video.seconds is the segment length.
        n_events (int): Number of repetitive events.
        event_segments (tuple[int, int]): Event length range in segments, inclusive.
        period_range (tuple[int, int]): Motion period range in frames, inclusive.
        gap_segments (int): Aperiodic segments between consecutive events (and at both ends).
        gap_jitter (int): Extra random gap, up to this many segments.
    """

    video: VideoConfig = field(default_factory=VideoConfig)
    n_events: int = 8
    event_segments: tuple[int, int] = (1, 4)
    period_range: tuple[int, int] = (4, 8)
    gap_segments: int = 8
    gap_jitter: int = 2

    def __post_init__(self):
        lo, hi = self.event_segments
        if self.n_events < 1 or not 1 <= lo <= hi:
            raise InvalidArgumentError("need n_events >= 1 and 1 <= event length range")
        if not 2 <= self.period_range[0] <= self.period_range[1]:
            raise InvalidArgumentError("periods must be >= 2 frames")
        if self.gap_segments < 1 or self.gap_jitter < 0:
            raise InvalidArgumentError("need gap_segments >= 1 and gap_jitter >= 0")


@dataclass(frozen=True)
class StreamEvent:
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class SyntheticStream:
    frames: np.ndarray
    fps: float
    seg_seconds: float
    events: list[StreamEvent]

    @property
    def duration(self) -> float:
        return self.frames.shape[0] / self.fps


def make_synthetic_stream(rng: np.random.Generator, config: StreamConfig) -> SyntheticStream:
    """
    Renders a stream of aperiodic background segments with repetitive events inserted on
    the segment grid. Each event keeps one period and phase across its segments.
    """
    video = config.video
    seg_frames = video.n_frames
    layout = []  # (kind, n_segments)
    events = []
    cursor = 0
    for _ in range(config.n_events):
        gap = config.gap_segments + int(rng.integers(0, config.gap_jitter + 1))
        layout.extend([("aperiodic", 1)] * gap)
        cursor += gap
        length = int(rng.integers(config.event_segments[0], config.event_segments[1] + 1))
        layout.append(("repetitive", length))
        events.append(StreamEvent(cursor * seg_frames / video.fps, length * seg_frames / video.fps))
        cursor += length
    layout.extend([("aperiodic", 1)] * config.gap_segments)

    chunks = []
    for kind, n_segments in layout:
        period = int(rng.integers(config.period_range[0], config.period_range[1] + 1))
        segment = make_synthetic_video(rng, kind, period, video, n_frames=n_segments * seg_frames)
        chunks.append(segment.frames)
    frames = np.concatenate(chunks)
    logger.info(f"Rendered a {frames.shape[0] / video.fps:.0f} s stream with {len(events)} events")
    return SyntheticStream(frames, video.fps, seg_frames / video.fps, events)


@dataclass
class StreamSegment:
    """
    A segment cut from a stream, with its training label.

    Attributes:
        segment (VideoSegment): The frames.
        start_frame (int): First frame in the stream.
        assigned_label (int): Label used for training (or ground truth in test/strong mode).
        true_label (int): Ground truth from the events, -1 when no events were given.
        source (str): "risk_positive", "far_negative", "strong_positive",
            "strong_negative" or "test".
        label_id (int): Index of the weak label a risk positive follows, else -1.
    """

    segment: VideoSegment
    start_frame: int
    assigned_label: int
    true_label: int
    source: str
    label_id: int = -1

    @property
    def start_time(self) -> float:
        return self.start_frame / self.segment.fps

    @property
    def mislabeled(self) -> bool:
        return self.true_label >= 0 and self.assigned_label != self.true_label


def _true_label(start: int, seg_frames: int, fps: float, events: Sequence[StreamEvent] | None) -> int:
    if events is None:
        return -1
    covered = 0
    for event in events:
        lo = max(start, math.floor(event.start * fps + 1e-9))
        hi = min(start + seg_frames, math.floor(event.end * fps + 1e-9))
        covered += max(0, hi - lo)
    return int(2 * covered >= seg_frames)


def segment_stream(
    frames: np.ndarray,
    fps: float,
    seg_seconds: float,
    weak_labels: Sequence[float],
    risk_level: int,
    far_gap_seconds: float,
    rng: np.random.Generator,
    mode: SegmentMode = "weak",
    events: Sequence[StreamEvent] | None = None,
    n_negatives: int | None = None,
    strict: bool = True,
) -> list[StreamSegment]:
    """
    Cuts labeled, non-overlapping segments out of a long stream.

    Modes:
        weak: for every label time t the N segments starting at floor(t * fps) are
            positives; negatives are grid segments lying at least far_gap_seconds away
            from every label.
        strong: grid segments covering an event are positives, the other grid segments
            negatives (needs `events`).
        test: consecutive grid segments spanning the whole stream, labeled by `events`.

    A segment is truly positive when at least half of its frames lie inside an event.

    Args:
        frames (np.ndarray): Stream frames [T, H, W].
        fps (float): Frame rate.
        seg_seconds (float): Segment length in seconds.
        weak_labels (Sequence[float]): Event start times in seconds (weak mode).
        risk_level (int): N, segments labeled positive per weak label.
        far_gap_seconds (float): Minimum distance of weak negatives from every label.
        rng (np.random.Generator): Selects negatives when n_negatives is set.
        mode (str): "weak", "strong" or "test".
        events (Sequence[StreamEvent] | None): Ground truth, when known.
        n_negatives (int | None): Negatives to keep (without replacement); all when None.
        strict (bool): Raise when risk positives run past the stream end; clip otherwise.

    Returns:
        list[StreamSegment]: Segments ordered by start frame.

    Raises:
        InvalidArgumentError: Stream shorter than one segment, or no eligible negatives.
    """
    frames = np.asarray(frames, dtype=np.float64)
    seg_frames = int(round(seg_seconds * fps))
    if seg_frames < 2:
        raise InvalidArgumentError(f"segments of {seg_seconds} s at {fps} fps have fewer than 2 frames")
    total = frames.shape[0]
    if total < seg_frames:
        raise InvalidArgumentError(f"stream of {total} frames is shorter than one segment ({seg_frames})")

    grid = range(0, total - seg_frames + 1, seg_frames)

    def cut(start: int, assigned: int, source: str, label_id: int = -1) -> StreamSegment:
        segment = VideoSegment(frames[start:start + seg_frames], fps)
        truth = _true_label(start, seg_frames, fps, events)
        return StreamSegment(segment, start, assigned, truth, source, label_id)

    if mode == "test":
        return [cut(start, _true_label(start, seg_frames, fps, events), "test") for start in grid]

    if mode == "strong":
        if events is None:
            raise InvalidArgumentError("strong mode needs ground-truth events")
        positives = [cut(s, 1, "strong_positive") for s in grid if _true_label(s, seg_frames, fps, events) == 1]
        negative_starts = [s for s in grid if _true_label(s, seg_frames, fps, events) == 0]
        negatives = [cut(s, 0, "strong_negative") for s in _pick(rng, negative_starts, n_negatives)]
        return sorted(positives + negatives, key=lambda s: (s.start_frame, -s.assigned_label))

    if mode != "weak":
        raise InvalidArgumentError(f"unknown segment mode {mode!r}")
    if risk_level < 1:
        raise InvalidArgumentError(f"risk_level must be >= 1, got {risk_level}")
    if far_gap_seconds <= 0:
        raise InvalidArgumentError(f"far_gap_seconds must be > 0, got {far_gap_seconds}")
    # far gap in whole segments; must exceed the N risk positives of each label
    NegativeRules(math.ceil(far_gap_seconds * fps / seg_frames), allow_pre_label=False, risk_level=risk_level)

    positives = []
    for label_id, time in enumerate(weak_labels):
        first = math.floor(time * fps)
        for k in range(risk_level):
            start = first + k * seg_frames
            if start + seg_frames > total:
                if strict:
                    raise InvalidArgumentError(f"risk positive {k} of label at {time} s runs past the stream end")
                logger.warning(f"Clipped {risk_level - k} risk positives of label at {time} s")
                break
            positives.append(cut(start, 1, "risk_positive", label_id))

    label_frames = [t * fps for t in weak_labels]
    gap_frames = far_gap_seconds * fps
    eligible = [
        s for s in grid
        if all(s + seg_frames <= t - gap_frames or s >= t + gap_frames for t in label_frames)
    ]
    if not eligible:
        raise InvalidArgumentError(f"no segment lies {far_gap_seconds} s away from every weak label")
    negatives = [cut(s, 0, "far_negative") for s in _pick(rng, eligible, n_negatives)]
    return sorted(positives + negatives, key=lambda s: (s.start_frame, -s.assigned_label))


def _pick(rng: np.random.Generator, starts: list[int], count: int | None) -> list[int]:
    if count is None or count >= len(starts):
        return list(starts)
    chosen = rng.choice(len(starts), size=count, replace=False)
    return [starts[i] for i in np.sort(chosen)]


def diagonal_band_stats(saliency: np.ndarray, band: int) -> dict[str, float]:
    """
    Where saliency mass sits in a matrix-shaped input.

    Returns:
        dict[str, float]: near_diagonal_ratio (mean |s| within `band` of the diagonal over
            mean |s| of the whole lower triangle) and upper_triangle_mean (mean |s| above
            the diagonal).
    """
    magnitude = np.abs(np.asarray(saliency, dtype=np.float64))
    size = magnitude.shape[0]
    if magnitude.shape != (size, size):
        raise InvalidArgumentError(f"saliency must be square, got {magnitude.shape}")
    rows, cols = np.indices(magnitude.shape)
    lower = rows >= cols
    near = lower & (rows - cols <= band)
    lower_mean = float(magnitude[lower].mean())
    upper = rows < cols
    ratio = float(magnitude[near].mean()) / lower_mean if lower_mean > 0 else 0.0
    return {
        "near_diagonal_ratio": ratio,
        "upper_triangle_mean": float(magnitude[upper].mean()) if upper.any() else 0.0,
    }


def write_matrix(path: str | Path, matrix: XCorrMatrix | np.ndarray) -> Path:
    """Flat binary: b"XCM1", uint32 LE size F, then F x F float64 LE values, row-major."""
    values = matrix.values if isinstance(matrix, XCorrMatrix) else np.asarray(matrix, dtype=np.float64)
    size = values.shape[0]
    if values.shape != (size, size):
        raise InvalidArgumentError(f"matrix must be square, got {values.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MATRIX_MAGIC + struct.pack("<I", size) + np.ascontiguousarray(values, dtype="<f8").tobytes())
    return path


def read_matrix(path: str | Path, normalized: bool = True) -> XCorrMatrix:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MATRIX_MAGIC:
        raise DataFormatError("bad matrix magic", 0, str(path))
    if len(data) < 8:
        raise DataFormatError("truncated matrix header", len(data), str(path))
    (size,) = struct.unpack_from("<I", data, 4)
    expected = 8 + 8 * size * size
    if len(data) != expected:
        raise DataFormatError(f"expected {expected} bytes for a {size} x {size} matrix, found {len(data)}",
                              min(len(data), expected), str(path))
    values = np.frombuffer(data, dtype="<f8", offset=8).astype(np.float64).reshape(size, size)
    return XCorrMatrix(values, normalized=normalized)


def write_matrix_csv(path: str | Path, matrix: XCorrMatrix) -> Path:
    header = [f"c{j}" for j in range(matrix.size)]
    return write_csv(path, header, [list(map(float, row)) for row in matrix.values])


def write_raw_video(path: str | Path, segment: VideoSegment) -> Path:
    """
    Raw 8-bit planes: b"RVID", uint32 LE F, H, W, float64 LE fps, then F*H*W bytes of
    round(255 * clip(v, 0, 1)).
    """
    count, height, width = segment.frames.shape
    planes = np.round(255.0 * np.clip(segment.frames, 0.0, 1.0)).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(VIDEO_MAGIC + struct.pack("<IIId", count, height, width, segment.fps) + planes.tobytes())
    return path


def read_raw_video(path: str | Path) -> VideoSegment:
    """Reads write_raw_video() output; pixels come back as multiples of 1/255."""
    path = Path(path)
    data = path.read_bytes()
    header_size = 4 + struct.calcsize("<IIId")
    if data[:4] != VIDEO_MAGIC:
        raise DataFormatError("bad raw video magic", 0, str(path))
    if len(data) < header_size:
        raise DataFormatError("truncated raw video header", len(data), str(path))
    count, height, width, fps = struct.unpack_from("<IIId", data, 4)
    expected = header_size + count * height * width
    if len(data) != expected:
        raise DataFormatError(f"expected {expected} bytes for {count} frames of {height} x {width}, found {len(data)}",
                              min(len(data), expected), str(path))
    planes = np.frombuffer(data, dtype=np.uint8, offset=header_size).reshape(count, height, width)
    return VideoSegment(planes.astype(np.float64) / 255.0, fps)
