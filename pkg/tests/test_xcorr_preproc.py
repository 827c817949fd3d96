import numpy as np
import pytest

from riskseq.errors import DataFormatError, InvalidArgumentError
from riskseq.xcorr_preproc import (
    StreamConfig,
    StreamEvent,
    VideoConfig,
    VideoSegment,
    XCorrMatrix,
    diagonal_band_stats,
    make_synthetic_stream,
    make_synthetic_video,
    ncc,
    normalize_percentile,
    read_matrix,
    read_raw_video,
    segment_matrices,
    segment_stream,
    write_matrix,
    write_raw_video,
    xcorr_matrix,
)

NOISELESS = VideoConfig(noise=0.0)


def test_ncc_edge_cases(rng):
    frame = rng.random((4, 5))
    assert ncc(frame, frame) == 1.0
    assert ncc(frame, 3 * frame + 2) == pytest.approx(1.0)
    assert ncc(frame, -frame) == pytest.approx(-1.0)
    assert ncc(frame, np.full((4, 5), 0.3)) == 0.0
    assert ncc(np.ones((2, 2)), np.ones((2, 2))) == 0.0
    with pytest.raises(InvalidArgumentError):
        ncc(frame, frame.T)


def test_matrix_diagonal_and_upper_triangle(rng):
    video = make_synthetic_video(rng, "aperiodic", 0, VideoConfig())
    matrix = xcorr_matrix(video)
    size = VideoConfig().n_frames
    assert matrix.size == size == 24
    np.testing.assert_array_equal(np.diag(matrix.values), np.ones(size))
    assert not np.triu(matrix.values, k=1).any()
    assert np.all(np.abs(matrix.values) <= 1.0)


def test_matrix_entries_match_ncc(rng):
    video = make_synthetic_video(rng, "repetitive", 5, VideoConfig(), n_frames=10)
    matrix = xcorr_matrix(video)
    for i, j in ((3, 0), (9, 4), (7, 6)):
        assert matrix.values[i, j] == pytest.approx(ncc(video.frames[i], video.frames[j]), abs=1e-12)


def test_repetitive_video_peaks_at_the_period(rng):
    period = 6
    video = make_synthetic_video(rng, "repetitive", period, NOISELESS)
    values = xcorr_matrix(video).values
    for i in range(period, video.n_frames):
        assert values[i, i - period] == 1.0
        assert values[i, i - period // 2] < 0.5


def test_aperiodic_video_decorrelates_with_lag(rng):
    video = make_synthetic_video(rng, "aperiodic", 0, NOISELESS)
    values = xcorr_matrix(video).values
    count = video.n_frames
    near = np.mean([values[i, i - 1] for i in range(1, count)])
    far = np.mean([values[i, i - count // 2] for i in range(count // 2, count)])
    assert near > far


def test_constant_frames_give_zero_rows():
    frames = np.stack([np.full((3, 3), 0.5), np.eye(3), np.eye(3)])
    values = xcorr_matrix(VideoSegment(frames, 2.0)).values
    np.testing.assert_array_equal(values[0], [0.0, 0.0, 0.0])
    assert values[1, 1] == values[2, 2] == values[2, 1] == 1.0
    assert values[2, 0] == 0.0


def test_frame_count_checks():
    with pytest.raises(InvalidArgumentError):
        xcorr_matrix(VideoSegment(np.zeros((1, 3, 3)), 1.0))
    segment = VideoSegment(np.random.default_rng(0).random((5, 3, 3)), 1.0)
    assert xcorr_matrix(segment, expected_frames=4).size == 5
    with pytest.raises(InvalidArgumentError, match="expected 4"):
        xcorr_matrix(segment, expected_frames=4, strict=True)


def test_percentile_normalization(rng):
    video = make_synthetic_video(rng, "repetitive", 4, VideoConfig())
    raw = xcorr_matrix(video)
    normalized = normalize_percentile(raw)
    lower = np.tril_indices(raw.size)
    assert normalized.normalized and not normalized.degenerate
    assert normalized.values[lower].min() == 0.0
    assert normalized.values[lower].max() == 1.0
    assert not np.triu(normalized.values, k=1).any()
    p1, p99 = np.percentile(raw.values[lower], [1, 99])
    inside = (raw.values > p1) & (raw.values < p99) & (np.tri(raw.size) > 0)
    np.testing.assert_allclose(normalized.values[inside], ((raw.values - p1) / (p99 - p1))[inside], rtol=1e-12)
    with pytest.raises(InvalidArgumentError):
        normalize_percentile(normalized)


def test_degenerate_matrix_becomes_one_half():
    normalized = normalize_percentile(XCorrMatrix(np.tril(np.ones((4, 4)))))
    assert normalized.degenerate
    np.testing.assert_array_equal(normalized.values, np.tril(np.full((4, 4), 0.5)))


def test_segment_matrices_stack(rng):
    segments = [make_synthetic_video(rng, kind, 5, VideoConfig()) for kind in ("repetitive", "aperiodic")]
    stacked = segment_matrices(segments)
    assert stacked.shape == (2, 24, 24)
    np.testing.assert_array_equal(stacked[1], normalize_percentile(xcorr_matrix(segments[1])).values)
    assert segment_matrices([]).shape == (0, 0, 0)


def test_synthetic_video_validation(rng):
    with pytest.raises(InvalidArgumentError):
        make_synthetic_video(rng, "repetitive", 1, VideoConfig())
    with pytest.raises(InvalidArgumentError):
        make_synthetic_video(rng, "spiral", 4, VideoConfig())
    video = make_synthetic_video(rng, "aperiodic", 0, VideoConfig(), n_frames=7)
    assert video.frames.shape == (7, 12, 12)
    assert video.frames.min() >= 0.0 and video.frames.max() <= 1.0


def test_synthetic_stream_layout(rng):
    config = StreamConfig(n_events=3, gap_jitter=0)
    stream = make_synthetic_stream(rng, config)
    seg_seconds = config.video.seconds
    assert stream.seg_seconds == seg_seconds
    assert len(stream.events) == 3
    assert stream.events[0].start == pytest.approx(8 * seg_seconds)
    for event, following in zip(stream.events, stream.events[1:]):
        assert following.start - event.end == pytest.approx(8 * seg_seconds)
        assert 1 <= round(event.duration / seg_seconds) <= 4
    assert stream.duration == pytest.approx(stream.events[-1].end + 8 * seg_seconds)


def stripes(count: int) -> np.ndarray:
    """Distinct, nonconstant frames."""
    frames = np.zeros((count, 2, 2))
    frames[:, 0, 0] = np.arange(1, count + 1)
    return frames


def test_weak_mode_counts_and_positions(rng):
    frames = stripes(200)
    segments = segment_stream(frames, 1.0, 4.0, [50.0, 130.0], 3, 20.0, rng)
    positives = [s for s in segments if s.assigned_label == 1]
    assert len(positives) == 3 * 2
    assert [s.start_frame for s in positives if s.label_id == 0] == [50, 54, 58]
    assert all(s.source == "risk_positive" for s in positives)
    negatives = [s for s in segments if s.assigned_label == 0]
    assert negatives and all(s.source == "far_negative" for s in negatives)
    for s in negatives:
        for t in (50, 130):
            assert s.start_frame + 4 <= t - 20 or s.start_frame >= t + 20
    assert [s.start_frame for s in segments] == sorted(s.start_frame for s in segments)
    assert all(s.true_label == -1 and not s.mislabeled for s in segments)


def test_weak_mode_marks_mislabeled_positives(rng):
    events = [StreamEvent(40.0, 8.0)]
    segments = segment_stream(stripes(120), 1.0, 4.0, [40.0], 4, 30.0, rng, events=events)
    positives = [s for s in segments if s.source == "risk_positive"]
    assert [s.true_label for s in positives] == [1, 1, 0, 0]
    assert sum(s.mislabeled for s in positives) == 2


def test_weak_mode_samples_negatives_without_replacement(rng):
    segments = segment_stream(stripes(400), 1.0, 4.0, [200.0], 1, 10.0, rng, n_negatives=5)
    negatives = [s.start_frame for s in segments if s.assigned_label == 0]
    assert len(negatives) == len(set(negatives)) == 5


def test_weak_mode_validation(rng):
    frames = stripes(100)
    with pytest.raises(InvalidArgumentError, match="far gap"):
        segment_stream(frames, 1.0, 4.0, [50.0], 3, 12.0, rng)
    with pytest.raises(InvalidArgumentError, match="no segment"):
        segment_stream(frames, 1.0, 4.0, [50.0], 1, 60.0, rng)
    with pytest.raises(InvalidArgumentError):
        segment_stream(frames, 1.0, 4.0, [50.0], 0, 20.0, rng)
    with pytest.raises(InvalidArgumentError, match="shorter than one segment"):
        segment_stream(stripes(3), 1.0, 4.0, [0.0], 1, 5.0, rng)


def test_risk_positives_past_the_end(rng):
    frames = stripes(100)
    with pytest.raises(InvalidArgumentError, match="past the stream end"):
        segment_stream(frames, 1.0, 4.0, [90.0], 3, 20.0, rng)
    segments = segment_stream(frames, 1.0, 4.0, [90.0], 3, 20.0, rng, strict=False)
    assert [s.start_frame for s in segments if s.assigned_label == 1] == [90, 94]


def test_strong_and_test_modes(rng):
    frames = stripes(40)
    events = [StreamEvent(8.0, 6.0)]
    strong = segment_stream(frames, 1.0, 4.0, [], 1, 5.0, rng, mode="strong", events=events)
    # the segment at 12 holds two of the event's frames, which is half of it
    assert [s.start_frame for s in strong if s.assigned_label == 1] == [8, 12]
    assert len(strong) == 10
    test = segment_stream(frames, 1.0, 4.0, [], 1, 5.0, rng, mode="test", events=events)
    assert [s.start_frame for s in test] == list(range(0, 40, 4))
    assert [s.true_label for s in test] == [0, 0, 1, 1, 0, 0, 0, 0, 0, 0]
    assert all(s.assigned_label == s.true_label for s in test)
    with pytest.raises(InvalidArgumentError):
        segment_stream(frames, 1.0, 4.0, [], 1, 5.0, rng, mode="strong")


def test_diagonal_band_stats():
    saliency = np.zeros((4, 4))
    saliency[np.diag_indices(4)] = 2.0
    saliency[3, 0] = -1.0
    saliency[0, 3] = 4.0
    stats = diagonal_band_stats(saliency, band=0)
    assert stats["near_diagonal_ratio"] == pytest.approx(2.0 / (9.0 / 10.0))
    assert stats["upper_triangle_mean"] == pytest.approx(4.0 / 6.0)
    assert diagonal_band_stats(np.zeros((3, 3)), 1)["near_diagonal_ratio"] == 0.0
    with pytest.raises(InvalidArgumentError):
        diagonal_band_stats(np.zeros((2, 3)), 1)


def test_matrix_file_round_trip_and_errors(tmp_path, rng):
    matrix = normalize_percentile(xcorr_matrix(make_synthetic_video(rng, "repetitive", 4, VideoConfig())))
    path = write_matrix(tmp_path / "m.bin", matrix)
    assert path.stat().st_size == 8 + 8 * 24 * 24
    assert read_matrix(path).values.tobytes() == matrix.values.tobytes()

    data = path.read_bytes()
    path.write_bytes(b"XCM2" + data[4:])
    with pytest.raises(DataFormatError, match="magic"):
        read_matrix(path)
    path.write_bytes(data[:-8])
    with pytest.raises(DataFormatError, match="expected"):
        read_matrix(path)
    with pytest.raises(InvalidArgumentError):
        write_matrix(tmp_path / "bad.bin", np.zeros((2, 3)))


def test_raw_video_round_trip_and_errors(tmp_path, rng):
    video = make_synthetic_video(rng, "aperiodic", 0, VideoConfig(), n_frames=5)
    path = write_raw_video(tmp_path / "v.rvid", video)
    restored = read_raw_video(path)
    assert restored.fps == video.fps
    assert restored.frames.shape == video.frames.shape
    np.testing.assert_allclose(restored.frames, video.frames, atol=0.5 / 255 + 1e-12)

    data = path.read_bytes()
    path.write_bytes(data + b"\x00")
    with pytest.raises(DataFormatError):
        read_raw_video(path)
    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(DataFormatError, match="magic"):
        read_raw_video(path)


def test_checkerboard_over_many_seeds():
    period = 6
    for seed in range(100):
        video = make_synthetic_video(np.random.default_rng(seed), "repetitive", period, VideoConfig())
        values = xcorr_matrix(video).values
        count = video.n_frames
        at_period = np.mean([values[i, i - period] for i in range(period, count)])
        at_half = np.mean([values[i, i - period // 2] for i in range(period // 2, count)])
        assert at_period > at_half, seed


def test_percentiles_match_sorting(rng):
    for _ in range(50):
        values = rng.normal(size=(6, 6))
        lower = np.tril(values)[np.tril_indices(6)]
        ordered = np.sort(lower)
        for q in (1.0, 99.0):
            position = q / 100 * (ordered.size - 1)
            below = int(np.floor(position))
            expected = ordered[below] + (position - below) * (ordered[min(below + 1, ordered.size - 1)] - ordered[below])
            assert np.percentile(lower, q) == pytest.approx(expected, abs=1e-12)
        normalized = normalize_percentile(XCorrMatrix(np.tril(values)))
        lo, hi = np.percentile(lower, [1.0, 99.0])
        i, j = 3, 1
        assert normalized.values[i, j] == pytest.approx(np.clip((values[i, j] - lo) / (hi - lo), 0, 1), abs=1e-12)


def test_full_scale_weak_segmentation(rng):
    assert VideoConfig(fps=15.0, seconds=5.0).n_frames == 75
    frames = stripes(15 * 1300)
    segments = segment_stream(frames, 15.0, 5.0, [650.0], 9, 300.0, rng, n_negatives=6)
    positives = [s for s in segments if s.assigned_label == 1]
    negatives = [s for s in segments if s.assigned_label == 0]
    assert len(positives) == 9 and len(negatives) == 6
    assert all(s.segment.n_frames == 75 for s in segments)
    assert all(s.start_time + 5.0 <= 350.0 or s.start_time >= 950.0 for s in negatives)
