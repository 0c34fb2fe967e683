import numpy as np
import pandas as pd
import pytest

from trackwatch.domain.common import Roi, Track
from trackwatch.preprocess.batch import build_tracks, tracks_to_frame, write_tracks_csv
from trackwatch.preprocess.common import (
    DetectionDue,
    DropReason,
    PreprocessConfig,
    PreprocessConfigError,
    TooFewPointsError,
    TrackClosed,
    TrackExtended,
    TrackOpened,
)
from trackwatch.preprocess.resample import resample
from trackwatch.preprocess.tracker import OperatorState, Preprocessor, flush, ingest_message, validate

HOUR = 3600


def test_validate(cfg, make_message):
    assert validate(make_message(sog=35.0), cfg) is DropReason.OVER_SPEED
    assert validate(make_message(sog=30.1), cfg) is DropReason.OVER_SPEED
    assert validate(make_message(sog=29.9), cfg) is None
    assert validate(make_message(sog=15.0), cfg) is None
    assert validate(make_message(lat=46.5), cfg) is DropReason.OUT_OF_ROI
    assert validate(make_message(timestamp=10), cfg, last_seen=10) is DropReason.DUPLICATE_TIME
    assert validate(make_message(timestamp=5), cfg, last_seen=10) is DropReason.NON_MONOTONE_TIME


def test_config_checks(roi):
    with pytest.raises(PreprocessConfigError):
        PreprocessConfig(roi=roi, gap_threshold_s=0)
    with pytest.raises(PreprocessConfigError):
        PreprocessConfig(roi=roi, resample_period_s=7200, min_track_duration_s=3600)
    assert PreprocessConfig(roi=roi).min_points == 25


def test_gap_just_under_threshold_keeps_one_track(cfg, make_message):
    state = OperatorState()
    ingest_message(state, make_message(timestamp=0), cfg)
    events = ingest_message(state, make_message(timestamp=3 * HOUR + 59 * 60), cfg)
    assert [type(e) for e in events] == [TrackExtended]
    assert len(state.open_tracks[227006760]) == 2


def test_gap_just_over_threshold_splits(cfg, make_message):
    state = OperatorState()
    ingest_message(state, make_message(timestamp=0), cfg)
    events = ingest_message(state, make_message(timestamp=4 * HOUR + 60), cfg)
    assert isinstance(events[0], TrackClosed)
    assert events[0].track.track_id == "227006760-0"
    assert not events[0].tested
    assert isinstance(events[1], TrackOpened)
    assert events[1].track_id == f"227006760-{4 * HOUR + 60}"


def test_five_hour_gap_opens_second_track(cfg, make_message):
    state = OperatorState()
    ingest_message(state, make_message(timestamp=0), cfg)
    events = ingest_message(state, make_message(timestamp=5 * HOUR), cfg)
    assert [type(e) for e in events] == [TrackClosed, TrackOpened]


def test_detection_due_at_minimum_duration(cfg, make_message):
    state = OperatorState()
    assert not any(isinstance(e, DetectionDue) for e in ingest_message(state, make_message(timestamp=0), cfg))
    events = ingest_message(state, make_message(timestamp=cfg.min_track_duration_s, lon=-4.9), cfg)
    due = [e for e in events if isinstance(e, DetectionDue)]
    assert len(due) == 1
    assert due[0].watermark == cfg.min_track_duration_s
    assert due[0].track_id == "227006760-0"
    assert [p.timestamp for p in due[0].track.points] == list(range(0, cfg.min_track_duration_s + 1, 600))


def test_detection_repeats_every_redetect_period(cfg, straight_track):
    state = OperatorState()
    watermarks = []
    for msg in straight_track(duration=7 * HOUR, step=300):
        watermarks += [e.watermark for e in ingest_message(state, msg, cfg) if isinstance(e, DetectionDue)]
    assert watermarks == [4 * HOUR, 5 * HOUR, 6 * HOUR, 7 * HOUR]


def test_resample_midpoint(make_message):
    track = Track(
        mmsi=1,
        points=[
            make_message(mmsi=1, timestamp=0, lat=48.0, lon=-5.0),
            make_message(mmsi=1, timestamp=1200, lat=48.2, lon=-4.8),
        ],
    )
    out = resample(track, 600)
    assert [p.timestamp for p in out.points] == [0, 600, 1200]
    assert out.points[1].lat == pytest.approx(48.1, abs=1e-12)
    assert out.points[1].lon == pytest.approx(-4.9, abs=1e-12)


def test_resample_cog_takes_short_arc(make_message):
    track = Track(
        mmsi=1,
        points=[make_message(mmsi=1, timestamp=0, cog=350.0), make_message(mmsi=1, timestamp=1200, cog=10.0)],
    )
    cog = resample(track, 600).points[1].cog
    assert min(cog, 360.0 - cog) == pytest.approx(0.0, abs=1e-9)


def test_resample_on_grid_is_identity(straight_track):
    points = straight_track(duration=3 * HOUR, step=600)
    track = Track(mmsi=points[0].mmsi, points=points)
    assert resample(track, 600).points == track.points
    assert resample(resample(track, 600), 600) == resample(track, 600)


def test_resample_linear_motion_matches_line(straight_track):
    deg_per_s = 3e-5
    points = straight_track(duration=5 * HOUR, step=137, deg_per_s=deg_per_s)
    out = resample(Track(mmsi=points[0].mmsi, points=points), 600)
    for p in out.points:
        expected = -5.5 + deg_per_s * p.timestamp
        assert abs(p.lon - expected) <= 1e-9 * abs(expected)
        assert p.lat == 48.0


def test_resample_needs_two_points(make_message):
    with pytest.raises(TooFewPointsError):
        resample(Track(mmsi=1, points=[make_message(mmsi=1)]), 600)


def test_flush(cfg, make_message):
    assert flush(OperatorState(), 10 * HOUR, cfg) == []

    state = OperatorState()
    ingest_message(state, make_message(timestamp=0), cfg)
    assert flush(state, 1 * HOUR, cfg) == []
    closed = flush(state, 5 * HOUR, cfg)
    assert len(closed) == 1
    assert closed[0].track.complete
    assert state.open_tracks == {}
    assert state.last_seen == {227006760: 0}
    assert flush(state, 9 * HOUR, cfg) == []
    assert state.last_seen == {}


def test_late_report_after_flush_is_dropped(cfg, make_message):
    preprocessor = Preprocessor(cfg)
    preprocessor.process(make_message(mmsi=1, timestamp=10_000))
    assert len(preprocessor.flush(10_000 + 5 * HOUR)) == 1
    assert preprocessor.process(make_message(mmsi=1, timestamp=9_000)) == []
    assert preprocessor.process(make_message(mmsi=1, timestamp=10_000)) == []
    assert preprocessor.counters.dropped[DropReason.NON_MONOTONE_TIME] == 1
    assert preprocessor.counters.dropped[DropReason.DUPLICATE_TIME] == 1
    assert preprocessor.state.open_tracks == {}

    events = preprocessor.process(make_message(mmsi=1, timestamp=10_000 + 6 * HOUR))
    assert [type(e) for e in events] == [TrackOpened]


def test_state_extract_and_merge(cfg, make_message):
    state = OperatorState()
    for mmsi in (1, 2, 3, 4):
        ingest_message(state, make_message(mmsi=mmsi, timestamp=0), cfg)
    moved = state.extract(lambda m: m % 2 == 0)
    assert sorted(moved.open_tracks) == [2, 4]
    assert sorted(state.open_tracks) == [1, 3]
    restored = OperatorState.from_bytes(moved.to_bytes())
    state.merge(restored)
    assert sorted(state.open_tracks) == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        state.merge(OperatorState.from_bytes(restored.to_bytes()))


def test_preprocessor_counts(cfg, straight_track, make_message):
    preprocessor = Preprocessor(cfg)
    messages = straight_track(duration=5 * HOUR, step=600)
    messages += [make_message(timestamp=10 * HOUR + t, lon=-5.0) for t in (0, 600)]
    messages.append(make_message(timestamp=10 * HOUR + 600, lon=-5.0))
    messages.append(make_message(timestamp=10 * HOUR + 1200, sog=31.0))
    for msg in messages:
        preprocessor.process(msg)
    preprocessor.flush()
    c = preprocessor.counters
    assert c.processed == len(messages)
    assert c.dropped[DropReason.DUPLICATE_TIME] == 1
    assert c.dropped[DropReason.OVER_SPEED] == 1
    assert c.kept == c.processed - c.n_dropped
    assert (c.built, c.rejected, c.tested) == (2, 1, 1)
    assert c.built == c.rejected + c.tested


def test_build_tracks_sorts_and_closes(cfg, straight_track):
    a = straight_track(mmsi=111, duration=5 * HOUR)
    b = straight_track(mmsi=222, duration=2 * HOUR)
    result = build_tracks(list(reversed(a + b)), cfg)
    assert sorted(e.track_id for e in result.closed) == ["111-0", "222-0"]
    assert [t.mmsi for t in result.tested_tracks] == [111]
    resampled = result.resampled(cfg.resample_period_s)
    assert len(resampled[0]) == 5 * HOUR // 600 + 1


def test_tracks_csv(tmp_path, cfg, straight_track):
    result = build_tracks(straight_track(duration=5 * HOUR), cfg)
    tracks = result.resampled(cfg.resample_period_s)
    path = tmp_path / "tracks.csv"
    write_tracks_csv(tracks, path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == list(tracks_to_frame(tracks).columns)
    assert (frame["track_id"] == "227006760-0").all()
    assert np.allclose(frame["lon"], [p.lon for p in tracks[0].points], atol=1e-9)


def test_out_of_roi_messages_do_not_open_tracks(straight_track):
    cfg = PreprocessConfig(roi=Roi(47.0, 49.0, -5.4, -3.0))
    result = build_tracks(straight_track(duration=5 * HOUR), cfg)
    assert result.counters.dropped[DropReason.OUT_OF_ROI] > 0
    assert len(result.closed) == 1
    assert all(cfg.roi.contains(p.lat, p.lon) for p in result.closed[0].track.points)
