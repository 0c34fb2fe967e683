from functools import reduce

import pytest

from trackwatch.bench.common import AnomalyInjection, Lane, SyntheticScenario
from trackwatch.domain.common import AisMessage, GridConfig, Roi
from trackwatch.preprocess.common import PreprocessConfig


@pytest.fixture(scope="session")
def roi():
    return Roi(47.0, 49.0, -6.0, -3.0)


@pytest.fixture(scope="session")
def cfg(roi):
    return PreprocessConfig(roi=roi)


@pytest.fixture(scope="session")
def make_message():
    def make(mmsi=227006760, timestamp=0, lat=48.0, lon=-5.0, sog=12.0, cog=90.0, **kwargs):
        return AisMessage(mmsi=mmsi, timestamp=timestamp, lat=lat, lon=lon, sog=sog, cog=cog, **kwargs)

    return make


@pytest.fixture(scope="session")
def straight_track(make_message):
    """Eastbound at constant speed, one report per `step` seconds."""

    def make(mmsi=227006760, t0=0, duration=4 * 3600, step=60, lat=48.0, lon0=-5.5, deg_per_s=1e-5, cog=90.0):
        return [
            make_message(mmsi=mmsi, timestamp=t0 + t, lat=lat, lon=lon0 + deg_per_s * t, cog=cog)
            for t in range(0, duration + 1, step)
        ]

    return make


def _bits(value, width):
    return format(value & ((1 << width) - 1), f"0{width}b")


@pytest.fixture(scope="session")
def encode_aivdm():
    """Builds a single-fragment type 1-3 sentence from raw field values."""

    def encode(
        mmsi=227006760,
        lat=48.1,
        lon=-5.5,
        sog_raw=123,
        cog_raw=2150,
        message_type=1,
        talker="AIVDM",
        fragments=(1, 1),
        truncate_to=None,
    ):
        bits = "".join(
            [
                _bits(message_type, 6),
                _bits(0, 2),
                _bits(mmsi, 30),
                _bits(0, 4),
                _bits(-128, 8),
                _bits(sog_raw, 10),
                _bits(1, 1),
                _bits(int(round(lon * 600_000)), 28),
                _bits(int(round(lat * 600_000)), 27),
                _bits(cog_raw, 12),
                _bits(511, 9),
                _bits(30, 6),
                _bits(0, 2),
                _bits(0, 3),
                _bits(0, 1),
                _bits(0, 19),
            ]
        )
        values = [int(bits[i : i + 6], 2) for i in range(0, len(bits), 6)]
        payload = "".join(chr(v + 48) if v < 40 else chr(v + 56) for v in values)
        if truncate_to is not None:
            payload = payload[:truncate_to]
        body = f"{talker},{fragments[0]},{fragments[1]},,A,{payload},0"
        checksum = reduce(lambda acc, ch: acc ^ ord(ch), body, 0)
        return f"!{body}*{checksum:02X}"

    return encode


@pytest.fixture(scope="session")
def lane_scenario():
    """Two short east-west lanes; tracks last a few hours."""

    def make(n_vessels=24, seed=3, start_time=1_600_000_000, **overrides):
        values = dict(
            lanes=(
                Lane(waypoints=((47.45, -5.9), (47.45, -5.1)), speed_knots=12.0),
                Lane(waypoints=((48.05, -5.9), (48.05, -5.1)), speed_knots=10.0),
            ),
            n_vessels=n_vessels,
            duration_s=12 * 3600,
            start_time=start_time,
            report_period_s=120,
            jitter_s=10,
            anomalies=(AnomalyInjection("loop", 0.1), AnomalyInjection("stop", 0.1)),
            anomaly_duration_s=3600,
            seed=seed,
        )
        values.update(overrides)
        return SyntheticScenario(**values)

    return make


@pytest.fixture(scope="session")
def short_cfg(roi):
    """Scaled-down durations so short synthetic voyages still trigger detection."""
    return PreprocessConfig(
        roi=roi,
        gap_threshold_s=1800,
        resample_period_s=300,
        min_track_duration_s=3600,
        redetect_period_s=1800,
    )


@pytest.fixture(scope="session")
def coarse_grid():
    return GridConfig(cell_size_deg=0.2)
