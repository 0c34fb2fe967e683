import time
from functools import partial
from typing import Dict, List, Sequence, Tuple, Union

from loguru import logger

from ..domain.common import AisMessage
from ..normalcy.common import NormalcySettings, TrackTooShortError, Verdict
from ..normalcy.detection import detect_track
from ..normalcy.geofence import GeofenceZone, geofence_check
from ..normalcy.model import Scorer
from ..preprocess.common import DetectionDue, PreprocessConfig, PreprocessCounters, TrackClosed
from ..preprocess.tracker import OperatorState, Preprocessor
from .common import GeofenceViolation

__all__ = ("TrackOperator", "operator_factory")

Output = Union[TrackClosed, Verdict, GeofenceViolation]


class TrackOperator:
    """
    One replica of the streaming operator: builds tracks for the partitions it
    owns and calls the detector whenever a track is due. Keeps one
    Preprocessor per owned partition so a partition's state can be handed
    over on its own.
    """

    def __init__(
        self,
        model: Scorer,
        cfg: PreprocessConfig,
        settings: NormalcySettings = NormalcySettings(),
        zones: Sequence[GeofenceZone] = (),
    ) -> None:
        self.model = model
        self.cfg = cfg
        self.settings = settings
        self.zones = tuple(zones)
        self.preprocessors: Dict[int, Preprocessor] = {}
        self.timings: List[float] = []

    def _preprocessor(self, partition: int) -> Preprocessor:
        if partition not in self.preprocessors:
            self.preprocessors[partition] = Preprocessor(self.cfg)
        return self.preprocessors[partition]

    @property
    def partitions(self) -> List[int]:
        return sorted(self.preprocessors)

    @property
    def state(self) -> OperatorState:
        """Merged view over every owned partition."""
        merged = OperatorState()
        for partition in self.partitions:
            merged.merge(OperatorState.from_bytes(self.preprocessors[partition].state.to_bytes()))
        return merged

    @property
    def counters(self) -> PreprocessCounters:
        total = PreprocessCounters()
        for preprocessor in self.preprocessors.values():
            total = total.merge(preprocessor.counters)
        return total

    def detect(self, due: DetectionDue) -> Verdict:
        return detect_track(
            self.model,
            due.track,
            min_points=self.cfg.min_points,
            aggregation=self.settings.aggregation,
            ratio_threshold=self.settings.ratio_threshold,
            watermark=due.watermark,
        )

    def process(self, partition: int, msg: AisMessage) -> List[Output]:
        started = time.perf_counter()
        events = self._preprocessor(partition).process(msg)

        outputs: List[Output] = []
        detected = False
        for event in events:
            if isinstance(event, TrackClosed):
                outputs.append(event)
            elif isinstance(event, DetectionDue):
                try:
                    outputs.append(self.detect(event))
                    detected = True
                except TrackTooShortError as e:
                    logger.warning(f"Skipped detection: {e}")

        if events and self.zones:
            violated = geofence_check(msg, self.zones)
            if violated:
                first = self._preprocessor(partition).state.open_tracks[msg.mmsi][0]
                outputs.append(
                    GeofenceViolation(
                        mmsi=msg.mmsi,
                        track_id=f"{msg.mmsi}-{first.timestamp}",
                        timestamp=msg.timestamp,
                        zones=tuple(violated),
                    )
                )

        if detected:
            self.timings.append(time.perf_counter() - started)
        return outputs

    def flush(self, now: float) -> List[TrackClosed]:
        closed = []
        for partition in self.partitions:
            closed.extend(self.preprocessors[partition].flush(now))
        return closed

    def snapshot(self, partition: int) -> Tuple[bytes, PreprocessCounters]:
        """Serialized state plus tallies for one partition."""
        preprocessor = self._preprocessor(partition)
        return preprocessor.state.to_bytes(), preprocessor.counters.copy()

    def restore(self, partition: int, snapshot: Tuple[bytes, PreprocessCounters]):
        state_bytes, counters = snapshot
        preprocessor = Preprocessor(self.cfg, OperatorState.from_bytes(state_bytes))
        preprocessor.counters = counters.copy()
        self.preprocessors[partition] = preprocessor

    def release(self, partition: int) -> Tuple[bytes, PreprocessCounters]:
        """Hands a partition over: snapshot it and forget it."""
        snapshot = self.snapshot(partition)
        del self.preprocessors[partition]
        return snapshot


def operator_factory(
    cfg: PreprocessConfig,
    settings: NormalcySettings = NormalcySettings(),
    zones: Sequence[GeofenceZone] = (),
):
    """A picklable `model -> TrackOperator` callable for run_group."""
    return partial(TrackOperator, cfg=cfg, settings=settings, zones=tuple(zones))
