import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

from loguru import logger

from ..domain.common import AisMessage
from ..normalcy.common import NormalcySettings
from ..normalcy.geofence import GeofenceZone
from ..preprocess.common import PreprocessConfig
from ..stream.common import StreamSettings
from ..stream.group import OperatorGroup
from ..stream.log import PartitionedLog
from ..stream.operator import operator_factory
from ..stream.runner import run_group
from .common import BenchReport, SyntheticScenario
from .replay import replay
from .stats import capacity_estimate, timing_stats, unique_mmsi_cdf
from .synthetic import generate

__all__ = ("run_benchmark",)

MIN_MEAN_S = 1e-9


def run_benchmark(
    source: Union[SyntheticScenario, Sequence[AisMessage]],
    model,
    cfg: PreprocessConfig,
    replicas: Sequence[int] = (1,),
    settings: NormalcySettings = NormalcySettings(),
    stream: StreamSettings = StreamSettings(),
    zones: Sequence[GeofenceZone] = (),
    window_s: int = 600,
    parallel: bool = True,
    output_dir: Union[str, Path, None] = None,
) -> List[BenchReport]:
    """
    Replays the messages as fast as possible into a partitioned log, then runs
    one operator group per entry of `replicas` over it. Each report carries
    per-detection timings (preprocessing included), the unique-MMSI window
    CDF, the core estimate for the busiest window and track accounting.
    """
    messages = generate(source) if isinstance(source, SyntheticScenario) else list(source)
    messages = sorted(messages, key=lambda m: m.timestamp)

    log = PartitionedLog(stream.n_partitions)
    replay(messages, math.inf, lambda m: log.publish(m.mmsi, m))
    cdf = unique_mmsi_cdf(messages, window_s)

    reports = []
    for n in replicas:
        group = OperatorGroup.create(stream.n_partitions, n)
        result = run_group(
            log,
            group,
            operator_factory(cfg, settings, zones),
            model,
            parallel=parallel,
            commit_interval=stream.commit_interval,
        )
        counters = result.counters
        timing = timing_stats(result.timings) if result.timings else None
        if timing is None:
            capacity = 0
            logger.warning(f"{n} replicas: no track reached the minimum duration, nothing to time.")
        else:
            capacity = capacity_estimate(max(cdf.peak, 1), max(timing.mean, MIN_MEAN_S), window_s)
        report = BenchReport(
            replicas=n,
            timing=timing,
            cdf=cdf,
            window_s=window_s,
            peak_unique_mmsi=cdf.peak,
            capacity_cores=capacity,
            built=counters.built,
            rejected=counters.rejected,
            tested=counters.tested,
            n_messages=len(messages),
            n_detections=len(result.timings),
            wall_time_s=result.wall_time_s,
            throughput=result.throughput,
        )
        if timing is not None:
            logger.info(
                f"{n} replicas: {report.throughput:.1f} detections/s, mean {timing.mean * 1e3:.2f} ms, "
                f"{report.capacity_cores} cores for peak {report.peak_unique_mmsi} MMSIs per window."
            )
        if output_dir is not None:
            report.write(Path(output_dir) / f"replicas-{n}")
        reports.append(report)
    log.close()
    return reports
