import math
import threading
import time
from collections import defaultdict, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple

from loguru import logger

from ..ingest.common import FieldRangeError, IngestError
from ..normalcy.common import Decision, Verdict
from ..preprocess.common import PreprocessCounters, TrackClosed
from .common import GeofenceViolation
from .group import OperatorGroup, rebalance
from .log import PartitionedLog, Record
from .operator import Output, TrackOperator

__all__ = ("AlertSink", "GroupResult", "GroupRunner", "run_group")

OperatorFactory = Callable[[object], TrackOperator]
RecordHook = Callable[[int, int, Record, object], None]


class AlertSink:
    """
    Collects operator outputs from every replica. Delivery upstream is
    at-least-once, so verdicts are de-duplicated on (track_id, watermark),
    closed tracks on track_id and geofence hits on (track_id, timestamp).

    Alert callbacks see a track's first non-normal verdict only; later
    re-detections of the same track stay in the verdict ledger.

    With `history` set the sink is bounded for long-running services: the
    ledgers keep the newest `history` entries and every key of a track is
    forgotten once the track closes.
    """

    def __init__(self, history: Optional[int] = None) -> None:
        if history is not None and history < 1:
            raise ValueError(f"history must be at least 1, got {history}")
        self.history = history
        self._lock = threading.Lock()
        self._seen = set()
        self._alerted = set()
        self._track_keys: Dict[str, set] = defaultdict(set)
        self.verdicts: Deque[Verdict] = deque(maxlen=history)
        self.closed: Deque[TrackClosed] = deque(maxlen=history)
        self.geofence: Deque[GeofenceViolation] = deque(maxlen=history)
        self.n_duplicates = 0
        self.alert_callbacks: List[Callable[[dict], None]] = []

    def on_alert(self, callback: Callable[[dict], None]):
        self.alert_callbacks.append(callback)

    @property
    def n_keys(self) -> int:
        return len(self._seen) + len(self._alerted)

    def _forget(self, track_id: str):
        self._seen.difference_update(self._track_keys.pop(track_id, ()))
        self._alerted.discard(track_id)

    def emit(self, output: Output) -> bool:
        if isinstance(output, Verdict):
            key = ("verdict", output.track_id, output.watermark)
        elif isinstance(output, TrackClosed):
            key = ("closed", output.track_id)
        else:
            key = ("geofence", output.track_id, output.timestamp)

        alert = None
        with self._lock:
            if key in self._seen:
                self.n_duplicates += 1
                return False
            self._seen.add(key)
            self._track_keys[output.track_id].add(key)
            if isinstance(output, Verdict):
                self.verdicts.append(output)
                if output.decision is not Decision.NORMAL and output.track_id not in self._alerted:
                    self._alerted.add(output.track_id)
                    alert = output.as_alert()
            elif isinstance(output, TrackClosed):
                self.closed.append(output)
                if self.history is not None:
                    self._forget(output.track_id)
            else:
                self.geofence.append(output)
                alert = output.as_alert()

        if alert is not None:
            for cb in self.alert_callbacks:
                cb(alert)
        return True

    @property
    def alerts(self) -> List[Verdict]:
        return [v for v in self.verdicts if v.decision is not Decision.NORMAL]

    @property
    def alert_track_ids(self) -> set:
        return {v.track_id for v in self.alerts}


@dataclass
class GroupResult:
    sink: AlertSink
    counters: PreprocessCounters
    timings: List[float] = field(default_factory=list)
    wall_time_s: float = 0.0
    n_records: int = 0

    @property
    def alerts(self) -> List[Verdict]:
        return self.sink.alerts

    @property
    def closed(self) -> List[TrackClosed]:
        return list(self.sink.closed)

    @property
    def throughput(self) -> float:
        """Detections per second of processing wall time."""
        return len(self.timings) / self.wall_time_s if self.wall_time_s > 0 else math.inf


class GroupRunner:
    """
    Drives an operator group over a partitioned log: one operator per replica,
    each consuming its partitions in offset order. Offsets are committed
    together with a snapshot of the partition's state every
    `commit_interval` records, so a crashed replica restarts from its last
    commit and replays what followed.
    """

    def __init__(
        self,
        log: PartitionedLog,
        group: OperatorGroup,
        operator_factory: OperatorFactory,
        model,
        sink: Optional[AlertSink] = None,
        commit_interval: int = 64,
    ) -> None:
        if group.n_partitions != log.n_partitions:
            raise ValueError(f"group covers {group.n_partitions} partitions, log has {log.n_partitions}")
        self.log = log
        self.group = group
        self.operator_factory = operator_factory
        self.model = model
        self.sink = sink if sink is not None else AlertSink()
        self.commit_interval = commit_interval

        self.operators: Dict[int, TrackOperator] = {}
        self.positions = {p: 0 for p in range(log.n_partitions)}
        self.committed = dict(self.positions)
        self.checkpoints: Dict[int, Optional[Tuple]] = {p: None for p in range(log.n_partitions)}
        self.record_hooks: List[RecordHook] = []
        self._since_commit = {p: 0 for p in range(log.n_partitions)}
        self._retired_timings: List[float] = []
        self.n_records = 0

        for replica in range(group.replicas):
            self.operators[replica] = operator_factory(model)
        for partition, replica in enumerate(group.assignment):
            self.operators[replica].restore(partition, self.operators[replica].snapshot(partition))

    def on_record(self, hook: RecordHook):
        self.record_hooks.append(hook)

    def poll(self, max_records: Optional[int] = None) -> int:
        """Consumes up to `max_records` per partition; returns the number consumed."""
        consumed = 0
        for replica in sorted(self.operators):
            operator = self.operators[replica]
            for partition in self.group.partitions_of(replica):
                for record in self.log.read(partition, self.positions[partition], max_records):
                    self._consume(replica, operator, partition, record)
                    consumed += 1
        return consumed

    def _consume(self, replica: int, operator: TrackOperator, partition: int, record: Record):
        try:
            msg = record.message()
        except (IngestError, FieldRangeError) as e:
            logger.warning(f"Partition {partition} offset {record.offset}: unreadable payload ({e})")
            msg = None

        if msg is not None:
            for hook in self.record_hooks:
                hook(replica, partition, record, msg)
            for output in operator.process(partition, msg):
                self.sink.emit(output)

        self.n_records += 1
        self.positions[partition] = record.offset + 1
        self._since_commit[partition] += 1
        if self._since_commit[partition] >= self.commit_interval:
            self.commit(partition)

    def commit(self, partition: int):
        owner = self.operators[self.group.assignment[partition]]
        self.checkpoints[partition] = owner.snapshot(partition)
        self.committed[partition] = self.positions[partition]
        self._since_commit[partition] = 0

    def commit_all(self):
        for partition in range(self.log.n_partitions):
            self.commit(partition)

    def crash(self, replica: int):
        """Drops a replica's in-memory state; it resumes from its last commits."""
        operator = self.operators[replica]
        for partition in self.group.partitions_of(replica):
            operator.release(partition)
            checkpoint = self.checkpoints[partition]
            if checkpoint is None:
                checkpoint = operator.snapshot(partition)
                operator.release(partition)
            operator.restore(partition, checkpoint)
            self.positions[partition] = self.committed[partition]
            self._since_commit[partition] = 0
        logger.warning(f"Replica {replica} restarted from its last commit.")

    def rebalance(self, new_replica_count: int):
        """Commits, reassigns partitions and ships each moved partition's state."""
        self.commit_all()
        new_group, plan = rebalance(self.group, new_replica_count)
        for replica in range(new_group.replicas):
            if replica not in self.operators:
                self.operators[replica] = self.operator_factory(self.model)

        for handoff in plan:
            snapshot = self.operators[handoff.source].release(handoff.partition)
            self.operators[handoff.target].restore(handoff.partition, snapshot)

        for replica in [r for r in self.operators if r >= new_group.replicas]:
            self._retired_timings.extend(self.operators.pop(replica).timings)
        self.group = new_group

    def flush_idle(self, now: float) -> List[TrackClosed]:
        """Closes tracks idle past the gap threshold at event time `now`."""
        closed = []
        for operator in self.operators.values():
            for event in operator.flush(now):
                if self.sink.emit(event):
                    closed.append(event)
        return closed

    @property
    def counters(self) -> PreprocessCounters:
        total = PreprocessCounters()
        for operator in self.operators.values():
            total = total.merge(operator.counters)
        return total

    @property
    def timings(self) -> List[float]:
        samples = list(self._retired_timings)
        for replica in sorted(self.operators):
            samples.extend(self.operators[replica].timings)
        return samples

    def finish(self) -> GroupResult:
        """End of stream: closes every open track and commits."""
        self.flush_idle(math.inf)
        self.commit_all()
        return GroupResult(sink=self.sink, counters=self.counters, timings=self.timings, n_records=self.n_records)


def _run_replica(operator_factory: OperatorFactory, model, partitions: Dict[int, List[Record]]):
    operator = operator_factory(model)
    outputs: List[Output] = []
    started = time.perf_counter()
    for partition in sorted(partitions):
        for record in partitions[partition]:
            try:
                msg = record.message()
            except (IngestError, FieldRangeError):
                continue
            outputs.extend(operator.process(partition, msg))
    outputs.extend(operator.flush(math.inf))
    elapsed = time.perf_counter() - started
    return outputs, operator.counters, operator.timings, elapsed


def run_group(
    log: PartitionedLog,
    group: OperatorGroup,
    operator_factory: OperatorFactory,
    model,
    sink: Optional[AlertSink] = None,
    parallel: bool = False,
    rebalance_schedule: Sequence[Tuple[int, int]] = (),
    batch_size: int = 256,
    commit_interval: int = 64,
    record_hooks: Sequence[RecordHook] = (),
) -> GroupResult:
    """
    Runs the group over everything in `log` and returns what it emitted.

    Sequential mode polls `batch_size` records per partition per round and
    applies `rebalance_schedule` entries `(round, replicas)` between rounds.
    Parallel mode gives each replica its own process and no rebalancing;
    its wall time is the slowest replica's processing time.
    """
    sink = sink if sink is not None else AlertSink()

    if parallel:
        if rebalance_schedule:
            raise ValueError("rebalancing is only simulated in sequential mode")
        work = {
            replica: {p: log.read(p) for p in partitions}
            for replica, partitions in group.owners().items()
        }
        with ProcessPoolExecutor(max_workers=group.replicas) as pool:
            futures = {r: pool.submit(_run_replica, operator_factory, model, work[r]) for r in sorted(work)}
            results = {r: f.result() for r, f in futures.items()}

        counters = PreprocessCounters()
        timings: List[float] = []
        slowest = 0.0
        for replica in sorted(results):
            outputs, replica_counters, replica_timings, elapsed = results[replica]
            for output in outputs:
                sink.emit(output)
            counters = counters.merge(replica_counters)
            timings.extend(replica_timings)
            slowest = max(slowest, elapsed)
        logger.info(f"Group of {group.replicas} replicas processed {log.total_records} records in {slowest:.3f}s.")
        return GroupResult(
            sink=sink, counters=counters, timings=timings, wall_time_s=slowest, n_records=log.total_records
        )

    started = time.perf_counter()
    runner = GroupRunner(log, group, operator_factory, model, sink=sink, commit_interval=commit_interval)
    for hook in record_hooks:
        runner.on_record(hook)
    schedule = dict(rebalance_schedule)

    round_index = 0
    while True:
        if round_index in schedule:
            runner.rebalance(schedule[round_index])
        if runner.poll(batch_size) == 0:
            break
        round_index += 1

    result = runner.finish()
    result.wall_time_s = time.perf_counter() - started
    logger.info(
        f"Group processed {result.n_records} records in {result.wall_time_s:.3f}s: "
        f"{len(result.alerts)} alerts, {len(result.closed)} closed tracks."
    )
    return result
