import asyncio
import json
import math
import re
import signal
from pathlib import Path
from typing import List, Optional, Sequence

from loguru import logger

from ..domain.common import AisMessage
from ..ingest.listener import AisLineListener
from ..normalcy.common import NormalcySettings
from ..normalcy.geofence import GeofenceZone
from ..preprocess.common import PreprocessConfig
from .common import BindError, StreamSettings
from .group import OperatorGroup
from .log import PartitionedLog
from .operator import operator_factory
from .runner import AlertSink, GroupResult, GroupRunner

__all__ = ("AlertWriter", "LiveService", "serve", "parse_endpoint")

ENDPOINT = re.compile(r"^(?P<host>[A-Za-z0-9_.\-]+|\[[0-9a-fA-F:]+\]):(?P<port>\d{1,5})$")


def parse_endpoint(text: str):
    """`host:port` -> (host, port), or None when `text` is not an endpoint."""
    match = ENDPOINT.match(text)
    if match is None:
        return None
    return match["host"].strip("[]"), int(match["port"])


class AlertWriter:
    """Writes alerts as JSON lines to a file, or to a TCP peer for `host:port`."""

    def __init__(self, target: str) -> None:
        self.target = target
        self.endpoint = None if Path(target).exists() else parse_endpoint(target)
        self.n_written = 0
        self._file = None
        self._writer: Optional[asyncio.StreamWriter] = None

    async def open(self):
        if self.endpoint is not None:
            host, port = self.endpoint
            _, self._writer = await asyncio.open_connection(host, port)
            logger.info(f"Writing alerts to {host}:{port}.")
        else:
            self._file = open(self.target, "a", encoding="utf-8")
            logger.info(f"Writing alerts to {self.target}.")

    def write(self, alert: dict):
        line = json.dumps(alert, sort_keys=True) + "\n"
        if self._writer is not None:
            self._writer.write(line.encode("utf-8"))
        else:
            self._file.write(line)
            self._file.flush()
        self.n_written += 1

    async def drain(self):
        if self._writer is not None:
            await self._writer.drain()

    async def close(self):
        if self._writer is not None:
            await self._writer.drain()
            self._writer.close()
            await self._writer.wait_closed()
            self._writer = None
        if self._file is not None:
            self._file.close()
            self._file = None


class LiveService:
    """
    Listener -> partitioned log -> operator group -> alert writer, all on one
    event loop. Each frame drains the ingest queue, publishes, lets every
    replica consume and then closes tracks idle past the gap threshold
    relative to the newest timestamp seen. Records below each partition's
    committed offset are dropped from memory and the alert sink keeps only
    recent history.
    """

    def __init__(
        self,
        model,
        cfg: PreprocessConfig,
        alerts: str,
        settings: NormalcySettings = NormalcySettings(),
        stream: StreamSettings = StreamSettings(),
        zones: Sequence[GeofenceZone] = (),
        host: str = "127.0.0.1",
        port: int = 10110,
        log_directory: Optional[str] = None,
        frame_time: float = 0.2,
    ) -> None:
        self.cfg = cfg
        self.frame_time = frame_time
        self.listener = AisLineListener(host=host, port=port, queue_size=stream.queue_size)
        self.writer = AlertWriter(alerts)
        self.log = PartitionedLog(stream.n_partitions, directory=log_directory)
        self.sink = AlertSink(history=stream.queue_size)
        self.sink.on_alert(self.writer.write)
        self.runner = GroupRunner(
            self.log,
            OperatorGroup.create(stream.n_partitions, stream.replicas),
            operator_factory(cfg, settings, zones),
            model,
            sink=self.sink,
            commit_interval=stream.commit_interval,
        )
        self.newest = -math.inf

    @property
    def port(self) -> int:
        return self.listener.port

    async def start(self):
        """Binds the listener first so a taken port fails before any output is opened."""
        try:
            await self.listener.start()
        except OSError as e:
            self.log.close()
            raise BindError(f"cannot listen on {self.listener.host}:{self.listener.port}: {e}")
        try:
            await self.writer.open()
        except OSError:
            await self.listener.stop()
            self.log.close()
            raise

    def read_messages(self) -> List[AisMessage]:
        messages = []
        while True:
            try:
                messages.append(self.listener.messages.get_nowait())
            except asyncio.QueueEmpty:
                return messages

    async def step(self) -> int:
        messages = self.read_messages()
        for msg in messages:
            self.log.publish(msg.mmsi, msg)
            self.newest = max(self.newest, msg.timestamp)
        if messages:
            self.runner.poll()
            for event in self.runner.flush_idle(self.newest):
                logger.info(f"Track {event.track_id} closed idle ({len(event.track.points)} points).")
            for partition, offset in self.runner.committed.items():
                self.log.truncate(partition, offset)
        await self.writer.drain()
        return len(messages)

    async def run(self, stop: asyncio.Event):
        while not stop.is_set():
            try:
                await asyncio.wait_for(stop.wait(), timeout=self.frame_time)
            except asyncio.TimeoutError:
                pass
            await self.step()

    async def shutdown(self) -> GroupResult:
        """Stops accepting, consumes what was queued and flushes every open track."""
        await self.listener.stop()
        await self.step()
        result = self.runner.finish()
        for event in result.closed:
            logger.debug(f"Track {event.track_id} closed, tested={event.tested}.")
        await self.writer.close()
        self.log.close()
        logger.info(
            f"Served {self.listener.n_received} messages ({self.listener.n_malformed} malformed), "
            f"{self.writer.n_written} alerts written."
        )
        return result


async def _serve(service: LiveService) -> GroupResult:
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError):
            pass

    await service.start()
    try:
        await service.run(stop)
    finally:
        result = await service.shutdown()
    return result


def serve(service: LiveService) -> GroupResult:
    """Runs until SIGINT or SIGTERM; BindError when the address is taken."""
    return asyncio.run(_serve(service))
