import asyncio
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from loguru import logger

from ..domain.common import AisMessage
from .common import FieldRangeError, IngestError
from .records import parse_record

__all__ = ("AisLineListener",)


@dataclass
class AisLineListener:
    """
    Accepts TCP connections carrying line-delimited JSON (or CSV) records and
    queues the parsed messages. Malformed lines are counted and dropped; the
    connection stays open.
    """

    host: str = "127.0.0.1"
    port: int = 10110
    queue_size: int = 10_000
    message_callbacks: List[Callable[[AisMessage], None]] = field(default_factory=list)

    messages: Optional[asyncio.Queue] = field(default=None, init=False)
    n_received: int = field(default=0, init=False)
    n_malformed: int = field(default=0, init=False)
    n_lost: int = field(default=0, init=False)
    server: Optional[asyncio.AbstractServer] = field(default=None, init=False)

    def on_message_received(self, callback: Callable[[AisMessage], None]):
        self.message_callbacks.append(callback)

    def receive_line(self, raw: bytes):
        try:
            line = raw.decode("utf-8").strip()
        except UnicodeDecodeError:
            self.n_malformed += 1
            logger.warning("Dropped a line that is not UTF-8.")
            return
        if not line:
            return

        try:
            msg = parse_record(line)
        except (IngestError, FieldRangeError) as e:
            self.n_malformed += 1
            logger.warning(f"Dropped malformed line ({e}).")
            return

        self.n_received += 1
        try:
            self.messages.put_nowait(msg)
        except asyncio.QueueFull:
            self.n_lost += 1
            logger.warning("Ingest queue full, message lost.")

        for cb in self.message_callbacks:
            cb(msg)

    async def _handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = writer.get_extra_info("peername")
        logger.info(f"Feed connected from {peer}.")
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                self.receive_line(raw)
        except (ConnectionError, asyncio.IncompleteReadError) as e:
            logger.warning(f"Feed {peer} dropped: {e}")
        finally:
            writer.close()
            logger.info(f"Feed {peer} closed.")

    async def start(self):
        """Binds the socket; OSError propagates when the address is taken."""
        self.messages = asyncio.Queue(maxsize=self.queue_size)
        self.server = await asyncio.start_server(self._handle_connection, self.host, self.port)
        bound = self.server.sockets[0].getsockname() if self.server.sockets else (self.host, self.port)
        self.port = bound[1]
        logger.info(f"Listening for AIS records on {self.host}:{self.port}.")

    async def stop(self):
        if self.server is not None:
            self.server.close()
            await self.server.wait_closed()
            self.server = None
