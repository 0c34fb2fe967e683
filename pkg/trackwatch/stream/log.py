"""
Keyed, partitioned, append-only log standing in for a Kafka topic.

Partition file layout (little-endian), one file per partition:

    b"GTPL" | u16 version
    then per record: u32 length | u64 offset | u32 key length | key | payload

`length` counts the bytes that follow it in the record.
"""

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

from loguru import logger

from ..domain.common import AisMessage
from ..ingest.records import parse_record, render_record
from .common import LogClosedError, PartitionFileError

__all__ = ("Record", "PartitionedLog", "partition_of", "encode_key")

MAGIC = b"GTPL"
LOG_VERSION = 1
FILE_HEADER = struct.Struct("<4sH")
RECORD_LENGTH = struct.Struct("<I")
RECORD_PREFIX = struct.Struct("<QI")

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK_64 = (1 << 64) - 1


def encode_key(mmsi: int) -> bytes:
    return struct.pack(">Q", mmsi)


def partition_of(mmsi: int, n_partitions: int) -> int:
    """FNV-1a 64 over the MMSI's 8-byte big-endian encoding, modulo n_partitions."""
    h = FNV_OFFSET_BASIS
    for byte in encode_key(mmsi):
        h ^= byte
        h = (h * FNV_PRIME) & MASK_64
    return h % n_partitions


@dataclass(frozen=True)
class Record:
    offset: int
    key: bytes
    payload: bytes

    @property
    def mmsi(self) -> int:
        return struct.unpack(">Q", self.key)[0]

    def message(self) -> AisMessage:
        return parse_record(self.payload.decode("utf-8"))

    def encode(self) -> bytes:
        body = RECORD_PREFIX.pack(self.offset, len(self.key)) + self.key + self.payload
        return RECORD_LENGTH.pack(len(body)) + body


def _decode_records(data: bytes, source: str) -> List[Record]:
    if len(data) < FILE_HEADER.size:
        raise PartitionFileError(f"{source}: missing file header")
    magic, version = FILE_HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PartitionFileError(f"{source}: bad magic {magic!r}")
    if version != LOG_VERSION:
        raise PartitionFileError(f"{source}: version {version}, expected {LOG_VERSION}")

    records = []
    position = FILE_HEADER.size
    while position < len(data):
        if position + RECORD_LENGTH.size > len(data):
            raise PartitionFileError(f"{source}: truncated record length at byte {position}")
        (length,) = RECORD_LENGTH.unpack_from(data, position)
        start = position + RECORD_LENGTH.size
        end = start + length
        if end > len(data) or length < RECORD_PREFIX.size:
            raise PartitionFileError(f"{source}: truncated record at byte {position}")
        offset, key_length = RECORD_PREFIX.unpack_from(data, start)
        key_start = start + RECORD_PREFIX.size
        if key_start + key_length > end:
            raise PartitionFileError(f"{source}: key overruns record at byte {position}")
        records.append(
            Record(
                offset=offset,
                key=bytes(data[key_start : key_start + key_length]),
                payload=bytes(data[key_start + key_length : end]),
            )
        )
        if len(records) > 1 and records[-1].offset <= records[-2].offset:
            raise PartitionFileError(f"{source}: offsets not increasing at byte {position}")
        position = end
    return records


class PartitionedLog:
    """
    In-process log with `n_partitions` FIFO partitions, optionally mirrored
    to one append-only file per partition. Publishes from many threads are
    serialized per partition.
    """

    def __init__(self, n_partitions: int = 16, directory: Union[str, Path, None] = None) -> None:
        if n_partitions < 1:
            raise ValueError(f"n_partitions must be at least 1, got {n_partitions}")
        self.n_partitions = n_partitions
        self.directory = Path(directory) if directory is not None else None
        self.closed = False
        self._partitions: List[List[Record]] = [[] for _ in range(n_partitions)]
        self._next = [0] * n_partitions
        self._locks = [threading.Lock() for _ in range(n_partitions)]
        self._files = None

        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._files = []
            for p in range(n_partitions):
                path = self.partition_path(p)
                if path.exists():
                    self._partitions[p] = _decode_records(path.read_bytes(), path.name)
                    self._next[p] = self._partitions[p][-1].offset + 1 if self._partitions[p] else 0
                    f = open(path, "ab")
                else:
                    f = open(path, "wb")
                    f.write(FILE_HEADER.pack(MAGIC, LOG_VERSION))
                    f.flush()
                self._files.append(f)
            logger.debug(f"Opened partitioned log at {self.directory} ({self.total_records} records).")

    @classmethod
    def open(cls, directory: Union[str, Path]) -> "PartitionedLog":
        """Reopens a file-backed log; the partition count comes from the files present."""
        directory = Path(directory)
        n = len(list(directory.glob("partition-*.gtpl")))
        if n == 0:
            raise PartitionFileError(f"no partition files in {directory}")
        return cls(n_partitions=n, directory=directory)

    def partition_path(self, partition: int) -> Path:
        return self.directory / f"partition-{partition:04d}.gtpl"

    @property
    def total_records(self) -> int:
        """Records ever published, truncated ones included."""
        return sum(self._next)

    @property
    def retained_records(self) -> int:
        return sum(len(p) for p in self._partitions)

    def publish(self, key: int, payload: AisMessage) -> Tuple[int, int]:
        """Appends `payload` to the partition of `key`; returns (partition, offset)."""
        if self.closed:
            raise LogClosedError("log is closed")
        partition = partition_of(key, self.n_partitions)
        with self._locks[partition]:
            offset = self._next[partition]
            record = Record(offset=offset, key=encode_key(key), payload=render_record(payload).encode("utf-8"))
            self._partitions[partition].append(record)
            self._next[partition] = offset + 1
            if self._files is not None:
                self._files[partition].write(record.encode())
                self._files[partition].flush()
        return partition, offset

    def end_offset(self, partition: int) -> int:
        return self._next[partition]

    def truncate(self, partition: int, before_offset: int) -> int:
        """
        Drops in-memory records with offset < `before_offset`; partition files
        keep them. Returns the number dropped.
        """
        with self._locks[partition]:
            records = self._partitions[partition]
            n = 0
            while n < len(records) and records[n].offset < before_offset:
                n += 1
            del records[:n]
        return n

    def read(self, partition: int, from_offset: int = 0, max_records: Optional[int] = None) -> List[Record]:
        """Records with offset >= `from_offset`, in append order."""
        records = self._partitions[partition]
        # offsets are dense for logs written here
        base = records[0].offset if records else 0
        guess = from_offset - base
        start = guess if 0 <= guess < len(records) and records[guess].offset == from_offset else None
        if start is None:
            start = next((i for i, r in enumerate(records) if r.offset >= from_offset), len(records))
        end = len(records) if max_records is None else min(len(records), start + max_records)
        return records[start:end]

    def close(self):
        self.closed = True
        if self._files is not None:
            for f in self._files:
                f.close()
            self._files = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
