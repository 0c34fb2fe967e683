"""
Decoder for single-fragment `!AIVDM` / `!AIVDO` position reports
(message types 1, 2 and 3). Field layout follows the public AIVDM notes at
https://gpsd.gitlab.io/gpsd/AIVDM.html
"""

import time
from collections import Counter
from functools import reduce
from pathlib import Path
from typing import Iterator, List, Optional, Union

import bitstruct
from loguru import logger

from ..domain.common import AisMessage, FieldRangeError, Source
from .common import (
    AivdmError,
    ArmoringError,
    ChecksumMismatchError,
    MissingKinematicsError,
    MultipartUnsupportedError,
    NotPositionReportError,
)

__all__ = (
    "dearmor",
    "nmea_checksum",
    "decode_aivdm",
    "parse_timestamped_aivdm",
    "read_aivdm_file",
)

TALKERS = ("AIVDM", "AIVDO")
POSITION_REPORT_TYPES = (1, 2, 3)

# type, repeat, mmsi, status, rot, sog, accuracy, lon, lat, cog
POSITION_REPORT_FORMAT = bitstruct.compile("u6u2u30u4s8u10u1s28s27u12")
POSITION_REPORT_BITS = 128

SOG_UNAVAILABLE = 1023
COG_UNAVAILABLE = 3600
LATLON_SCALE = 600_000.0


def dearmor(payload: str) -> List[int]:
    """Maps each armored payload character to its 6-bit value."""
    values = []
    for ch in payload:
        code = ord(ch)
        if not (48 <= code <= 87 or 96 <= code <= 119):
            raise ArmoringError(f"character {ch!r} is outside the armoring table")
        value = code - 48
        if value > 40:
            value -= 8
        values.append(value & 0x3F)
    return values


def nmea_checksum(body: str) -> int:
    """XOR of every character between `!` and `*`."""
    return reduce(lambda acc, ch: acc ^ ord(ch), body, 0)


def _pack_sixbit(values: List[int]) -> bytes:
    return bitstruct.pack("u6" * len(values), *values)


def decode_aivdm(
    sentence: Union[str, bytes],
    timestamp: Optional[int] = None,
) -> AisMessage:
    """
    Decodes one sentence into an AisMessage. AIVDM carries no full timestamp,
    so the caller supplies one; arrival time is used otherwise.

    Every rejection is an `AivdmError` (or `FieldRangeError` for positions
    outside the globe).
    """
    if isinstance(sentence, (bytes, bytearray)):
        try:
            sentence = bytes(sentence).decode("ascii")
        except UnicodeDecodeError:
            raise AivdmError("sentence is not ASCII")
    if not isinstance(sentence, str):
        raise AivdmError(f"expected text, got {type(sentence).__name__}")

    sentence = sentence.strip()
    if not sentence.startswith("!") or "*" not in sentence:
        raise AivdmError("sentence must look like !AIVDM,...*hh")

    body, _, checksum_text = sentence[1:].rpartition("*")
    try:
        expected = int(checksum_text[:2], 16)
    except ValueError:
        raise ChecksumMismatchError(f"checksum field {checksum_text!r} is not hex")
    if len(checksum_text) < 2 or nmea_checksum(body) != expected:
        raise ChecksumMismatchError(f"checksum {checksum_text!r} does not match {nmea_checksum(body):02X}")

    fields = body.split(",")
    if len(fields) != 7 or fields[0] not in TALKERS:
        raise AivdmError(f"expected a 7-field AIVDM/AIVDO sentence, got {len(fields)} fields")
    _talker, count, index, _seq_id, _channel, payload, _fill = fields

    if count != "1" or index != "1":
        raise MultipartUnsupportedError(f"fragment {index!r} of {count!r}")

    values = dearmor(payload)
    if not values:
        raise ArmoringError("empty payload")

    message_type = values[0]
    if message_type not in POSITION_REPORT_TYPES:
        raise NotPositionReportError(message_type)
    if 6 * len(values) < POSITION_REPORT_BITS:
        raise ArmoringError(f"payload carries {6 * len(values)} bits, need {POSITION_REPORT_BITS}")

    (
        _type,
        _repeat,
        mmsi,
        _status,
        _rot,
        sog_raw,
        _accuracy,
        lon_raw,
        lat_raw,
        cog_raw,
    ) = POSITION_REPORT_FORMAT.unpack(_pack_sixbit(values))

    if sog_raw == SOG_UNAVAILABLE:
        raise MissingKinematicsError("sog")
    if cog_raw == COG_UNAVAILABLE:
        raise MissingKinematicsError("cog")
    if cog_raw > COG_UNAVAILABLE:
        raise FieldRangeError("cog", cog_raw / 10.0)

    if timestamp is None:
        timestamp = int(time.time())

    return AisMessage(
        mmsi=mmsi,
        timestamp=int(timestamp),
        lat=lat_raw / LATLON_SCALE,
        lon=lon_raw / LATLON_SCALE,
        sog=sog_raw / 10.0,
        cog=cog_raw / 10.0,
        source=Source.UNKNOWN,
    )


def parse_timestamped_aivdm(line: str) -> AisMessage:
    """`epoch_seconds<TAB>!AIVDM,...`"""
    stamp, sep, sentence = line.strip().partition("\t")
    if not sep:
        raise AivdmError("missing TAB between timestamp and sentence")
    try:
        timestamp = int(stamp)
    except ValueError:
        raise AivdmError(f"timestamp {stamp!r} is not an integer")
    return decode_aivdm(sentence, timestamp=timestamp)


def read_aivdm_file(path: Union[str, Path]) -> Iterator[AisMessage]:
    """Yields decoded position reports; rejections are tallied and logged once."""
    rejected = Counter()
    with open(path, "r", encoding="ascii", errors="replace") as f:
        for line in f:
            if not line.strip() or line.startswith("#"):
                continue
            try:
                yield parse_timestamped_aivdm(line)
            except (AivdmError, FieldRangeError) as e:
                rejected[type(e).__name__] += 1
    if rejected:
        logger.info(f"{Path(path).name}: rejected sentences {dict(rejected)}")
