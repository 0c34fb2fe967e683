import json
import math
from pathlib import Path
from typing import Iterator, Union

from loguru import logger

from ..domain.common import AisMessage, Source
from .common import RECORD_FIELDS, FieldRangeError, IngestError, MalformedLineError

__all__ = ("parse_record", "render_record", "read_records", "RECORD_HEADER")

RECORD_HEADER = ",".join(RECORD_FIELDS)


def _as_int(field: str, raw) -> int:
    if isinstance(raw, bool):
        raise MalformedLineError(field, f"{field}: expected an integer, got {raw!r}")
    if isinstance(raw, int):
        return raw
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MalformedLineError(field, f"{field}: {raw!r} is not a number")
    if not math.isfinite(value) or value != int(value):
        raise MalformedLineError(field, f"{field}: {raw!r} is not an integer")
    return int(value)


def _as_float(field: str, raw) -> float:
    if isinstance(raw, bool):
        raise MalformedLineError(field, f"{field}: expected a number, got {raw!r}")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MalformedLineError(field, f"{field}: {raw!r} is not a number")
    if not math.isfinite(value):
        raise MalformedLineError(field, f"{field}: {raw!r} is not finite")
    return value


def _as_source(raw) -> Source:
    try:
        return Source(str(raw).strip().lower())
    except ValueError:
        raise MalformedLineError("source", f"source: {raw!r} is not one of {[s.value for s in Source]}")


def _build(values: dict) -> AisMessage:
    mmsi = _as_int("mmsi", values["mmsi"])
    timestamp = _as_int("timestamp", values["timestamp"])
    lat = _as_float("lat", values["lat"])
    lon = _as_float("lon", values["lon"])
    sog = _as_float("sog", values["sog"])
    cog = _as_float("cog", values["cog"])
    source = _as_source(values["source"]) if values.get("source") not in (None, "") else Source.UNKNOWN

    if timestamp < 0:
        raise FieldRangeError("timestamp", timestamp)
    return AisMessage(mmsi=mmsi, timestamp=timestamp, lat=lat, lon=lon, sog=sog, cog=cog, source=source)


def parse_record(line: str) -> AisMessage:
    """
    Parses `mmsi,timestamp,lat,lon,sog,cog[,source]` or a one-line JSON object
    with the same keys.
    """
    line = line.strip()
    if not line:
        raise MalformedLineError("line", "empty line")

    if line.startswith("{"):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLineError("line", f"invalid JSON: {e}")
        if not isinstance(obj, dict):
            raise MalformedLineError("line", "JSON record must be an object")
        for key in RECORD_FIELDS[:6]:
            if key not in obj:
                raise MalformedLineError(key, f"missing key {key!r}")
        return _build(obj)

    fields = [f.strip() for f in line.split(",")]
    if len(fields) not in (6, 7):
        raise MalformedLineError("line", f"expected 6 or 7 fields, got {len(fields)}")
    return _build(dict(zip(RECORD_FIELDS, fields)))


def render_record(msg: AisMessage) -> str:
    # repr keeps floats bit-exact through parse_record
    return (
        f"{msg.mmsi},{msg.timestamp},{msg.lat!r},{msg.lon!r},"
        f"{msg.sog!r},{msg.cog!r},{msg.source.value}"
    )


def read_records(path: Union[str, Path], strict: bool = False) -> Iterator[AisMessage]:
    """
    Yields messages from a CSV file. `#` comments, blank lines and a header
    row are skipped; bad lines are logged and skipped unless `strict`.
    """
    n_bad = 0
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#") or stripped.startswith("mmsi,"):
                continue
            try:
                yield parse_record(stripped)
            except (IngestError, FieldRangeError) as e:
                if strict:
                    raise
                n_bad += 1
                logger.warning(f"{Path(path).name}:{line_no}: skipped ({e})")
    if n_bad:
        logger.info(f"{Path(path).name}: {n_bad} malformed lines skipped")
