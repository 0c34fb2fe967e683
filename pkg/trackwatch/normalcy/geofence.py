import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, List, Tuple, Union

from loguru import logger
from shapely.geometry import Point, Polygon
from shapely.prepared import prep

from ..domain.common import AisMessage

__all__ = ("GeofenceZone", "geofence_check", "load_zones")


@dataclass(frozen=True)
class GeofenceZone:
    """A forbidden area. `polygon` is an open ring of (lat, lon) vertices."""

    name: str
    polygon: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        ring = tuple((float(lat), float(lon)) for lat, lon in self.polygon)
        if len(ring) >= 2 and ring[0] == ring[-1]:
            raise ValueError(f"zone {self.name!r}: ring must not repeat its first vertex")
        if len(ring) < 3:
            raise ValueError(f"zone {self.name!r}: need at least 3 vertices, got {len(ring)}")
        object.__setattr__(self, "polygon", ring)
        if not self.shape.is_valid:
            raise ValueError(f"zone {self.name!r}: polygon intersects itself")

    # prepared geometries do not pickle; rebuild them on the worker side
    def __getstate__(self):
        return {"name": self.name, "polygon": self.polygon}

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)

    @cached_property
    def shape(self) -> Polygon:
        return Polygon([(lon, lat) for lat, lon in self.polygon])

    @cached_property
    def _prepared(self):
        return prep(self.shape)

    def contains(self, lat: float, lon: float) -> bool:
        """Boundary points count as inside."""
        return self._prepared.covers(Point(lon, lat))


def geofence_check(msg: AisMessage, zones: Iterable[GeofenceZone]) -> List[str]:
    """Names of the zones the message position falls in."""
    return [zone.name for zone in zones if zone.contains(msg.lat, msg.lon)]


def load_zones(path: Union[str, Path]) -> List[GeofenceZone]:
    """
    Reads a GeoJSON FeatureCollection of Polygon features, each with a `name`
    property. Only the exterior ring is used; GeoJSON positions are (lon, lat).
    """
    with open(path, "r", encoding="utf-8") as f:
        collection = json.load(f)

    zones = []
    for i, feature in enumerate(collection.get("features", [])):
        geometry = feature.get("geometry") or {}
        if geometry.get("type") != "Polygon":
            logger.warning(f"{Path(path).name}: feature {i} is a {geometry.get('type')}, skipped.")
            continue
        name = (feature.get("properties") or {}).get("name", f"zone-{i}")
        exterior = [(lat, lon) for lon, lat, *_ in geometry["coordinates"][0]]
        if len(exterior) > 1 and exterior[0] == exterior[-1]:
            exterior = exterior[:-1]
        zones.append(GeofenceZone(name=name, polygon=tuple(exterior)))

    logger.info(f"Loaded {len(zones)} geofence zones from {path}.")
    return zones
