"""Great-circle distance, radius selection, and bounding boxes.

Distances use the haversine formula on a sphere with the mean Earth radius;
at reconnaissance scale (a few km) the difference from ellipsoidal geodesics
is far below a meter. Structure sets are small, so selection is a linear
scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .ingest import Dataset
from .model import GeoPoint, Region, StructureMetadata, ValidationError

EARTH_RADIUS_KM = 6371.0088


class EmptyRegionError(ValueError):
    """No structures fall inside the requested radius."""


@dataclass(frozen=True)
class BoundingBox:
    min_corner: GeoPoint
    max_corner: GeoPoint

    def __post_init__(self):
        if self.min_corner.lat > self.max_corner.lat:
            raise ValidationError("min_corner", "latitude above max_corner")
        if self.min_corner.lon > self.max_corner.lon:
            raise ValidationError("min_corner", "longitude above max_corner")

    def contains(self, point: GeoPoint) -> bool:
        return (
            self.min_corner.lat <= point.lat <= self.max_corner.lat
            and self.min_corner.lon <= point.lon <= self.max_corner.lon
        )


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in kilometers."""
    phi_a, phi_b = math.radians(a.lat), math.radians(b.lat)
    d_phi = phi_b - phi_a
    d_lambda = math.radians(b.lon - a.lon)
    h = math.sin(d_phi / 2) ** 2 + math.cos(phi_a) * math.cos(phi_b) * math.sin(d_lambda / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def select_in_radius(
    center: GeoPoint, radius_km: float, structures: Sequence[StructureMetadata]
) -> list[str]:
    """IDs of structures within radius_km of center, boundary inclusive.

    Sorted by distance ascending, ties broken by structure_id.
    """
    if radius_km < 0:
        raise ValueError(f"radius_km must be >= 0, got {radius_km}")
    hits = []
    for structure in structures:
        distance = haversine_km(center, structure.location)
        if distance <= radius_km:
            hits.append((distance, structure.structure_id))
    hits.sort()
    return [structure_id for _, structure_id in hits]


def bounding_box(points: Iterable[GeoPoint]) -> BoundingBox:
    """Componentwise min/max corners of a non-empty point set.

    Point sets spanning more than 180 degrees of longitude are rejected:
    they would wrap the antimeridian, which this axis-aligned box cannot
    represent.
    """
    points = list(points)
    if not points:
        raise ValueError("bounding_box requires at least one point")
    min_lat = min(p.lat for p in points)
    max_lat = max(p.lat for p in points)
    min_lon = min(p.lon for p in points)
    max_lon = max(p.lon for p in points)
    if max_lon - min_lon > 180.0:
        raise ValueError(
            f"longitude span {max_lon - min_lon:.4f} exceeds 180 degrees "
            "(antimeridian-crossing boxes unsupported)"
        )
    return BoundingBox(GeoPoint(min_lat, min_lon), GeoPoint(max_lat, max_lon))


def build_region(
    name: str, center: GeoPoint, radius_km: float, dataset: Dataset
) -> Region:
    """Select the dataset's structures within the radius into a named region."""
    member_ids = select_in_radius(center, radius_km, dataset.structures)
    if not member_ids:
        raise EmptyRegionError(
            f"no structures within {radius_km} km of ({center.lat}, {center.lon})"
        )
    return Region(
        region_name=name, center=center, radius_km=radius_km, member_ids=tuple(member_ids)
    )
