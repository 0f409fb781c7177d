"""Domain types shared across the reconnaissance reporting pipeline.

Every type here is an immutable value object: construction runs the
cross-field checks and raises :class:`ValidationError` naming the offending
field, and instances with equal fields compare equal. Collections are stored
as tuples so instances are hashable-by-parts and safe to share between
threads.

Coordinates are decimal degrees kept as floats, which preserves well beyond
six decimal digits. Floor numbering starts at 1 for the first story; exterior
or whole-building imagery uses ``Scope.SYSTEM`` and carries no floor.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, fields
from enum import Enum
from typing import Optional


class ValidationError(ValueError):
    """An invariant violation, carrying the name of the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class OverallRating(Enum):
    """Investigator-assigned whole-structure damage rating."""

    NONE = "none"
    MINOR = "minor"
    MODERATE = "moderate"
    SEVERE = "severe"


class DamageState(Enum):
    DAMAGED = "damaged"
    UNDAMAGED = "undamaged"


class Spalling(Enum):
    SPALLING = "spalling"
    NO_SPALLING = "no_spalling"


class Material(Enum):
    CONCRETE = "concrete"
    STEEL = "steel"
    MASONRY = "masonry"
    OTHER = "other"


class CollapseMode(Enum):
    NON_COLLAPSE = "non_collapse"
    PARTIAL_COLLAPSE = "partial_collapse"
    GLOBAL_COLLAPSE = "global_collapse"


class ComponentType(Enum):
    BEAM = "beam"
    COLUMN = "column"
    WALL = "wall"
    JOINT = "joint"
    OTHER = "other"


class DamageLevel(Enum):
    UNDAMAGED = "undamaged"
    MINOR = "minor"
    MODERATE = "moderate"
    HEAVY = "heavy"


class DamageType(Enum):
    FLEXURAL = "flexural"
    SHEAR = "shear"
    COMBINED = "combined"
    OTHER = "other"


class Scope(Enum):
    SYSTEM = "system"
    COMPONENT = "component"


# Severity ordering used for threshold counting and "worst level" summaries.
DAMAGE_LEVEL_RANK = {
    DamageLevel.UNDAMAGED: 0,
    DamageLevel.MINOR: 1,
    DamageLevel.MODERATE: 2,
    DamageLevel.HEAVY: 3,
}


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError("lat", f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError("lon", f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class EventMetadata:
    """General information about the disaster event."""

    event_name: str
    magnitude: float
    origin_date: dt.date
    origin_time_local: Optional[str] = None
    epicenter_description: Optional[str] = None
    epicenter: Optional[GeoPoint] = None

    def __post_init__(self):
        if not self.event_name.strip():
            raise ValidationError("event_name", "must be non-empty")
        if not 0.0 < self.magnitude <= 10.0:
            raise ValidationError("magnitude", f"{self.magnitude} outside (0, 10]")


@dataclass(frozen=True)
class StructureMetadata:
    """Per-structure record collected by the investigation team.

    ``structure_id`` uniqueness is a dataset-level rule enforced at ingest;
    here only per-record constraints are checked.
    """

    structure_id: str
    name: str
    address: str
    location: GeoPoint
    structure_type: str
    stories: int
    construction: str
    occupancy: str
    overall_rating: OverallRating
    inspection_team: str
    contributor: str
    inspected_date: dt.date
    footprint_area_sqft: Optional[float] = None
    functionality: Optional[str] = None
    last_updated: Optional[dt.date] = None
    assessor_comments: Optional[str] = None

    def __post_init__(self):
        if not self.structure_id.strip():
            raise ValidationError("structure_id", "must be non-empty")
        if self.stories < 1:
            raise ValidationError("stories", f"{self.stories} is below 1")
        if self.footprint_area_sqft is not None and self.footprint_area_sqft <= 0:
            raise ValidationError(
                "footprint_area_sqft", f"{self.footprint_area_sqft} is not positive"
            )


@dataclass(frozen=True)
class AttributeSet:
    """The seven structural attributes extracted from one image.

    Any attribute a backend did not produce is absent (``None``); there is no
    "unknown" label. An undamaged state is inconsistent with a non-trivial
    damage level or a damage type.
    """

    damage_state: Optional[DamageState] = None
    spalling: Optional[Spalling] = None
    material: Optional[Material] = None
    collapse_mode: Optional[CollapseMode] = None
    component_type: Optional[ComponentType] = None
    damage_level: Optional[DamageLevel] = None
    damage_type: Optional[DamageType] = None

    def __post_init__(self):
        conflicts = attribute_conflicts(self)
        if conflicts:
            raise ValidationError(*conflicts[0])

    def is_empty(self) -> bool:
        return all(getattr(self, f.name) is None for f in fields(self))


def attribute_conflicts(attrs: AttributeSet) -> list[tuple[str, str]]:
    """Return all (field, message) consistency violations in an attribute set.

    Used both by the constructor (raise on first) and by dataset validation
    (collect all).
    """
    found = []
    if attrs.damage_state is DamageState.UNDAMAGED:
        if attrs.damage_level not in (None, DamageLevel.UNDAMAGED):
            found.append(
                (
                    "damage_level",
                    f"'{attrs.damage_level.value}' conflicts with undamaged state",
                )
            )
        if attrs.damage_type is not None:
            found.append(
                (
                    "damage_type",
                    f"'{attrs.damage_type.value}' conflicts with undamaged state",
                )
            )
    return found


@dataclass(frozen=True)
class ImageObservation:
    """One photograph of a structure or component, with optional attributes.

    ``attributes`` stays absent until extraction fills it. Component-scope
    observations must carry the floor they were taken on (1 = first story).
    """

    image_id: str
    image_uri: str
    structure_id: str
    scope: Scope
    floor: Optional[int] = None
    component_label: Optional[str] = None
    captured_at: Optional[dt.datetime] = None
    note: Optional[str] = None
    attributes: Optional[AttributeSet] = None

    def __post_init__(self):
        if not self.image_id.strip():
            raise ValidationError("image_id", "must be non-empty")
        if self.scope is Scope.COMPONENT:
            if self.floor is None:
                raise ValidationError("floor", "required for component-scope observations")
            if self.floor < 1:
                raise ValidationError("floor", f"{self.floor} is below 1")
        elif self.floor is not None:
            raise ValidationError("floor", "must be absent for system-scope observations")


@dataclass(frozen=True)
class FloorGroup:
    """All component-scope observations taken on one floor."""

    floor: int
    observations: tuple[ImageObservation, ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        if self.floor < 1:
            raise ValidationError("floor", f"{self.floor} is below 1")
        for obs in self.observations:
            if obs.scope is not Scope.COMPONENT:
                raise ValidationError(
                    "observations", f"'{obs.image_id}' is not component-scope"
                )
            if obs.floor != self.floor:
                raise ValidationError(
                    "observations",
                    f"'{obs.image_id}' is on floor {obs.floor}, group is floor {self.floor}",
                )


@dataclass(frozen=True)
class StructureDocument:
    """Merged record for one structure: event, metadata, grouped observations."""

    event: EventMetadata
    metadata: StructureMetadata
    system_observations: tuple[ImageObservation, ...]
    floors: tuple[FloorGroup, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "system_observations", tuple(self.system_observations)
        )
        object.__setattr__(self, "floors", tuple(self.floors))
        indices = [group.floor for group in self.floors]
        if indices != sorted(set(indices)):
            raise ValidationError("floors", f"floor indices {indices} not strictly ascending")
        for obs in self.system_observations:
            if obs.scope is not Scope.SYSTEM:
                raise ValidationError(
                    "system_observations", f"'{obs.image_id}' is not system-scope"
                )
        for obs in self.all_observations():
            if obs.structure_id != self.metadata.structure_id:
                raise ValidationError(
                    "structure_id",
                    f"observation '{obs.image_id}' belongs to '{obs.structure_id}', "
                    f"not '{self.metadata.structure_id}'",
                )

    def all_observations(self) -> tuple[ImageObservation, ...]:
        """Every observation in document order: system first, then floors ascending."""
        flat = list(self.system_observations)
        for group in self.floors:
            flat.extend(group.observations)
        return tuple(flat)


@dataclass(frozen=True)
class Region:
    """A named set of structures selected by radius around a center point."""

    region_name: str
    center: GeoPoint
    radius_km: float
    member_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "member_ids", tuple(self.member_ids))
        if not self.region_name.strip():
            raise ValidationError("region_name", "must be non-empty")
        if self.radius_km <= 0:
            raise ValidationError("radius_km", f"{self.radius_km} is not positive")
        if not self.member_ids:
            raise ValidationError("member_ids", "must be non-empty")
