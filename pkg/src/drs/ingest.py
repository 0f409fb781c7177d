"""Input parsing, coordinate conversion, dataset validation, and merging.

The canonical input is three files: ``event.json`` (one object),
``structures.jsonl`` and ``observations.jsonl`` (one record per line). Keys
are snake_case and match the domain type fields exactly; unknown keys are
rejected so field-name typos surface instead of silently dropping data.
Coordinates may be given as decimal degrees or as DMS strings and are
normalized to decimal internally.

Merging regroups each structure's observations by floor, producing one
:class:`~drs.model.StructureDocument` per structure.
"""

from __future__ import annotations

import datetime as dt
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from .model import (
    AttributeSet,
    CollapseMode,
    ComponentType,
    DamageLevel,
    DamageState,
    DamageType,
    EventMetadata,
    FloorGroup,
    GeoPoint,
    ImageObservation,
    Material,
    OverallRating,
    Scope,
    Spalling,
    StructureDocument,
    StructureMetadata,
    ValidationError,
    attribute_conflicts,
)

__all__ = [
    "Dataset",
    "DatasetError",
    "DmsError",
    "Issue",
    "Severity",
    "ValidationReport",
    "attribute_set_to_record",
    "format_dms",
    "load_dataset",
    "merge_documents",
    "observation_to_record",
    "parse_attribute_record",
    "parse_dms",
    "scan_dataset",
    "validate",
]


class DmsError(ValueError):
    """A DMS coordinate string that cannot be converted."""


@dataclass(frozen=True)
class Dataset:
    """One loaded input set: the event plus all structures and observations."""

    event: EventMetadata
    structures: tuple[StructureMetadata, ...]
    observations: tuple[ImageObservation, ...]

    def __post_init__(self):
        object.__setattr__(self, "structures", tuple(self.structures))
        object.__setattr__(self, "observations", tuple(self.observations))
        known = {s.structure_id for s in self.structures}
        for obs in self.observations:
            if obs.structure_id not in known:
                raise ValidationError(
                    "observations",
                    f"observation '{obs.image_id}' references unknown structure "
                    f"'{obs.structure_id}'",
                )


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Issue:
    severity: Severity
    record_ref: str
    message: str

    def __str__(self):
        return f"{self.severity.value.upper()} {self.record_ref}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    """All problems found in a dataset; empty means fully accepted."""

    issues: tuple[Issue, ...]

    def __post_init__(self):
        object.__setattr__(self, "issues", tuple(self.issues))

    @property
    def errors(self) -> tuple[Issue, ...]:
        return tuple(i for i in self.issues if i.severity is Severity.ERROR)

    @property
    def warnings(self) -> tuple[Issue, ...]:
        return tuple(i for i in self.issues if i.severity is Severity.WARNING)

    @property
    def ok(self) -> bool:
        """True when no error-severity issues are present (warnings allowed)."""
        return not self.errors


class DatasetError(Exception):
    """Raised when a dataset cannot be loaded or fails validation."""

    def __init__(self, report: ValidationReport):
        self.report = report
        summary = "; ".join(str(i) for i in report.errors) or "no dataset"
        super().__init__(summary)


_DMS_RE = re.compile(
    r"""^\s*(\d{1,3})\s*°\s*(\d{1,2})\s*'\s*(\d{1,2}(?:\.\d+)?)\s*"\s*([NSEW])\s*$"""
)
_HEMISPHERE_AXIS = {"N": "lat", "S": "lat", "E": "lon", "W": "lon"}
_AXIS_MAX = {"lat": 90.0, "lon": 180.0}


def parse_dms(text: str, axis: Optional[str] = None) -> float:
    """Convert a ``D° M' S.ss" H`` string to signed decimal degrees.

    ``axis`` ("lat" or "lon"), when known, rejects a hemisphere letter from
    the wrong axis. South and west values come back negative.
    """
    match = _DMS_RE.match(text)
    if not match:
        raise DmsError(f"malformed DMS coordinate: {text!r}")
    degrees, minutes, hemisphere = int(match.group(1)), int(match.group(2)), match.group(4)
    seconds = float(match.group(3))
    if minutes >= 60:
        raise DmsError(f"minutes {minutes} outside [0, 60) in {text!r}")
    if seconds >= 60:
        raise DmsError(f"seconds {seconds} outside [0, 60) in {text!r}")
    letter_axis = _HEMISPHERE_AXIS[hemisphere]
    if axis is not None:
        if axis not in _AXIS_MAX:
            raise ValueError(f"axis must be 'lat' or 'lon', got {axis!r}")
        if axis != letter_axis:
            raise DmsError(f"hemisphere {hemisphere!r} is not a {axis} hemisphere")
    value = degrees + minutes / 60.0 + seconds / 3600.0
    if value > _AXIS_MAX[letter_axis]:
        raise DmsError(f"{value} exceeds the {letter_axis} range in {text!r}")
    return -value if hemisphere in ("S", "W") else value


def format_dms(value: float, axis: str) -> str:
    """Render decimal degrees as ``D° M' S.ss" H`` with two-decimal seconds.

    Round-trips through :func:`parse_dms` within 2e-6 degrees (half a
    centisecond of arc). Zero takes the N/E hemisphere.
    """
    if axis not in _AXIS_MAX:
        raise ValueError(f"axis must be 'lat' or 'lon', got {axis!r}")
    if abs(value) > _AXIS_MAX[axis]:
        raise ValueError(f"{value} outside the {axis} range")
    if axis == "lat":
        hemisphere = "S" if value < 0 else "N"
    else:
        hemisphere = "W" if value < 0 else "E"
    # Integer centiseconds of arc, so the carry into minutes/degrees is exact.
    total_cs = round(abs(value) * 360000)
    degrees, rest = divmod(total_cs, 360000)
    minutes, seconds_cs = divmod(rest, 6000)
    return f"{degrees}° {minutes}' {seconds_cs / 100:.2f}\" {hemisphere}"


# --- strict record parsing -------------------------------------------------

_EVENT_REQUIRED = {"event_name", "magnitude", "origin_date"}
_EVENT_OPTIONAL = {"origin_time_local", "epicenter_description", "epicenter"}
_STRUCTURE_REQUIRED = {
    "structure_id", "name", "address", "location", "structure_type", "stories",
    "construction", "occupancy", "overall_rating", "inspection_team",
    "contributor", "inspected_date",
}
_STRUCTURE_OPTIONAL = {
    "footprint_area_sqft", "functionality", "last_updated", "assessor_comments",
}
_OBSERVATION_REQUIRED = {"image_id", "image_uri", "structure_id", "scope"}
_OBSERVATION_OPTIONAL = {"floor", "component_label", "captured_at", "note", "attributes"}

_ATTRIBUTE_ENUMS = {
    "damage_state": DamageState,
    "spalling": Spalling,
    "material": Material,
    "collapse_mode": CollapseMode,
    "component_type": ComponentType,
    "damage_level": DamageLevel,
    "damage_type": DamageType,
}


def _check_keys(record: dict, required: set, optional: set) -> None:
    unknown = set(record) - required - optional
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown key")
    missing = required - set(record)
    if missing:
        raise ValidationError(sorted(missing)[0], "missing required field")


def _as_str(value, field: str) -> str:
    if not isinstance(value, str):
        raise ValidationError(field, f"expected string, got {type(value).__name__}")
    return value


def _as_int(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(field, f"expected integer, got {type(value).__name__}")
    return value


def _as_number(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(field, f"expected number, got {type(value).__name__}")
    return float(value)


def _as_date(value, field: str) -> dt.date:
    try:
        return dt.date.fromisoformat(_as_str(value, field))
    except ValueError as exc:
        raise ValidationError(field, f"invalid ISO date: {value!r}") from exc


def _as_timestamp(value, field: str) -> dt.datetime:
    try:
        return dt.datetime.fromisoformat(_as_str(value, field))
    except ValueError as exc:
        raise ValidationError(field, f"invalid ISO timestamp: {value!r}") from exc


def _as_enum(enum_cls, value, field: str):
    try:
        return enum_cls(_as_str(value, field))
    except ValueError as exc:
        known = ", ".join(member.value for member in enum_cls)
        raise ValidationError(field, f"unknown label {value!r} (expected one of: {known})") from exc


def _parse_location(value, field: str) -> GeoPoint:
    if not isinstance(value, dict):
        raise ValidationError(field, "expected an object")
    keys = set(value)
    if keys == {"lat", "lon"}:
        return GeoPoint(_as_number(value["lat"], "lat"), _as_number(value["lon"], "lon"))
    if keys == {"lat_dms", "lon_dms"}:
        try:
            return GeoPoint(
                parse_dms(_as_str(value["lat_dms"], "lat_dms"), axis="lat"),
                parse_dms(_as_str(value["lon_dms"], "lon_dms"), axis="lon"),
            )
        except DmsError as exc:
            raise ValidationError(field, str(exc)) from exc
    raise ValidationError(
        field, "expected keys {lat, lon} or {lat_dms, lon_dms}, got " + str(sorted(keys))
    )


def parse_attribute_record(record) -> AttributeSet:
    """Parse an attribute record (manifest entry, wire response, or inline).

    Strict: unknown keys and labels outside the closed enums are rejected,
    never coerced.
    """
    if not isinstance(record, dict):
        raise ValidationError("attributes", "expected an object")
    _check_keys(record, set(), set(_ATTRIBUTE_ENUMS))
    kwargs = {}
    for key, enum_cls in _ATTRIBUTE_ENUMS.items():
        if record.get(key) is not None:
            kwargs[key] = _as_enum(enum_cls, record[key], key)
    return AttributeSet(**kwargs)


def attribute_set_to_record(attrs: AttributeSet) -> dict:
    """Inverse of :func:`parse_attribute_record`; absent fields are omitted."""
    record = {}
    for key in _ATTRIBUTE_ENUMS:
        value = getattr(attrs, key)
        if value is not None:
            record[key] = value.value
    return record


def _parse_event(record) -> EventMetadata:
    if not isinstance(record, dict):
        raise ValidationError("event", "expected an object")
    _check_keys(record, _EVENT_REQUIRED, _EVENT_OPTIONAL)
    return EventMetadata(
        event_name=_as_str(record["event_name"], "event_name"),
        magnitude=_as_number(record["magnitude"], "magnitude"),
        origin_date=_as_date(record["origin_date"], "origin_date"),
        origin_time_local=(
            _as_str(record["origin_time_local"], "origin_time_local")
            if record.get("origin_time_local") is not None else None
        ),
        epicenter_description=(
            _as_str(record["epicenter_description"], "epicenter_description")
            if record.get("epicenter_description") is not None else None
        ),
        epicenter=(
            _parse_location(record["epicenter"], "epicenter")
            if record.get("epicenter") is not None else None
        ),
    )


def _parse_structure(record) -> StructureMetadata:
    if not isinstance(record, dict):
        raise ValidationError("structure", "expected an object")
    _check_keys(record, _STRUCTURE_REQUIRED, _STRUCTURE_OPTIONAL)
    return StructureMetadata(
        structure_id=_as_str(record["structure_id"], "structure_id"),
        name=_as_str(record["name"], "name"),
        address=_as_str(record["address"], "address"),
        location=_parse_location(record["location"], "location"),
        structure_type=_as_str(record["structure_type"], "structure_type"),
        stories=_as_int(record["stories"], "stories"),
        construction=_as_str(record["construction"], "construction"),
        occupancy=_as_str(record["occupancy"], "occupancy"),
        overall_rating=_as_enum(OverallRating, record["overall_rating"], "overall_rating"),
        inspection_team=_as_str(record["inspection_team"], "inspection_team"),
        contributor=_as_str(record["contributor"], "contributor"),
        inspected_date=_as_date(record["inspected_date"], "inspected_date"),
        footprint_area_sqft=(
            _as_number(record["footprint_area_sqft"], "footprint_area_sqft")
            if record.get("footprint_area_sqft") is not None else None
        ),
        functionality=(
            _as_str(record["functionality"], "functionality")
            if record.get("functionality") is not None else None
        ),
        last_updated=(
            _as_date(record["last_updated"], "last_updated")
            if record.get("last_updated") is not None else None
        ),
        assessor_comments=(
            _as_str(record["assessor_comments"], "assessor_comments")
            if record.get("assessor_comments") is not None else None
        ),
    )


def _parse_observation(record) -> ImageObservation:
    if not isinstance(record, dict):
        raise ValidationError("observation", "expected an object")
    _check_keys(record, _OBSERVATION_REQUIRED, _OBSERVATION_OPTIONAL)
    return ImageObservation(
        image_id=_as_str(record["image_id"], "image_id"),
        image_uri=_as_str(record["image_uri"], "image_uri"),
        structure_id=_as_str(record["structure_id"], "structure_id"),
        scope=_as_enum(Scope, record["scope"], "scope"),
        floor=(_as_int(record["floor"], "floor") if record.get("floor") is not None else None),
        component_label=(
            _as_str(record["component_label"], "component_label")
            if record.get("component_label") is not None else None
        ),
        captured_at=(
            _as_timestamp(record["captured_at"], "captured_at")
            if record.get("captured_at") is not None else None
        ),
        note=(_as_str(record["note"], "note") if record.get("note") is not None else None),
        attributes=(
            parse_attribute_record(record["attributes"])
            if record.get("attributes") is not None else None
        ),
    )


def observation_to_record(obs: ImageObservation) -> dict:
    """Serialize an observation back to its JSONL record shape."""
    record = {
        "image_id": obs.image_id,
        "image_uri": obs.image_uri,
        "structure_id": obs.structure_id,
        "scope": obs.scope.value,
    }
    if obs.floor is not None:
        record["floor"] = obs.floor
    if obs.component_label is not None:
        record["component_label"] = obs.component_label
    if obs.captured_at is not None:
        record["captured_at"] = obs.captured_at.isoformat()
    if obs.note is not None:
        record["note"] = obs.note
    if obs.attributes is not None:
        record["attributes"] = attribute_set_to_record(obs.attributes)
    return record


# --- dataset loading -------------------------------------------------------


def scan_dataset(
    event_file, structures_file, observations_file
) -> tuple[Optional[Dataset], ValidationReport]:
    """Parse the three input files, collecting every problem found.

    Returns the dataset (or None when it cannot be assembled) together with
    a report listing all schema violations, duplicates, and dangling
    references.
    """
    issues: list[Issue] = []
    event = _scan_event(Path(event_file), issues)
    structures = _scan_jsonl(Path(structures_file), _parse_structure, issues)
    observations = _scan_jsonl(Path(observations_file), _parse_observation, issues)

    seen_structures: set[str] = set()
    for lineno, structure in structures:
        if structure.structure_id in seen_structures:
            issues.append(Issue(
                Severity.ERROR,
                f"{Path(structures_file).name}:{lineno}",
                f"duplicate structure_id '{structure.structure_id}'",
            ))
        seen_structures.add(structure.structure_id)
    seen_images: set[str] = set()
    for lineno, obs in observations:
        ref = f"{Path(observations_file).name}:{lineno}"
        if obs.image_id in seen_images:
            issues.append(Issue(Severity.ERROR, ref, f"duplicate image_id '{obs.image_id}'"))
        seen_images.add(obs.image_id)
        if obs.structure_id not in seen_structures:
            issues.append(Issue(
                Severity.ERROR, ref,
                f"observation '{obs.image_id}' references unknown structure "
                f"'{obs.structure_id}'",
            ))

    report = ValidationReport(tuple(issues))
    if event is None or report.errors:
        return None, report
    dataset = Dataset(
        event=event,
        structures=tuple(s for _, s in structures),
        observations=tuple(o for _, o in observations),
    )
    return dataset, report


def load_dataset(event_file, structures_file, observations_file) -> Dataset:
    """Load and fully validate the three-file input, raising on any error."""
    dataset, report = scan_dataset(event_file, structures_file, observations_file)
    if dataset is None:
        raise DatasetError(report)
    return dataset


def _scan_event(path: Path, issues: list[Issue]) -> Optional[EventMetadata]:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        issues.append(Issue(Severity.ERROR, str(path), "file not found"))
        return None
    except json.JSONDecodeError as exc:
        issues.append(Issue(Severity.ERROR, path.name, f"invalid JSON: {exc}"))
        return None
    try:
        return _parse_event(raw)
    except ValidationError as exc:
        issues.append(Issue(Severity.ERROR, path.name, str(exc)))
        return None


def _scan_jsonl(path: Path, parse, issues: list[Issue]) -> list[tuple[int, object]]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        issues.append(Issue(Severity.ERROR, str(path), "file not found"))
        return []
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        ref = f"{path.name}:{lineno}"
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(Issue(Severity.ERROR, ref, f"invalid JSON: {exc}"))
            continue
        try:
            records.append((lineno, parse(raw)))
        except ValidationError as exc:
            issues.append(Issue(Severity.ERROR, ref, str(exc)))
    return records


# --- dataset validation and merging ----------------------------------------


def validate(dataset: Dataset) -> ValidationReport:
    """Re-check every model invariant plus referential and plausibility rules.

    Constructed types already enforce their own invariants, so on a freshly
    loaded dataset this reports only warnings (a floor above the story count,
    structures with no observations); the full re-check guards against
    records built outside the constructors. Never mutates its input.
    """
    issues: list[Issue] = []
    stories: dict[str, int] = {}
    seen_structures: set[str] = set()
    for s in dataset.structures:
        ref = s.structure_id
        if s.structure_id in seen_structures:
            issues.append(Issue(Severity.ERROR, ref, "duplicate structure_id"))
        seen_structures.add(s.structure_id)
        stories[s.structure_id] = s.stories
        if s.stories < 1:
            issues.append(Issue(Severity.ERROR, ref, f"stories: {s.stories} is below 1"))

    observed: set[str] = set()
    seen_images: set[str] = set()
    for o in dataset.observations:
        ref = o.image_id
        if o.image_id in seen_images:
            issues.append(Issue(Severity.ERROR, ref, "duplicate image_id"))
        seen_images.add(o.image_id)
        observed.add(o.structure_id)
        if o.structure_id not in stories:
            issues.append(Issue(
                Severity.ERROR, ref, f"references unknown structure '{o.structure_id}'"
            ))
        if o.scope is Scope.SYSTEM and o.floor is not None:
            issues.append(Issue(
                Severity.ERROR, ref, "floor: must be absent for system-scope observations"
            ))
        if o.scope is Scope.COMPONENT:
            if o.floor is None:
                issues.append(Issue(Severity.ERROR, ref, "floor: required for component scope"))
            elif o.floor < 1:
                issues.append(Issue(Severity.ERROR, ref, f"floor: {o.floor} is below 1"))
            elif o.structure_id in stories and o.floor > stories[o.structure_id]:
                issues.append(Issue(
                    Severity.WARNING, ref,
                    f"floor {o.floor} exceeds the structure's {stories[o.structure_id]} stories",
                ))
        if o.attributes is not None:
            for field_name, message in attribute_conflicts(o.attributes):
                issues.append(Issue(Severity.ERROR, ref, f"{field_name}: {message}"))

    for s in dataset.structures:
        if s.structure_id not in observed:
            issues.append(Issue(
                Severity.WARNING, s.structure_id, "structure has no observations"
            ))
    return ValidationReport(tuple(issues))


def _observation_order(obs: ImageObservation) -> tuple[str, str]:
    return (obs.component_label or "", obs.image_id)


def merge_documents(dataset: Dataset) -> list[StructureDocument]:
    """Merge metadata and observations into one document per structure.

    Component observations are grouped into floors sorted ascending;
    within a floor (and among system observations) ordering is lexicographic
    by (component_label, image_id) so downstream prompts and reports are
    deterministic. The observation multiset is conserved per structure.
    """
    report = validate(dataset)
    if report.errors:
        raise DatasetError(report)
    documents = []
    for structure in dataset.structures:
        mine = [o for o in dataset.observations if o.structure_id == structure.structure_id]
        system = sorted(
            (o for o in mine if o.scope is Scope.SYSTEM), key=_observation_order
        )
        by_floor: dict[int, list[ImageObservation]] = {}
        for obs in mine:
            if obs.scope is Scope.COMPONENT:
                by_floor.setdefault(obs.floor, []).append(obs)
        floors = tuple(
            FloorGroup(floor, tuple(sorted(group, key=_observation_order)))
            for floor, group in sorted(by_floor.items())
        )
        documents.append(StructureDocument(
            event=dataset.event,
            metadata=structure,
            system_observations=tuple(system),
            floors=floors,
        ))
    return documents
