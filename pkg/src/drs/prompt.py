"""Prompt assembly for structure and regional report generation.

Each request is a two-part prompt: a fixed system message (task framing,
technical-word definitions, output rules) and a user message carrying the
goal instruction plus a deterministic text serialization of the input data.
The wording lives in versioned template files under ``templates/`` with
``{{name}}`` placeholders, so it can evolve without code changes.

When the serialized payload would blow the token budget, notes are dropped
first and floors are collapsed to aggregate count lines second; event and
metadata sections are never dropped.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from . import geo
from .extract import render_attribute_text
from .formatting import (
    format_date,
    format_decimal_degrees,
    stories_phrase,
)
from .ingest import format_dms
from .model import (
    DAMAGE_LEVEL_RANK,
    DamageLevel,
    EventMetadata,
    ImageObservation,
    Region,
    StructureDocument,
    StructureMetadata,
    ValidationError,
)

# Verbatim fragments every system message must carry, used by the bundle
# invariant check and by tests.
TASK_FRAGMENT = (
    "Act as a domain expert in structural engineering and earthquake engineering "
    "working on a project of post-earthquake reconnaissance and structural health "
    "condition evaluation."
)
METADATA_FRAGMENT = "Metadata: The general information of the event and the structures"
TONE_FRAGMENT = (
    "Make the tone formal, technical, and professional, and the generated summary "
    "in the form of a technical report."
)

# Header line introducing each embedded report in a regional user message.
REGION_HEADER_PREFIX = "## Report for structure "

NO_OBSERVATIONS_LINE = "No image observations recorded."
TRUNCATION_NOTICE = "[Input truncated to fit the prompt token budget.]"

DEFAULT_BUDGET_TOKENS = 8000
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 1024

_TEMPLATE_DIR = Path(__file__).parent / "templates"
_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")
_OBS_LINE_RE = re.compile(r"^Floor (\d+), .+: ")
_NOTE_SUFFIX_RE = re.compile(r" Note: .*$")
_LEVEL_WORD_RE = re.compile(r"\b(minor|moderate|heavy) damage level\b")


class PromptBudgetError(ValueError):
    """The protected sections alone do not fit the token budget."""


@dataclass(frozen=True)
class PromptBundle:
    """A ready-to-send prompt with its generation parameters."""

    system_message: str
    user_message: str
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValidationError("temperature", f"{self.temperature} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ValidationError("max_output_tokens", "must be positive")
        for name, fragment in (
            ("task description", TASK_FRAGMENT),
            ("technical-word explanations", METADATA_FRAGMENT),
            ("overall rules", TONE_FRAGMENT),
        ):
            if fragment not in self.system_message:
                raise ValidationError("system_message", f"missing the {name} section")


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (_TEMPLATE_DIR / name).read_text(encoding="utf-8")


def _fill(template: str, values: dict) -> str:
    def replace(match):
        key = match.group(1)
        if key not in values:
            raise ValueError(f"template placeholder '{key}' has no value")
        return str(values[key])

    return _PLACEHOLDER_RE.sub(replace, template)


def estimate_tokens(text: str) -> int:
    """Cheap tokenizer-free estimate: one token per four characters."""
    return math.ceil(len(text) / 4)


def build_system_message() -> str:
    """The fixed three-part system message, loaded from its template file."""
    return _template("system_message.txt")


def _one_line(text: str) -> str:
    # Free-text fields may carry newlines; the serialization grammar is one
    # line per record, so collapse them.
    return " ".join(text.split())


def _event_line(event: EventMetadata) -> str:
    magnitude = f"{event.magnitude:g}"
    parts = [
        f"Event: {_one_line(event.event_name)}",
        f"magnitude of {magnitude} (M{magnitude})",
        f"origin date {format_date(event.origin_date)}",
    ]
    if event.origin_time_local is not None:
        parts.append(f"local time {_one_line(event.origin_time_local)}")
    if event.epicenter_description is not None:
        parts.append(f"epicenter {_one_line(event.epicenter_description)}")
    if event.epicenter is not None:
        parts.append(
            "epicenter coordinates "
            f"{format_decimal_degrees(event.epicenter.lat)}, "
            f"{format_decimal_degrees(event.epicenter.lon)}"
        )
    return ", ".join(parts) + "."


def _optional(value) -> str:
    return _one_line(value) if value is not None else "not recorded"


def _metadata_lines(m: StructureMetadata) -> list[str]:
    footprint = f"{m.footprint_area_sqft:g}" if m.footprint_area_sqft is not None else "not recorded"
    last_updated = format_date(m.last_updated) if m.last_updated is not None else "not recorded"
    return [
        f"  Structure ID: {_one_line(m.structure_id)}",
        f"  Name: {_one_line(m.name)}",
        f"  Address: {_one_line(m.address)}",
        f"  Latitude: {format_decimal_degrees(m.location.lat)} ({format_dms(m.location.lat, 'lat')})",
        f"  Longitude: {format_decimal_degrees(m.location.lon)} ({format_dms(m.location.lon, 'lon')})",
        f"  Structure type: {_one_line(m.structure_type)}",
        f"  Stories: {m.stories} ({stories_phrase(m.stories)})",
        f"  Construction: {_one_line(m.construction)}",
        f"  Occupancy: {_one_line(m.occupancy)}",
        f"  Footprint area (sq ft): {footprint}",
        f"  Overall rating: {m.overall_rating.value.capitalize()}",
        f"  Functionality: {_optional(m.functionality)}",
        f"  Inspection team: {_one_line(m.inspection_team)}",
        f"  Contributor: {_one_line(m.contributor)}",
        f"  Inspected date: {format_date(m.inspected_date)}",
        f"  Last updated: {last_updated}",
        f"  Assessor comments: {_optional(m.assessor_comments)}",
    ]


def _observation_line(obs: ImageObservation) -> str:
    attrs_text = (
        render_attribute_text(obs.attributes)
        if obs.attributes is not None else "attributes unavailable"
    )
    label = _one_line(obs.component_label or obs.image_id)
    prefix = f"Floor {obs.floor}, {label}" if obs.floor is not None else f"System, {label}"
    line = f"{prefix}: {attrs_text}"
    if obs.note is not None:
        line += f" Note: {_one_line(obs.note)}"
    return line


def serialize_document(doc: StructureDocument) -> str:
    """Deterministic text block for one structure: event, metadata, observations.

    Coordinates appear in both decimal and DMS notation, and the metadata
    section lists every field (absent optionals as "not recorded"), so the
    model sees everything a rendered report sidebar will show.
    """
    lines = [_event_line(doc.event), "Structure metadata:"]
    lines.extend(_metadata_lines(doc.metadata))
    for obs in doc.system_observations:
        lines.append(_observation_line(obs))
    for group in doc.floors:
        for obs in group.observations:
            lines.append(_observation_line(obs))
    if not doc.system_observations and not doc.floors:
        lines.append(NO_OBSERVATIONS_LINE)
    return "\n".join(lines)


def build_structure_prompt(
    doc: StructureDocument,
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> PromptBundle:
    """Assemble the individual-structure prompt for one merged document."""
    user_message = _fill(
        _template("structure_goal.txt"), {"document": serialize_document(doc)}
    )
    user_message = truncate_to_budget(user_message, budget_tokens)
    return PromptBundle(
        system_message=build_system_message(),
        user_message=user_message,
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


def format_corner_pair(box: geo.BoundingBox) -> str:
    """Bounding corners as '17.9998, -66.6204 to 18.0074, -66.6125'."""
    return (
        f"{box.min_corner.lat:.4f}, {box.min_corner.lon:.4f} to "
        f"{box.max_corner.lat:.4f}, {box.max_corner.lon:.4f}"
    )


def build_region_prompt(
    region: Region,
    structures: Sequence[StructureMetadata],
    individual_reports: Sequence[str],
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> PromptBundle:
    """Assemble the regional prompt from the members' generated reports.

    ``structures`` and ``individual_reports`` must both line up one-to-one
    with ``region.member_ids`` in order; the structures supply the member
    coordinates for the bounding-box statement and the header names.
    """
    if len(individual_reports) != len(region.member_ids):
        raise ValueError(
            f"{len(individual_reports)} reports for {len(region.member_ids)} members"
        )
    given = [s.structure_id for s in structures]
    if given != list(region.member_ids):
        raise ValueError(
            f"structures {given} do not match region members {list(region.member_ids)}"
        )
    box = geo.bounding_box([s.location for s in structures])
    blocks = []
    for structure, report in zip(structures, individual_reports):
        blocks.append(
            f"{REGION_HEADER_PREFIX}{structure.structure_id}: {structure.name}\n\n"
            f"{report.strip()}"
        )
    user_message = _fill(
        _template("region_goal.txt"),
        {
            "count": len(structures),
            "region_name": region.region_name,
            "bbox": format_corner_pair(box),
            "reports": "\n\n".join(blocks),
        },
    )
    user_message = truncate_to_budget(user_message, budget_tokens)
    return PromptBundle(
        system_message=build_system_message(),
        user_message=user_message,
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


def _worst_level_word(lines: Sequence[str]) -> str:
    worst = DamageLevel.UNDAMAGED
    for line in lines:
        for word in _LEVEL_WORD_RE.findall(line):
            level = DamageLevel(word)
            if DAMAGE_LEVEL_RANK[level] > DAMAGE_LEVEL_RANK[worst]:
                worst = level
    return worst.value


def truncate_to_budget(text: str, budget_tokens: int) -> str:
    """Shrink a user message to the token budget, least important parts first.

    Reduction order: per-observation note texts, then each floor collapsed to
    one aggregate count line. The goal instruction, event line, and metadata
    section are never dropped; if they alone exceed the budget this raises
    :class:`PromptBudgetError`. A notice line is appended whenever anything
    was removed.
    """
    if budget_tokens < 256:
        raise ValueError(f"budget_tokens must be at least 256, got {budget_tokens}")
    if estimate_tokens(text) <= budget_tokens:
        return text

    lines = [_NOTE_SUFFIX_RE.sub("", line) for line in text.split("\n")]
    candidate = "\n".join(lines + [TRUNCATION_NOTICE])
    if estimate_tokens(candidate) <= budget_tokens:
        return candidate

    # Collapse each floor's observation lines into one aggregate line, kept
    # at the position of the floor's first line.
    floor_lines: dict[str, list[str]] = {}
    skeleton: list[tuple[str, str]] = []  # (kind, payload)
    for line in lines:
        match = _OBS_LINE_RE.match(line)
        if match:
            floor = match.group(1)
            if floor not in floor_lines:
                skeleton.append(("floor", floor))
            floor_lines.setdefault(floor, []).append(line)
        else:
            skeleton.append(("line", line))
    collapsed = []
    for kind, payload in skeleton:
        if kind == "line":
            collapsed.append(payload)
        else:
            group = floor_lines[payload]
            collapsed.append(
                f"Floor {payload}: {len(group)} observations, "
                f"worst damage level {_worst_level_word(group)}"
            )
    candidate = "\n".join(collapsed + [TRUNCATION_NOTICE])
    if estimate_tokens(candidate) <= budget_tokens:
        return candidate
    raise PromptBudgetError(
        f"protected content needs {estimate_tokens(candidate)} tokens, "
        f"budget is {budget_tokens}"
    )
