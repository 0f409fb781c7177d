"""Summary statistics, report artifacts, and pipeline orchestration.

Reports are written as Markdown with a front-matter-style sidebar block so
two runs over the same inputs diff cleanly. Regional reports additionally
emit their building markers as a GeoJSON FeatureCollection (WGS84, lon-lat
order) that any GIS tool can display. Every run writes a machine-readable
``run_manifest.json`` recording inputs, configuration hash, outputs, and
failures.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import geo
from .extract import ExtractorBackendConfig, extract_all
from .formatting import format_date, format_magnitude, stories_phrase
from .ingest import Dataset, format_dms, load_dataset, merge_documents
from .llm import LlmBackendConfig, LlmError, complete
from .model import (
    DAMAGE_LEVEL_RANK,
    ComponentType,
    DamageLevel,
    GeoPoint,
    Region,
    StructureDocument,
    StructureMetadata,
    ValidationError,
)
from .prompt import build_region_prompt, build_structure_prompt, format_corner_pair

logger = logging.getLogger(__name__)

SIDEBAR_LABELS = (
    "Magnitude", "Date", "Longitude", "Latitude",
    "Type", "Details", "Overall rating", "Contributor",
)

_UNSAFE_FILENAME_RE = re.compile(r"[^A-Za-z0-9._-]+")


@dataclass(frozen=True)
class Marker:
    """One map marker for an investigated structure."""

    location: GeoPoint
    structure_id: str
    name: str
    overall_rating: str


@dataclass(frozen=True)
class ReportArtifact:
    """A rendered report: title, sidebar pairs, body, image references, markers."""

    title: str
    sidebar: tuple[tuple[str, str], ...]
    body: str
    image_refs: tuple[str, ...]
    markers: Optional[tuple[Marker, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "sidebar", tuple(self.sidebar))
        object.__setattr__(self, "image_refs", tuple(self.image_refs))
        if self.markers is not None:
            object.__setattr__(self, "markers", tuple(self.markers))
        if self.sidebar:
            labels = tuple(label for label, _ in self.sidebar)
            if labels != SIDEBAR_LABELS:
                raise ValidationError(
                    "sidebar", f"labels {labels} differ from {SIDEBAR_LABELS}"
                )


def count_components(
    doc: StructureDocument, component: ComponentType, level_at_least: DamageLevel
) -> int:
    """Component-scope observations of the given type at or above the level.

    Severity order is minor < moderate < heavy; observations without a
    damage level are never counted.
    """
    threshold = DAMAGE_LEVEL_RANK[level_at_least]
    count = 0
    for group in doc.floors:
        for obs in group.observations:
            attrs = obs.attributes
            if attrs is None or attrs.component_type is not component:
                continue
            if attrs.damage_level is None:
                continue
            if DAMAGE_LEVEL_RANK[attrs.damage_level] >= threshold:
                count += 1
    return count


def render_structure_report(doc: StructureDocument, summary: str) -> ReportArtifact:
    """Assemble the individual-structure artifact around a generated summary."""
    if not summary:
        raise ValueError("summary must be non-empty")
    meta = doc.metadata
    sidebar = (
        ("Magnitude", format_magnitude(doc.event.magnitude)),
        ("Date", format_date(meta.inspected_date)),
        ("Longitude", format_dms(meta.location.lon, "lon")),
        ("Latitude", format_dms(meta.location.lat, "lat")),
        ("Type", meta.structure_type),
        ("Details", stories_phrase(meta.stories)),
        ("Overall rating", meta.overall_rating.value.capitalize()),
        ("Contributor", meta.contributor),
    )
    image_refs = tuple(obs.image_uri for obs in doc.all_observations())
    return ReportArtifact(
        title=f"Reconnaissance Report: {meta.name}",
        sidebar=sidebar,
        body=summary,
        image_refs=image_refs,
    )


def render_region_report(
    region: Region, structures: Sequence[StructureMetadata], summary: str
) -> ReportArtifact:
    """Assemble the regional artifact with one marker per member structure."""
    by_id = {s.structure_id: s for s in structures}
    if set(by_id) != set(region.member_ids) or len(structures) != len(region.member_ids):
        raise ValueError(
            f"structures {sorted(by_id)} do not cover region members "
            f"{sorted(region.member_ids)}"
        )
    members = [by_id[member_id] for member_id in region.member_ids]
    box = geo.bounding_box([s.location for s in members])
    markers = tuple(
        Marker(
            location=s.location,
            structure_id=s.structure_id,
            name=s.name,
            overall_rating=s.overall_rating.value,
        )
        for s in members
    )
    body = f"Region bounding box: {format_corner_pair(box)}.\n\n{summary}"
    return ReportArtifact(
        title=f"Regional Reconnaissance Report: {region.region_name}",
        sidebar=(),
        body=body,
        image_refs=(),
        markers=markers,
    )


def artifact_to_markdown(artifact: ReportArtifact) -> str:
    lines = [f"# {artifact.title}", ""]
    if artifact.sidebar:
        lines.append("---")
        lines.extend(f"{label}: {value}" for label, value in artifact.sidebar)
        lines.extend(["---", ""])
    lines.extend([artifact.body, ""])
    if artifact.image_refs:
        lines.extend(["## Referenced images", ""])
        lines.extend(f"- {uri}" for uri in artifact.image_refs)
        lines.append("")
    return "\n".join(lines)


def markers_to_geojson(markers: Sequence[Marker]) -> dict:
    """Markers as a GeoJSON FeatureCollection of Points (lon-lat order)."""
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [m.location.lon, m.location.lat],
                },
                "properties": {
                    "name": m.name,
                    "overall_rating": m.overall_rating,
                    "structure_id": m.structure_id,
                },
            }
            for m in markers
        ],
    }


# --- pipeline ----------------------------------------------------------------


@dataclass(frozen=True)
class InputPaths:
    event: Path
    structures: Path
    observations: Path


@dataclass(frozen=True)
class RegionSpec:
    name: str
    center: GeoPoint
    radius_km: float


@dataclass(frozen=True)
class StageFailure:
    stage: str  # "extract" | "llm"
    ref: str
    message: str


@dataclass(frozen=True)
class RunManifest:
    """What a pipeline run consumed, produced, and failed to produce."""

    inputs: dict
    config_hash: str
    outputs: tuple[str, ...]
    failures: tuple[StageFailure, ...]
    started_at: str
    finished_at: str

    def to_json(self) -> dict:
        return {
            "inputs": self.inputs,
            "config_hash": self.config_hash,
            "outputs": list(self.outputs),
            "failures": [
                {"stage": f.stage, "ref": f.ref, "message": f.message}
                for f in self.failures
            ],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def _safe_name(name: str) -> str:
    return _UNSAFE_FILENAME_RE.sub("-", name)


def _config_hash(
    extractor_config: ExtractorBackendConfig,
    llm_config: LlmBackendConfig,
    region_spec: Optional[RegionSpec],
    budget_tokens: int,
) -> str:
    # Describes how the run was configured; never includes secrets.
    payload = {
        "extractor": {
            "kind": extractor_config.kind.value,
            "manifest_path": str(extractor_config.manifest_path or ""),
            "endpoint_url": extractor_config.endpoint_url or "",
            "timeout_ms": extractor_config.timeout_ms,
            "max_retries": extractor_config.max_retries,
        },
        "llm": {
            "kind": llm_config.kind.value,
            "base_url": llm_config.base_url or "",
            "model_name": llm_config.model_name or "",
            "api_key_env_var": llm_config.api_key_env_var,
            "timeout_ms": llm_config.timeout_ms,
            "max_retries": llm_config.max_retries,
        },
        "region": (
            {
                "name": region_spec.name,
                "center": [region_spec.center.lat, region_spec.center.lon],
                "radius_km": region_spec.radius_km,
            }
            if region_spec is not None else None
        ),
        "budget_tokens": budget_tokens,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def run_pipeline(
    input_paths: InputPaths,
    extractor_config: ExtractorBackendConfig,
    llm_config: LlmBackendConfig,
    out_dir: Path,
    region_spec: Optional[RegionSpec] = None,
    budget_tokens: int = 8000,
) -> RunManifest:
    """Run the full pipeline and write all artifacts under ``out_dir``.

    Stages: load and validate, extract attributes, merge into documents,
    generate and render one report per structure, then (when a region is
    requested) select the region, summarize the member reports, and render
    the regional report plus its marker file. A structure whose completion
    fails is skipped and recorded; a missing member also fails the regional
    report. Extraction failures are recorded and the affected observations
    keep their attributes absent.
    """
    started_at = dt.datetime.now(dt.timezone.utc).isoformat()
    out_dir = Path(out_dir)
    failures: list[StageFailure] = []
    outputs: list[str] = []

    dataset = load_dataset(
        input_paths.event, input_paths.structures, input_paths.observations
    )
    extraction = extract_all(extractor_config, dataset)
    failures.extend(
        StageFailure("extract", f.image_id, f.message) for f in extraction.failures
    )
    documents = merge_documents(extraction.dataset)

    bodies: dict[str, str] = {}
    for doc in documents:
        structure_id = doc.metadata.structure_id
        bundle = build_structure_prompt(doc, budget_tokens=budget_tokens)
        try:
            result = complete(llm_config, bundle)
        except LlmError as exc:
            logger.warning("completion failed for %s: %s", structure_id, exc)
            failures.append(StageFailure("llm", structure_id, str(exc)))
            continue
        bodies[structure_id] = result.text
        artifact = render_structure_report(doc, result.text)
        rel = f"reports/{_safe_name(structure_id)}.md"
        _write_text(out_dir / rel, artifact_to_markdown(artifact))
        outputs.append(rel)
        logger.info("wrote %s", rel)

    if region_spec is not None:
        _run_region_stage(
            region_spec, extraction.dataset, bodies, llm_config, budget_tokens,
            out_dir, outputs, failures,
        )

    manifest = RunManifest(
        inputs={
            "event": str(input_paths.event),
            "structures": str(input_paths.structures),
            "observations": str(input_paths.observations),
            "sha256": {
                "event": _file_sha256(input_paths.event),
                "structures": _file_sha256(input_paths.structures),
                "observations": _file_sha256(input_paths.observations),
            },
        },
        config_hash=_config_hash(extractor_config, llm_config, region_spec, budget_tokens),
        outputs=tuple(outputs),
        failures=tuple(failures),
        started_at=started_at,
        finished_at=dt.datetime.now(dt.timezone.utc).isoformat(),
    )
    _write_text(out_dir / "run_manifest.json", json.dumps(manifest.to_json(), indent=2) + "\n")
    return manifest


def _run_region_stage(
    region_spec: RegionSpec,
    dataset: Dataset,
    bodies: dict[str, str],
    llm_config: LlmBackendConfig,
    budget_tokens: int,
    out_dir: Path,
    outputs: list[str],
    failures: list[StageFailure],
) -> None:
    region = geo.build_region(
        region_spec.name, region_spec.center, region_spec.radius_km, dataset
    )
    missing = [m for m in region.member_ids if m not in bodies]
    if missing:
        failures.append(StageFailure(
            "llm", f"region {region.region_name}",
            f"regional report skipped; member reports missing for: {', '.join(missing)}",
        ))
        return
    by_id = {s.structure_id: s for s in dataset.structures}
    members = [by_id[m] for m in region.member_ids]
    bundle = build_region_prompt(
        region, members, [bodies[m] for m in region.member_ids],
        budget_tokens=budget_tokens,
    )
    try:
        result = complete(llm_config, bundle)
    except LlmError as exc:
        logger.warning("regional completion failed: %s", exc)
        failures.append(StageFailure("llm", f"region {region.region_name}", str(exc)))
        return
    artifact = render_region_report(region, members, result.text)
    safe = _safe_name(region.region_name)
    md_rel = f"reports/region_{safe}.md"
    _write_text(out_dir / md_rel, artifact_to_markdown(artifact))
    outputs.append(md_rel)
    geojson_rel = f"reports/region_{safe}.geojson"
    _write_text(
        out_dir / geojson_rel,
        json.dumps(markers_to_geojson(artifact.markers), indent=2) + "\n",
    )
    outputs.append(geojson_rel)
    logger.info("wrote %s and %s", md_rel, geojson_rel)
