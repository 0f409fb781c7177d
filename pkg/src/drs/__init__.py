"""Post-disaster reconnaissance summarization pipeline.

Turns event, structure, and image-observation records into professional
summary reports for individual structures and affected regions, with a
deterministic offline summarizer for verifiable runs and a remote
chat-completion backend for hosted models.
"""

from .extract import (
    ExtractorBackendConfig,
    ExtractorKind,
    extract_all,
    extract_attributes,
    render_attribute_text,
)
from .geo import BoundingBox, bounding_box, build_region, haversine_km, select_in_radius
from .ingest import (
    Dataset,
    DatasetError,
    ValidationReport,
    format_dms,
    load_dataset,
    merge_documents,
    parse_dms,
    validate,
)
from .llm import CompletionResult, LlmBackendConfig, LlmKind, complete, offline_summarize
from .model import (
    AttributeSet,
    EventMetadata,
    FloorGroup,
    GeoPoint,
    ImageObservation,
    Region,
    StructureDocument,
    StructureMetadata,
    ValidationError,
)
from .prompt import (
    PromptBundle,
    build_region_prompt,
    build_structure_prompt,
    build_system_message,
    serialize_document,
    truncate_to_budget,
)
from .report import (
    InputPaths,
    RegionSpec,
    ReportArtifact,
    count_components,
    render_region_report,
    render_structure_report,
    run_pipeline,
)

__version__ = "0.1.0"
