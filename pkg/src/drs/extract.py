"""Pluggable attribute extraction and attribute-to-text rendering.

The vision models that classify component images sit behind a small
interface with two interchangeable backends: a manifest backend that reads
precomputed labels from a sidecar JSON file, and a remote HTTP backend
speaking the ``POST {endpoint}/extract`` protocol. Labels outside the closed
enums are protocol errors, never coerced.
"""

from __future__ import annotations

import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import requests

from .ingest import Dataset, parse_attribute_record
from .model import (
    AttributeSet,
    ImageObservation,
    Scope,
    ValidationError,
)

logger = logging.getLogger(__name__)

_COLLAPSE_TEXT = {
    "non_collapse": "non-collapse",
    "partial_collapse": "partial collapse",
    "global_collapse": "global collapse",
}

_RETRYABLE_STATUSES = {429, 500, 502, 503}
_BACKOFF_BASE_S = 0.25


class ExtractorKind(Enum):
    MANIFEST = "manifest"
    REMOTE = "remote"


class ExtractionError(Exception):
    """Base class for extraction failures."""


class UnknownImageError(ExtractionError):
    """The backend has no labels for the requested image."""


class ExtractorProtocolError(ExtractionError):
    """The backend's reply violates the wire or label contract."""


class ExtractorUnreachableError(ExtractionError):
    """The backend could not be reached within the retry budget."""


@dataclass(frozen=True)
class ExtractorBackendConfig:
    """Selects and configures an extraction backend."""

    kind: ExtractorKind
    manifest_path: Optional[Path] = None
    endpoint_url: Optional[str] = None
    timeout_ms: int = 10000
    max_retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind is ExtractorKind.MANIFEST and self.manifest_path is None:
            raise ValidationError("manifest_path", "required for the manifest backend")
        if self.kind is ExtractorKind.REMOTE and not self.endpoint_url:
            raise ValidationError("endpoint_url", "required for the remote backend")
        if self.timeout_ms <= 0:
            raise ValidationError("timeout_ms", f"{self.timeout_ms} is not positive")
        if self.max_retries < 0:
            raise ValidationError("max_retries", f"{self.max_retries} is negative")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight", f"{self.max_in_flight} is below 1")


@dataclass(frozen=True)
class ExtractionFailure:
    image_id: str
    structure_id: str
    message: str


@dataclass(frozen=True)
class ExtractionResult:
    """Dataset with attributes filled where extraction succeeded."""

    dataset: Dataset
    failures: tuple[ExtractionFailure, ...]


class _ManifestBackend:
    """Serves labels from an image_id -> attribute-record JSON file."""

    def __init__(self, manifest_path: Path):
        try:
            raw = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ExtractionError(f"manifest not found: {manifest_path}") from exc
        except json.JSONDecodeError as exc:
            raise ExtractionError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ExtractionError("manifest must map image_id to attribute records")
        self.entries: dict[str, AttributeSet] = {}
        for image_id, record in raw.items():
            try:
                self.entries[image_id] = parse_attribute_record(record)
            except ValidationError as exc:
                raise ExtractionError(f"manifest entry '{image_id}': {exc}") from exc

    def lookup(self, observation: ImageObservation) -> AttributeSet:
        try:
            return self.entries[observation.image_id]
        except KeyError:
            raise UnknownImageError(
                f"image '{observation.image_id}' not in manifest"
            ) from None


class _RemoteBackend:
    """Calls ``POST {endpoint}/extract`` with retries on transient failures."""

    def __init__(self, config: ExtractorBackendConfig):
        self.url = config.endpoint_url.rstrip("/") + "/extract"
        self.timeout_s = config.timeout_ms / 1000.0
        self.max_retries = config.max_retries

    def lookup(self, observation: ImageObservation) -> AttributeSet:
        body = {"image_id": observation.image_id, "image_uri": observation.image_uri}
        last_failure = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(random.uniform(0, _BACKOFF_BASE_S * 2 ** (attempt - 1)))
            try:
                response = requests.post(self.url, json=body, timeout=self.timeout_s)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_failure = f"transport error: {type(exc).__name__}"
                logger.debug("extract %s attempt %d failed: %s",
                             observation.image_id, attempt + 1, last_failure)
                continue
            if response.status_code == 200:
                return self._parse_body(response, observation.image_id)
            if response.status_code == 404:
                raise UnknownImageError(
                    f"image '{observation.image_id}' unknown to {self.url}"
                )
            if response.status_code not in _RETRYABLE_STATUSES:
                raise ExtractorProtocolError(
                    f"unexpected status {response.status_code} for "
                    f"'{observation.image_id}'"
                )
            last_failure = f"status {response.status_code}"
        raise ExtractorUnreachableError(
            f"gave up on '{observation.image_id}' after "
            f"{self.max_retries + 1} attempts ({last_failure})"
        )

    @staticmethod
    def _parse_body(response, image_id: str) -> AttributeSet:
        try:
            record = response.json()
        except ValueError as exc:
            raise ExtractorProtocolError(f"non-JSON reply for '{image_id}'") from exc
        try:
            return parse_attribute_record(record)
        except ValidationError as exc:
            raise ExtractorProtocolError(f"reply for '{image_id}': {exc}") from exc


def _open_backend(config: ExtractorBackendConfig):
    if config.kind is ExtractorKind.MANIFEST:
        return _ManifestBackend(config.manifest_path)
    return _RemoteBackend(config)


def extract_attributes(
    config: ExtractorBackendConfig, observation: ImageObservation
) -> AttributeSet:
    """Fetch the attribute set for one observation from the configured backend."""
    return _open_backend(config).lookup(observation)


def _extraction_order(dataset: Dataset, obs: ImageObservation) -> tuple:
    structure_index = next(
        i for i, s in enumerate(dataset.structures) if s.structure_id == obs.structure_id
    )
    return (
        structure_index,
        0 if obs.scope is Scope.SYSTEM else 1,
        obs.floor or 0,
        obs.component_label or "",
        obs.image_id,
    )


def extract_all(config: ExtractorBackendConfig, dataset: Dataset) -> ExtractionResult:
    """Fill attributes for every observation that does not carry them yet.

    Observations that already have attributes pass through untouched, so the
    call is idempotent. Per-observation failures are collected rather than
    raised; the returned dataset carries whatever was extracted successfully.
    The remote backend processes up to ``max_in_flight`` requests in parallel.
    """
    pending = [o for o in dataset.observations if o.attributes is None]
    pending.sort(key=lambda o: _extraction_order(dataset, o))
    filled: dict[str, AttributeSet] = {}
    failures: list[ExtractionFailure] = []
    if pending:
        try:
            backend = _open_backend(config)
        except ExtractionError as exc:
            failures = [
                ExtractionFailure(o.image_id, o.structure_id, str(exc)) for o in pending
            ]
            return ExtractionResult(dataset, tuple(failures))

        def fetch(obs: ImageObservation):
            try:
                return obs, backend.lookup(obs), None
            except ExtractionError as exc:
                return obs, None, exc

        if config.kind is ExtractorKind.REMOTE and len(pending) > 1:
            workers = min(config.max_in_flight, len(pending))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(fetch, pending))
        else:
            outcomes = [fetch(obs) for obs in pending]
        for obs, attrs, error in outcomes:
            if error is None:
                filled[obs.image_id] = attrs
            else:
                failures.append(ExtractionFailure(obs.image_id, obs.structure_id, str(error)))

    observations = tuple(
        replace(o, attributes=filled[o.image_id]) if o.image_id in filled else o
        for o in dataset.observations
    )
    updated = Dataset(dataset.event, dataset.structures, observations)
    return ExtractionResult(updated, tuple(failures))


def render_attribute_text(attrs: AttributeSet) -> str:
    """Render an attribute set as a fixed, comma-joined phrase.

    Canonical order: material, component_type, damage_state, damage_level,
    spalling, damage_type, collapse_mode; absent fields are skipped. An
    entirely empty set renders as "attributes unavailable".
    """
    parts: list[str] = []
    if attrs.material is not None and attrs.component_type is not None:
        parts.append(f"{attrs.material.value} {attrs.component_type.value}")
    elif attrs.material is not None:
        parts.append(attrs.material.value)
    elif attrs.component_type is not None:
        parts.append(attrs.component_type.value)
    if attrs.damage_state is not None:
        parts.append(attrs.damage_state.value)
    if attrs.damage_level is not None:
        parts.append(f"{attrs.damage_level.value} damage level")
    if attrs.spalling is not None:
        parts.append(
            "spalling observed" if attrs.spalling.value == "spalling"
            else "no spalling observed"
        )
    if attrs.damage_type is not None:
        parts.append(f"{attrs.damage_type.value} damage type")
    if attrs.collapse_mode is not None:
        parts.append(_COLLAPSE_TEXT[attrs.collapse_mode.value])
    return ", ".join(parts) if parts else "attributes unavailable"
