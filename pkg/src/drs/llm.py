"""Chat-completion backends: an offline deterministic summarizer and a
remote OpenAI-compatible HTTP client.

The offline backend exists so the whole pipeline can run and be verified
without a hosted model: it parses the deterministic payload the prompt
module produced and fills a fixed report template, so equal prompts always
yield byte-identical reports. The remote backend speaks the de facto
``/v1/chat/completions`` protocol with exponential-backoff retries.

The API key is read from the environment at call time and is never logged;
neither is the prompt body at default verbosity.
"""

from __future__ import annotations

import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import requests

from . import prompt as prompt_mod
from .model import ValidationError
from .prompt import PromptBundle

logger = logging.getLogger(__name__)

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503})
BACKOFF_BASE_S = 0.5

_remote_slots = threading.BoundedSemaphore(2)


def set_remote_request_limit(limit: int) -> None:
    """Cap concurrent remote completions process-wide (default 2)."""
    global _remote_slots
    if limit < 1:
        raise ValueError(f"limit must be at least 1, got {limit}")
    _remote_slots = threading.BoundedSemaphore(limit)


class LlmKind(Enum):
    OFFLINE = "offline"
    REMOTE = "remote"


class LlmError(Exception):
    """Base class for completion failures."""


class MissingApiKeyError(LlmError):
    pass


class LlmRequestError(LlmError):
    """A non-retryable HTTP status from the completion endpoint."""

    def __init__(self, status: int):
        self.status = status
        super().__init__(f"completion endpoint returned status {status}")


class RetriesExhaustedError(LlmError):
    def __init__(self, attempts: int, reason: str):
        self.attempts = attempts
        super().__init__(f"gave up after {attempts} attempts ({reason})")


class LlmProtocolError(LlmError):
    """The endpoint's reply does not match the chat-completion shape."""


class OfflinePayloadError(LlmError):
    """The offline backend received a payload it did not produce the grammar for."""


@dataclass(frozen=True)
class LlmBackendConfig:
    """Selects and configures a completion backend."""

    kind: LlmKind
    base_url: Optional[str] = None
    model_name: Optional[str] = None
    api_key_env_var: str = "DRS_LLM_API_KEY"
    timeout_ms: int = 60000
    max_retries: int = 3

    def __post_init__(self):
        if self.kind is LlmKind.REMOTE:
            if not self.base_url:
                raise ValidationError("base_url", "required for the remote backend")
            if not self.model_name:
                raise ValidationError("model_name", "required for the remote backend")
        if self.timeout_ms <= 0:
            raise ValidationError("timeout_ms", f"{self.timeout_ms} is not positive")
        if self.max_retries < 0:
            raise ValidationError("max_retries", f"{self.max_retries} is negative")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend_kind: LlmKind
    attempts: int

    def __post_init__(self):
        if not self.text:
            raise ValidationError("text", "must be non-empty")


def complete(config: LlmBackendConfig, bundle: PromptBundle) -> CompletionResult:
    """Run one completion through the configured backend."""
    if config.kind is LlmKind.OFFLINE:
        return CompletionResult(
            text=offline_summarize(bundle.user_message),
            backend_kind=LlmKind.OFFLINE,
            attempts=1,
        )
    return _complete_remote(config, bundle)


def _complete_remote(config: LlmBackendConfig, bundle: PromptBundle) -> CompletionResult:
    api_key = os.environ.get(config.api_key_env_var)
    if not api_key:
        raise MissingApiKeyError(
            f"environment variable {config.api_key_env_var} is not set"
        )
    url = config.base_url.rstrip("/") + "/v1/chat/completions"
    body = {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": bundle.system_message},
            {"role": "user", "content": bundle.user_message},
        ],
        "temperature": bundle.temperature,
        "max_tokens": bundle.max_output_tokens,
    }
    headers = {"Authorization": f"Bearer {api_key}"}
    attempts = 0
    last_reason = ""
    with _remote_slots:
        while attempts <= config.max_retries:
            if attempts:
                # Exponential backoff with full jitter: delay in [0, 0.5 * 2^n].
                time.sleep(random.uniform(0, BACKOFF_BASE_S * 2 ** (attempts - 1)))
            attempts += 1
            try:
                response = requests.post(
                    url, json=body, headers=headers, timeout=config.timeout_ms / 1000.0
                )
            except requests.Timeout:
                last_reason = "timeout"
                logger.debug("completion attempt %d timed out", attempts)
                continue
            except requests.ConnectionError as exc:
                raise LlmError(f"completion endpoint unreachable: {exc}") from exc
            if response.status_code == 200:
                return CompletionResult(
                    text=_parse_completion_body(response),
                    backend_kind=LlmKind.REMOTE,
                    attempts=attempts,
                )
            if response.status_code in RETRYABLE_STATUSES:
                last_reason = f"status {response.status_code}"
                logger.debug("completion attempt %d got %s", attempts, last_reason)
                continue
            raise LlmRequestError(response.status_code)
    raise RetriesExhaustedError(attempts, last_reason)


def _parse_completion_body(response) -> str:
    try:
        payload = response.json()
        content = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise LlmProtocolError(f"malformed completion response: {exc!r}") from exc
    if not isinstance(content, str) or not content:
        raise LlmProtocolError("completion response carries no text content")
    return content


# --- offline deterministic summarizer ---------------------------------------

_EVENT_RE = re.compile(
    r"^Event: (?P<name>.+), magnitude of (?P<mag>\d+(?:\.\d+)?) \(M", re.M
)
_ORIGIN_DATE_RE = re.compile(r"origin date (?P<date>[A-Z][a-z]+ \d{1,2}, \d{4})")
_META_LINE_RE = re.compile(r"^  (?P<label>[^:]+): (?P<value>.*)$")
_SYSTEM_LINE_RE = re.compile(r"^System, (?P<label>.+?): (?P<rest>.*)$")
_FLOOR_LINE_RE = re.compile(r"^Floor (?P<floor>\d+), (?P<label>.+?): (?P<rest>.*)$")
_COLLAPSED_FLOOR_RE = re.compile(
    r"^Floor (?P<floor>\d+): (?P<count>\d+) observations, "
    r"worst damage level (?P<level>\w+)$"
)
_STORIES_PHRASE_RE = re.compile(r"^\d+ \((?P<phrase>.+)\)$")
_REGION_CONTEXT_RE = re.compile(
    r"cover the region (?P<name>.+), encompassing the coordinates (?P<bbox>.+)\.$",
    re.M,
)
_RATING_SENTENCE_RE = re.compile(
    r"overall damage rating assigned to the structure is (?P<rating>[A-Za-z]+)"
)
_FIRST_SENTENCE_RE = re.compile(r"(.+?\.)(?:\s|$)")

_MATERIAL_WORDS = {"concrete", "steel", "masonry"}
_COMPONENT_WORDS = {"beam", "column", "wall", "joint", "other"}
_COLLAPSE_WORDS = {"non-collapse", "partial collapse", "global collapse"}
_LEVEL_SEVERITY = {
    "heavy": 5, "moderate": 4, "minor": 3,
    "damaged": 2, "unclassified": 1, "undamaged": 0,
}
_COLLAPSE_SEVERITY = {"global collapse": 2, "partial collapse": 1, "non-collapse": 0}
_TYPE_ORDER = {"flexural": 0, "shear": 1, "combined": 2, "other": 3}

_RECOMMENDATIONS = {
    "severe": "Further actions and detailed evaluation are recommended.",
    "moderate": "A detailed evaluation of the damaged components is recommended.",
    "minor": "Routine follow-up inspection is recommended.",
    "none": "No further action is indicated by the recorded observations.",
}

# Attribute vocabulary scanned for shared regional findings; patterns match
# the words the rendered attribute phrases use.
_SHARED_VOCAB = (
    ("concrete", r"\bconcrete\b"),
    ("steel", r"\bsteel\b"),
    ("masonry", r"\bmasonry\b"),
    ("column", r"\bcolumns?\b"),
    ("beam", r"\bbeams?\b"),
    ("wall", r"\bwalls?\b"),
    ("joint", r"\bjoints?\b"),
    ("minor damage", r"\bminor\b"),
    ("moderate damage", r"\bmoderate\b"),
    ("heavy damage", r"\bheavy\b"),
    ("spalling", r"\bspalling\b"),
    ("flexural damage", r"\bflexural\b"),
    ("shear damage", r"\bshear\b"),
    ("combined damage", r"\bcombined\b"),
    ("non-collapse", r"\bnon-collapse\b"),
    ("partial collapse", r"\bpartial collapse\b"),
    ("global collapse", r"\bglobal collapse\b"),
)


@dataclass
class _ObsInfo:
    material: Optional[str] = None
    component: Optional[str] = None
    state: Optional[str] = None
    level: Optional[str] = None
    spalling: Optional[bool] = None
    types: tuple[str, ...] = ()
    collapse: Optional[str] = None

    @property
    def bucket(self) -> str:
        """Condition bucket used for grouping and ordering floor narratives."""
        if self.level is not None:
            return self.level
        if self.state is not None:
            return self.state
        return "unclassified"


def _parse_attr_text(text: str) -> _ObsInfo:
    info = _ObsInfo()
    if text == "attributes unavailable":
        return info
    types = []
    for token in text.split(", "):
        if token in ("damaged", "undamaged"):
            info.state = token
        elif token.endswith(" damage level"):
            info.level = token[: -len(" damage level")]
        elif token == "spalling observed":
            info.spalling = True
        elif token == "no spalling observed":
            info.spalling = False
        elif token.endswith(" damage type"):
            types.append(token[: -len(" damage type")])
        elif token in _COLLAPSE_WORDS:
            info.collapse = token
        else:
            words = token.split(" ")
            if len(words) == 2:
                info.material, info.component = words
            elif token in _MATERIAL_WORDS:
                info.material = token
            else:
                info.component = token
    info.types = tuple(types)
    return info


def _split_attrs_and_note(rest: str) -> str:
    index = rest.find(" Note: ")
    return rest[:index] if index >= 0 else rest


@dataclass
class _StructurePayload:
    event_name: str
    magnitude: str
    origin_date: str
    meta: dict[str, str]
    system_attrs: list[_ObsInfo] = field(default_factory=list)
    floors: dict[int, list[_ObsInfo]] = field(default_factory=dict)
    collapsed_floors: dict[int, tuple[int, str]] = field(default_factory=dict)
    no_observations: bool = False


def _parse_structure_payload(user_message: str) -> _StructurePayload:
    event_match = _EVENT_RE.search(user_message)
    date_match = _ORIGIN_DATE_RE.search(user_message)
    if not event_match or not date_match or "Structure metadata:" not in user_message:
        raise OfflinePayloadError("payload is not a recognized structure serialization")
    meta: dict[str, str] = {}
    payload = _StructurePayload(
        event_name=event_match.group("name"),
        magnitude=event_match.group("mag"),
        origin_date=date_match.group("date"),
        meta=meta,
    )
    in_metadata = False
    for line in user_message.split("\n"):
        if line == "Structure metadata:":
            in_metadata = True
            continue
        if in_metadata:
            meta_match = _META_LINE_RE.match(line)
            if meta_match:
                meta[meta_match.group("label")] = meta_match.group("value")
                continue
            in_metadata = False
        if line == prompt_mod.NO_OBSERVATIONS_LINE:
            payload.no_observations = True
            continue
        collapsed = _COLLAPSED_FLOOR_RE.match(line)
        if collapsed:
            payload.collapsed_floors[int(collapsed.group("floor"))] = (
                int(collapsed.group("count")), collapsed.group("level"),
            )
            continue
        floor_match = _FLOOR_LINE_RE.match(line)
        if floor_match:
            info = _parse_attr_text(_split_attrs_and_note(floor_match.group("rest")))
            payload.floors.setdefault(int(floor_match.group("floor")), []).append(info)
            continue
        system_match = _SYSTEM_LINE_RE.match(line)
        if system_match:
            payload.system_attrs.append(
                _parse_attr_text(_split_attrs_and_note(system_match.group("rest")))
            )
    required = ("Name", "Address", "Inspected date", "Overall rating")
    if any(key not in meta for key in required):
        raise OfflinePayloadError("structure payload is missing metadata lines")
    return payload


def _plural(component: Optional[str], count: int) -> str:
    if component is None:
        return "observations" if count != 1 else "observation"
    if component == "other":
        return "other components" if count != 1 else "other component"
    return component + "s" if count != 1 else component


def _group_clause(
    material: Optional[str], component: Optional[str], bucket: str, members: list[_ObsInfo]
) -> str:
    count = len(members)
    noun = f"{material} " if material else ""
    noun += _plural(component, count)
    if bucket in ("minor", "moderate", "heavy"):
        condition = f"at {bucket} damage level"
    elif bucket == "unclassified":
        condition = "without a classified condition"
    else:
        condition = bucket
    qualifiers = []
    if any(m.spalling is True for m in members):
        qualifiers.append("spalling observed")
    elif any(m.spalling is False for m in members):
        qualifiers.append("no spalling observed")
    types = sorted(
        {t for m in members for t in m.types}, key=lambda t: _TYPE_ORDER.get(t, 9)
    )
    for type_name in types:
        qualifiers.append(f"{type_name} damage type")
    clause = f"{count} {noun} {condition}"
    if qualifiers:
        clause += ", with " + " and ".join(qualifiers)
    return clause


def _floor_sentence(floor: int, infos: list[_ObsInfo]) -> str:
    groups: dict[tuple, list[_ObsInfo]] = {}
    for info in infos:
        groups.setdefault((info.material, info.component, info.bucket), []).append(info)
    ordered = sorted(
        groups.items(),
        key=lambda item: (
            -_LEVEL_SEVERITY.get(item[0][2], 0),
            item[0][1] or "~",
            item[0][0] or "~",
        ),
    )
    clauses = [
        _group_clause(material, component, bucket, members)
        for (material, component, bucket), members in ordered
    ]
    return f"Floor {floor}: " + "; ".join(clauses) + "."


def _worst_collapse(infos: list[_ObsInfo]) -> Optional[str]:
    seen = [i.collapse for i in infos if i.collapse is not None]
    return max(seen, key=lambda c: _COLLAPSE_SEVERITY[c]) if seen else None


def _summarize_structure(user_message: str) -> str:
    payload = _parse_structure_payload(user_message)
    meta = payload.meta

    identification = (
        f"{meta['Name']}, located at {meta['Address']}, was inspected on "
        f"{meta['Inspected date']} following the M{payload.magnitude} "
        f"{payload.event_name} of {payload.origin_date}."
    )

    stories_value = meta.get("Stories", "")
    phrase_match = _STORIES_PHRASE_RE.match(stories_value)
    stories_text = phrase_match.group("phrase").lower() if phrase_match else stories_value
    construction = (
        f"The structure is a {stories_text} {meta.get('Structure type', 'structure').lower()} "
        f"of {meta.get('Construction', 'unrecorded')} construction, with "
        f"{meta.get('Occupancy', 'unrecorded').lower()} occupancy."
    )
    footprint = meta.get("Footprint area (sq ft)", "not recorded")
    if footprint != "not recorded":
        construction += f" The approximate footprint area is {footprint} sq.ft."
    functionality = meta.get("Functionality", "not recorded")
    if functionality != "not recorded":
        construction += (
            f" At the time of the survey the structure was {functionality[:1].lower()}"
            f"{functionality[1:]}."
        )

    condition_lines = []
    if payload.system_attrs:
        described = [
            info for info in payload.system_attrs
            if (info.material or info.component or info.state or info.collapse)
        ]
        count = len(payload.system_attrs)
        sentence = (
            f"At the system level, {count} observation"
            f"{'s were' if count != 1 else ' was'} recorded"
        )
        if described:
            summaries = sorted({_system_summary(info) for info in described})
            sentence += ": " + "; ".join(summaries)
        condition_lines.append(sentence + ".")
    for floor in sorted(set(payload.floors) | set(payload.collapsed_floors)):
        if floor in payload.floors:
            condition_lines.append(_floor_sentence(floor, payload.floors[floor]))
        else:
            count, level = payload.collapsed_floors[floor]
            condition_lines.append(
                f"Floor {floor}: {count} observations, worst damage level {level}."
            )
    if not condition_lines:
        condition_lines.append("No component observations were recorded for this structure.")
    condition = "\n".join(condition_lines)

    rating = meta["Overall rating"]
    closing = f"The overall damage rating assigned to the structure is {rating}."
    all_infos = payload.system_attrs + [
        info for infos in payload.floors.values() for info in infos
    ]
    collapse = _worst_collapse(all_infos)
    if collapse is not None:
        closing += f" Observations indicate {collapse} conditions."
    closing += " " + _RECOMMENDATIONS.get(
        rating.lower(), "A follow-up review of the recorded data is recommended."
    )
    comments = meta.get("Assessor comments", "not recorded")
    if comments != "not recorded":
        closing += f" Assessor comments from the survey: {comments}"

    return "\n\n".join([identification, construction, condition, closing])


def _system_summary(info: _ObsInfo) -> str:
    parts = []
    if info.material and info.component:
        parts.append(f"{info.material} {info.component}")
    elif info.material:
        parts.append(info.material)
    elif info.component:
        parts.append(info.component)
    if info.state:
        parts.append(info.state)
    if info.level:
        parts.append(f"{info.level} damage level")
    if info.spalling is True:
        parts.append("spalling observed")
    elif info.spalling is False:
        parts.append("no spalling observed")
    for type_name in info.types:
        parts.append(f"{type_name} damage type")
    if info.collapse:
        parts.append(info.collapse)
    return ", ".join(parts)


def _first_sentence(text: str) -> str:
    stripped = text.strip()
    match = _FIRST_SENTENCE_RE.match(stripped)
    if match:
        return match.group(1)
    first_line = stripped.split("\n", 1)[0]
    return first_line if first_line else "No report text available."


def _split_member_blocks(user_message: str) -> list[tuple[str, str, str]]:
    """Split the regional payload into (structure_id, name, body) blocks."""
    blocks = []
    chunks = user_message.split(prompt_mod.REGION_HEADER_PREFIX)
    for chunk in chunks[1:]:
        header, _, body = chunk.partition("\n")
        structure_id, _, name = header.partition(": ")
        blocks.append((structure_id.strip(), name.strip(), body.strip()))
    return blocks


def _summarize_region(user_message: str) -> str:
    context = _REGION_CONTEXT_RE.search(user_message)
    blocks = _split_member_blocks(user_message)
    if not context or not blocks:
        raise OfflinePayloadError("payload is not a recognized regional serialization")
    region_name = context.group("name")
    bbox = context.group("bbox")
    count = len(blocks)

    overview = (
        f"This regional summary covers {count} investigated structure"
        f"{'s' if count != 1 else ''} in the region {region_name}, encompassing "
        f"the coordinates {bbox}."
    )

    findings = ["Key findings by structure:"]
    for structure_id, name, body in blocks:
        findings.append(f"- {name} ({structure_id}): {_first_sentence(body)}")

    shared = [
        label
        for label, pattern in _SHARED_VOCAB
        if all(re.search(pattern, body, re.IGNORECASE) for _, _, body in blocks)
    ]
    if shared:
        commonalities = (
            "All investigated structures share the following observed attribute "
            "values: " + "; ".join(shared) + "."
        )
    else:
        commonalities = (
            "No observed attribute values are shared by all investigated structures."
        )

    severe = 0
    for _, _, body in blocks:
        rating_match = _RATING_SENTENCE_RE.search(body)
        if rating_match:
            if rating_match.group("rating").lower() == "severe":
                severe += 1
        elif re.search(r"\bsevere\b", body, re.IGNORECASE):
            severe += 1
    if severe:
        closing = (
            f"{severe} of the {count} structures carry a severe overall damage "
            "rating. Further actions and detailed evaluation are recommended "
            "for this region."
        )
    else:
        closing = (
            "None of the structures carry a severe overall damage rating; "
            "continued monitoring of the region is recommended."
        )

    return "\n\n".join([overview, "\n".join(findings), commonalities, closing])


def offline_summarize(user_message: str) -> str:
    """Deterministic report text for a payload built by the prompt module.

    Structure payloads yield four paragraphs: identification, construction
    and occupancy, per-floor condition narrative with component counts, and
    the overall rating with a recommendation. Regional payloads yield an
    overview, per-structure key findings, attribute values shared by all
    members, and a closing recommendation.
    """
    if prompt_mod.REGION_HEADER_PREFIX in user_message:
        return _summarize_region(user_message)
    if "Structure metadata:" in user_message:
        return _summarize_structure(user_message)
    raise OfflinePayloadError("payload is neither a structure nor a regional serialization")
