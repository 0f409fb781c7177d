"""Shared fixtures: the Puerto Rico dataset, random-data builders, mock servers."""

from __future__ import annotations

import datetime as dt
import json
import re
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from random import Random

import pytest

from drs.extract import ExtractorBackendConfig, ExtractorKind, extract_all
from drs.ingest import Dataset, load_dataset, merge_documents
from drs.model import (
    AttributeSet,
    CollapseMode,
    ComponentType,
    DamageLevel,
    DamageState,
    DamageType,
    EventMetadata,
    GeoPoint,
    ImageObservation,
    Material,
    OverallRating,
    Scope,
    Spalling,
    StructureMetadata,
)

FIXTURES = Path(__file__).parent / "fixtures" / "puerto_rico"

SAN_JORGE = GeoPoint(17.9998, -66.6204)
CALLE_SALUD = GeoPoint(18.0074, -66.6125)
MCMANUS = GeoPoint(18.0031, -66.6187)


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def core_paths() -> tuple[Path, Path, Path]:
    return (
        FIXTURES / "event.json",
        FIXTURES / "structures.jsonl",
        FIXTURES / "observations.jsonl",
    )


@pytest.fixture(scope="session")
def manifest_path() -> Path:
    return FIXTURES / "attributes_manifest.json"


@pytest.fixture(scope="session")
def dataset(core_paths) -> Dataset:
    return load_dataset(*core_paths)


@pytest.fixture(scope="session")
def manifest_config(manifest_path) -> ExtractorBackendConfig:
    return ExtractorBackendConfig(kind=ExtractorKind.MANIFEST, manifest_path=manifest_path)


@pytest.fixture(scope="session")
def extracted_dataset(dataset, manifest_config) -> Dataset:
    result = extract_all(manifest_config, dataset)
    assert not result.failures
    return result.dataset


@pytest.fixture(scope="session")
def documents(extracted_dataset):
    return merge_documents(extracted_dataset)


@pytest.fixture(scope="session")
def san_jorge_doc(documents):
    return next(d for d in documents if d.metadata.structure_id == "PR-PONCE-001")


@pytest.fixture(scope="session")
def calle_salud_doc(documents):
    return next(d for d in documents if d.metadata.structure_id == "PR-PONCE-002")


@pytest.fixture(scope="session")
def region_paths(tmp_path_factory) -> tuple[Path, Path, Path]:
    """Three-structure inputs: the core fixture plus the synthetic third."""
    root = tmp_path_factory.mktemp("region_inputs")
    structures = root / "structures.jsonl"
    structures.write_text(
        (FIXTURES / "structures.jsonl").read_text(encoding="utf-8")
        + (FIXTURES / "extra" / "structures_mcmanus.jsonl").read_text(encoding="utf-8"),
        encoding="utf-8",
    )
    observations = root / "observations.jsonl"
    observations.write_text(
        (FIXTURES / "observations.jsonl").read_text(encoding="utf-8")
        + (FIXTURES / "extra" / "observations_mcmanus.jsonl").read_text(encoding="utf-8"),
        encoding="utf-8",
    )
    return (FIXTURES / "event.json", structures, observations)


# --- random data builders ----------------------------------------------------


def random_attribute_set(rng: Random) -> AttributeSet:
    """A random attribute set that satisfies the consistency invariants."""
    state = rng.choice([None, DamageState.DAMAGED, DamageState.UNDAMAGED])
    if state is DamageState.UNDAMAGED:
        level = rng.choice([None, DamageLevel.UNDAMAGED])
        damage_type = None
    else:
        level = rng.choice([None, *DamageLevel])
        damage_type = rng.choice([None, *DamageType])
    return AttributeSet(
        damage_state=state,
        damage_level=level,
        damage_type=damage_type,
        spalling=rng.choice([None, *Spalling]),
        material=rng.choice([None, *Material]),
        collapse_mode=rng.choice([None, *CollapseMode]),
        component_type=rng.choice([None, *ComponentType]),
    )


def make_random_dataset(
    rng: Random, n_structures: int = 3, max_observations: int = 8
) -> Dataset:
    event = EventMetadata(
        event_name="Synthetic Event",
        magnitude=round(rng.uniform(4.0, 9.0), 1),
        origin_date=dt.date(2021, 3, 14),
    )
    structures = []
    observations = []
    for i in range(n_structures):
        structure_id = f"S{i:03d}"
        stories = rng.randint(1, 9)
        structures.append(StructureMetadata(
            structure_id=structure_id,
            name=f"Structure {i}",
            address=f"{i} Test Street",
            location=GeoPoint(rng.uniform(-60, 60), rng.uniform(-120, 120)),
            structure_type="Test building",
            stories=stories,
            construction="reinforced concrete",
            occupancy="Residential",
            overall_rating=rng.choice(list(OverallRating)),
            inspection_team="Team",
            contributor="Contributor",
            inspected_date=dt.date(2021, 3, 20),
        ))
        for j in range(rng.randint(0, max_observations)):
            scope = Scope.SYSTEM if rng.random() < 0.2 else Scope.COMPONENT
            observations.append(ImageObservation(
                image_id=f"{structure_id}-img-{j:02d}",
                image_uri=f"images/{structure_id}-{j:02d}.jpg",
                structure_id=structure_id,
                scope=scope,
                floor=None if scope is Scope.SYSTEM else rng.randint(1, stories),
                component_label=(
                    None if scope is Scope.SYSTEM or rng.random() < 0.3
                    else f"Component #{j}"
                ),
                note="note text" if rng.random() < 0.3 else None,
                attributes=random_attribute_set(rng) if rng.random() < 0.8 else None,
            ))
    rng.shuffle(observations)
    return Dataset(event=event, structures=tuple(structures), observations=tuple(observations))


# --- scripted HTTP servers ----------------------------------------------------


class _ScriptedHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw) if raw else None
        except ValueError:
            body = raw.decode("utf-8", "replace")
        self.server.requests.append({
            "path": self.path,
            "headers": {k.lower(): v for k, v in self.headers.items()},
            "body": body,
        })
        status, payload = self.server.respond(self.path, body)
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class _ScriptedServer(ThreadingHTTPServer):
    def __init__(self, respond):
        super().__init__(("127.0.0.1", 0), _ScriptedHandler)
        self.respond = respond
        self.requests: list[dict] = []

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"


@contextmanager
def scripted_server(script: list[tuple[int, object]]):
    """Serve a fixed sequence of (status, payload) replies to POSTs in order."""
    remaining = list(script)

    def respond(path, body):
        if not remaining:
            return 500, {"error": "script exhausted"}
        return remaining.pop(0)

    server = _ScriptedServer(respond)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()


def chat_ok(text: str) -> tuple[int, dict]:
    return 200, {"choices": [{"message": {"content": text}}]}


@contextmanager
def manifest_extract_server(manifest: dict):
    """A Python stand-in for the extraction service, serving a manifest dict."""

    def respond(path, body):
        if path != "/extract":
            return 404, {"error": "unknown route"}
        if not isinstance(body, dict) or not isinstance(body.get("image_id"), str):
            return 422, {"error": "malformed request body"}
        record = manifest.get(body["image_id"])
        if record is None:
            return 404, {"error": f"unknown image_id {body['image_id']}"}
        return 200, record

    server = _ScriptedServer(respond)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    match = re.search(r"test_(a\d+)", report.nodeid)
    if match:
        outcome = "PASSED" if report.passed else ("SKIPPED" if report.skipped else "FAILED")
        print(f"\nACCEPTANCE {match.group(1).upper()}: {outcome}", flush=True)
