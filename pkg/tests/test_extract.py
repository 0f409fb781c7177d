"""Manifest and remote extraction backends plus attribute-text rendering."""

import json

import pytest

from conftest import manifest_extract_server
from drs.extract import (
    ExtractionError,
    ExtractorBackendConfig,
    ExtractorKind,
    ExtractorProtocolError,
    ExtractorUnreachableError,
    UnknownImageError,
    extract_all,
    extract_attributes,
    render_attribute_text,
)
from drs.model import (
    AttributeSet,
    CollapseMode,
    ComponentType,
    DamageLevel,
    DamageState,
    DamageType,
    Material,
    Spalling,
    ValidationError,
)

SAN_JORGE_COLUMN = AttributeSet(
    component_type=ComponentType.COLUMN,
    material=Material.CONCRETE,
    damage_state=DamageState.DAMAGED,
    damage_level=DamageLevel.HEAVY,
    spalling=Spalling.SPALLING,
    damage_type=DamageType.COMBINED,
)
SAN_JORGE_BEAM = AttributeSet(
    component_type=ComponentType.BEAM,
    damage_state=DamageState.UNDAMAGED,
    spalling=Spalling.NO_SPALLING,
)


def remote_config(url, **overrides):
    values = dict(kind=ExtractorKind.REMOTE, endpoint_url=url,
                  timeout_ms=2000, max_retries=1)
    values.update(overrides)
    return ExtractorBackendConfig(**values)


class TestBackendConfig:
    def test_manifest_requires_path(self):
        with pytest.raises(ValidationError) as excinfo:
            ExtractorBackendConfig(kind=ExtractorKind.MANIFEST)
        assert excinfo.value.field_name == "manifest_path"

    def test_remote_requires_url(self):
        with pytest.raises(ValidationError) as excinfo:
            ExtractorBackendConfig(kind=ExtractorKind.REMOTE)
        assert excinfo.value.field_name == "endpoint_url"


class TestManifestBackend:
    def test_san_jorge_column(self, manifest_config, dataset):
        obs = next(o for o in dataset.observations if o.image_id == "sj-col-01")
        assert extract_attributes(manifest_config, obs) == SAN_JORGE_COLUMN

    def test_san_jorge_beam(self, manifest_config, dataset):
        obs = next(o for o in dataset.observations if o.image_id == "sj-beam-01")
        assert extract_attributes(manifest_config, obs) == SAN_JORGE_BEAM

    def test_unknown_image(self, manifest_config, dataset):
        from dataclasses import replace

        stranger = replace(dataset.observations[0], image_id="missing-img")
        with pytest.raises(UnknownImageError):
            extract_attributes(manifest_config, stranger)

    def test_corrupt_manifest_label(self, tmp_path, dataset):
        bad = tmp_path / "manifest.json"
        bad.write_text(json.dumps({"sj-col-01": {"damage_level": "catastrophic"}}))
        config = ExtractorBackendConfig(kind=ExtractorKind.MANIFEST, manifest_path=bad)
        with pytest.raises(ExtractionError) as excinfo:
            extract_attributes(config, dataset.observations[0])
        assert "catastrophic" in str(excinfo.value)


class TestExtractAll:
    def test_fixture_fully_extracted(self, manifest_config, dataset):
        result = extract_all(manifest_config, dataset)
        assert result.failures == ()
        assert all(o.attributes is not None for o in result.dataset.observations)
        assert len(result.dataset.observations) == 10

    def test_idempotent_on_extracted_dataset(self, manifest_config, extracted_dataset):
        result = extract_all(manifest_config, extracted_dataset)
        assert result.failures == ()
        assert result.dataset == extracted_dataset

    def test_existing_attributes_preserved(self, manifest_config, dataset, extracted_dataset):
        # Seed one observation with attributes that differ from its manifest entry.
        from dataclasses import replace

        seeded_obs = replace(
            dataset.observations[1],
            attributes=AttributeSet(damage_state=DamageState.DAMAGED),
        )
        seeded = type(dataset)(
            event=dataset.event,
            structures=dataset.structures,
            observations=(dataset.observations[0], seeded_obs) + dataset.observations[2:],
        )
        result = extract_all(manifest_config, seeded)
        kept = next(
            o for o in result.dataset.observations if o.image_id == seeded_obs.image_id
        )
        assert kept.attributes == AttributeSet(damage_state=DamageState.DAMAGED)

    def test_backend_down_reports_all_failures(self, dataset):
        config = remote_config("http://127.0.0.1:9", timeout_ms=200, max_retries=1)
        result = extract_all(config, dataset)
        assert len(result.failures) == 10
        assert all(o.attributes is None for o in result.dataset.observations)


class TestRemoteBackend:
    def test_conforms_to_manifest_backend(self, manifest_config, manifest_path, dataset):
        manifest = json.loads(manifest_path.read_text())
        with manifest_extract_server(manifest) as server:
            config = remote_config(server.url)
            for obs in dataset.observations:
                assert extract_attributes(config, obs) == extract_attributes(
                    manifest_config, obs
                )

    def test_unknown_image_is_404(self, manifest_path, dataset):
        from dataclasses import replace

        manifest = json.loads(manifest_path.read_text())
        with manifest_extract_server(manifest) as server:
            stranger = replace(dataset.observations[0], image_id="missing-img")
            with pytest.raises(UnknownImageError):
                extract_attributes(remote_config(server.url), stranger)

    def test_out_of_enum_reply_is_protocol_error(self, dataset):
        with manifest_extract_server({"sj-sys-01": {"material": "adobe"}}) as server:
            with pytest.raises(ExtractorProtocolError):
                extract_attributes(remote_config(server.url), dataset.observations[0])

    def test_unexpected_status_is_protocol_error(self, dataset):
        from conftest import scripted_server

        with scripted_server([(422, {"error": "bad request"})]) as server:
            with pytest.raises(ExtractorProtocolError):
                extract_attributes(remote_config(server.url), dataset.observations[0])

    def test_retries_transient_statuses(self, dataset, monkeypatch):
        import drs.extract as extract_mod
        from conftest import scripted_server

        monkeypatch.setattr(extract_mod.time, "sleep", lambda s: None)
        manifest_entry = {"material": "concrete", "damage_state": "damaged"}
        with scripted_server([(503, {}), (200, manifest_entry)]) as server:
            config = remote_config(server.url, max_retries=2)
            attrs = extract_attributes(config, dataset.observations[0])
        assert attrs == AttributeSet(
            material=Material.CONCRETE, damage_state=DamageState.DAMAGED
        )

    def test_retries_exhausted(self, dataset, monkeypatch):
        import drs.extract as extract_mod
        from conftest import scripted_server

        monkeypatch.setattr(extract_mod.time, "sleep", lambda s: None)
        with scripted_server([(503, {})] * 3) as server:
            config = remote_config(server.url, max_retries=2)
            with pytest.raises(ExtractorUnreachableError):
                extract_attributes(config, dataset.observations[0])
            assert len(server.requests) == 3


class TestRenderAttributeText:
    def test_full_set(self):
        assert render_attribute_text(SAN_JORGE_COLUMN) == (
            "concrete column, damaged, heavy damage level, spalling observed, "
            "combined damage type"
        )

    def test_undamaged_beam(self):
        assert render_attribute_text(SAN_JORGE_BEAM) == "beam, undamaged, no spalling observed"

    def test_empty_set(self):
        assert render_attribute_text(AttributeSet()) == "attributes unavailable"

    def test_material_only(self):
        assert render_attribute_text(AttributeSet(material=Material.STEEL)) == "steel"

    def test_collapse_mode_phrases(self):
        assert render_attribute_text(
            AttributeSet(collapse_mode=CollapseMode.PARTIAL_COLLAPSE)
        ) == "partial collapse"
        assert render_attribute_text(
            AttributeSet(collapse_mode=CollapseMode.NON_COLLAPSE)
        ) == "non-collapse"

    def test_deterministic(self):
        assert render_attribute_text(SAN_JORGE_COLUMN) == render_attribute_text(
            SAN_JORGE_COLUMN
        )
