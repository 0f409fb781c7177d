"""Constructor validation and value semantics of the domain types."""

import datetime as dt

import pytest

from drs.model import (
    AttributeSet,
    DamageLevel,
    DamageState,
    DamageType,
    EventMetadata,
    FloorGroup,
    GeoPoint,
    ImageObservation,
    OverallRating,
    Region,
    Scope,
    StructureDocument,
    StructureMetadata,
    ValidationError,
)


def make_structure(**overrides) -> StructureMetadata:
    values = dict(
        structure_id="S1",
        name="Test Structure",
        address="1 Test Street",
        location=GeoPoint(18.0, -66.6),
        structure_type="Residential building",
        stories=3,
        construction="reinforced concrete",
        occupancy="Residential",
        overall_rating=OverallRating.SEVERE,
        inspection_team="Team",
        contributor="Contributor",
        inspected_date=dt.date(2020, 1, 11),
    )
    values.update(overrides)
    return StructureMetadata(**values)


def make_observation(**overrides) -> ImageObservation:
    values = dict(
        image_id="img-1",
        image_uri="images/img-1.jpg",
        structure_id="S1",
        scope=Scope.COMPONENT,
        floor=1,
    )
    values.update(overrides)
    return ImageObservation(**values)


class TestGeoPoint:
    def test_valid_extremes(self):
        GeoPoint(90.0, 180.0)
        GeoPoint(-90.0, -180.0)

    @pytest.mark.parametrize("lat,lon,field", [
        (90.1, 0.0, "lat"),
        (-91.0, 0.0, "lat"),
        (0.0, 180.5, "lon"),
        (0.0, -181.0, "lon"),
    ])
    def test_out_of_range_names_field(self, lat, lon, field):
        with pytest.raises(ValidationError) as excinfo:
            GeoPoint(lat, lon)
        assert excinfo.value.field_name == field

    def test_precision_survives(self):
        point = GeoPoint(17.999800123, -66.620400456)
        assert point.lat == 17.999800123
        assert point.lon == -66.620400456


class TestEventMetadata:
    def test_valid(self):
        event = EventMetadata("Quake", 6.4, dt.date(2020, 1, 7))
        assert event.magnitude == 6.4

    @pytest.mark.parametrize("magnitude", [0.0, -1.0, 10.5])
    def test_magnitude_range(self, magnitude):
        with pytest.raises(ValidationError) as excinfo:
            EventMetadata("Quake", magnitude, dt.date(2020, 1, 7))
        assert excinfo.value.field_name == "magnitude"

    def test_empty_name(self):
        with pytest.raises(ValidationError) as excinfo:
            EventMetadata("  ", 6.4, dt.date(2020, 1, 7))
        assert excinfo.value.field_name == "event_name"


class TestStructureMetadata:
    def test_stories_must_be_positive(self):
        with pytest.raises(ValidationError) as excinfo:
            make_structure(stories=0)
        assert excinfo.value.field_name == "stories"

    def test_footprint_must_be_positive(self):
        with pytest.raises(ValidationError) as excinfo:
            make_structure(footprint_area_sqft=-10.0)
        assert excinfo.value.field_name == "footprint_area_sqft"

    def test_blank_id_rejected(self):
        with pytest.raises(ValidationError):
            make_structure(structure_id=" ")


class TestAttributeSet:
    def test_undamaged_with_heavy_level_conflicts(self):
        with pytest.raises(ValidationError) as excinfo:
            AttributeSet(damage_state=DamageState.UNDAMAGED, damage_level=DamageLevel.HEAVY)
        assert excinfo.value.field_name == "damage_level"

    def test_undamaged_with_damage_type_conflicts(self):
        with pytest.raises(ValidationError) as excinfo:
            AttributeSet(damage_state=DamageState.UNDAMAGED, damage_type=DamageType.SHEAR)
        assert excinfo.value.field_name == "damage_type"

    def test_undamaged_pairs_allowed(self):
        AttributeSet(damage_state=DamageState.UNDAMAGED)
        AttributeSet(damage_state=DamageState.UNDAMAGED, damage_level=DamageLevel.UNDAMAGED)

    def test_level_without_state_allowed(self):
        AttributeSet(damage_level=DamageLevel.MINOR)

    def test_empty_set(self):
        assert AttributeSet().is_empty()
        assert not AttributeSet(damage_state=DamageState.DAMAGED).is_empty()


class TestImageObservation:
    def test_component_requires_floor(self):
        with pytest.raises(ValidationError) as excinfo:
            make_observation(floor=None)
        assert excinfo.value.field_name == "floor"

    def test_floor_zero_is_reserved(self):
        with pytest.raises(ValidationError):
            make_observation(floor=0)

    def test_system_forbids_floor(self):
        with pytest.raises(ValidationError) as excinfo:
            make_observation(scope=Scope.SYSTEM, floor=2)
        assert excinfo.value.field_name == "floor"

    def test_system_without_floor(self):
        obs = make_observation(scope=Scope.SYSTEM, floor=None)
        assert obs.floor is None


class TestFloorGroup:
    def test_rejects_wrong_floor(self):
        obs = make_observation(floor=2)
        with pytest.raises(ValidationError):
            FloorGroup(floor=1, observations=(obs,))

    def test_rejects_system_scope(self):
        obs = make_observation(scope=Scope.SYSTEM, floor=None)
        with pytest.raises(ValidationError):
            FloorGroup(floor=1, observations=(obs,))


class TestStructureDocument:
    def _event(self):
        return EventMetadata("Quake", 6.4, dt.date(2020, 1, 7))

    def test_floors_must_ascend(self):
        groups = (
            FloorGroup(2, (make_observation(image_id="a", floor=2),)),
            FloorGroup(1, (make_observation(image_id="b", floor=1),)),
        )
        with pytest.raises(ValidationError) as excinfo:
            StructureDocument(self._event(), make_structure(), (), groups)
        assert excinfo.value.field_name == "floors"

    def test_duplicate_floor_indices_rejected(self):
        groups = (
            FloorGroup(1, (make_observation(image_id="a"),)),
            FloorGroup(1, (make_observation(image_id="b"),)),
        )
        with pytest.raises(ValidationError):
            StructureDocument(self._event(), make_structure(), (), groups)

    def test_foreign_observation_rejected(self):
        group = FloorGroup(1, (make_observation(structure_id="OTHER"),))
        with pytest.raises(ValidationError) as excinfo:
            StructureDocument(self._event(), make_structure(), (), (group,))
        assert excinfo.value.field_name == "structure_id"

    def test_all_observations_order(self):
        system = make_observation(image_id="sys", scope=Scope.SYSTEM, floor=None)
        first = make_observation(image_id="f1")
        second = make_observation(image_id="f2", floor=2)
        doc = StructureDocument(
            self._event(), make_structure(), (system,),
            (FloorGroup(1, (first,)), FloorGroup(2, (second,))),
        )
        assert [o.image_id for o in doc.all_observations()] == ["sys", "f1", "f2"]


class TestRegion:
    def test_requires_members(self):
        with pytest.raises(ValidationError) as excinfo:
            Region("r1", GeoPoint(18.0, -66.6), 2.0, ())
        assert excinfo.value.field_name == "member_ids"

    def test_requires_positive_radius(self):
        with pytest.raises(ValidationError):
            Region("r1", GeoPoint(18.0, -66.6), 0.0, ("S1",))


class TestValueSemantics:
    def test_equal_fields_compare_equal(self):
        assert make_structure() == make_structure()
        assert make_observation() == make_observation()
        assert AttributeSet(damage_state=DamageState.DAMAGED) == AttributeSet(
            damage_state=DamageState.DAMAGED
        )

    def test_different_fields_compare_unequal(self):
        assert make_structure() != make_structure(stories=4)

    def test_immutability(self):
        structure = make_structure()
        with pytest.raises(AttributeError):
            structure.stories = 5
