"""Tests for the power-system data model and file ingestion."""

import random

import pytest

from gridshed import (
    LoadPoint,
    Machine,
    ParseError,
    PowerSystem,
    ValidationError,
    load_system,
    save_system,
    serialize_system,
    total_inertia,
    wecc9_system_path,
)


@pytest.fixture()
def wecc9():
    return load_system(wecc9_system_path())


class TestWecc9Fixture:
    def test_three_machines_with_expected_inertias(self, wecc9):
        assert len(wecc9.machines) == 3
        assert [m.inertia_h for m in wecc9.machines] == [23.64, 6.4, 3.01]

    def test_loads_and_totals(self, wecc9):
        assert [(ld.bus, ld.active) for ld in wecc9.loads] == [
            ("5", 125.0),
            ("6", 90.0),
            ("8", 100.0),
        ]
        assert sum(ld.active for ld in wecc9.loads) == 315.0
        assert sum(ld.reactive for ld in wecc9.loads) == 115.0

    def test_system_constants(self, wecc9):
        assert wecc9.nominal_frequency == 60.0
        assert wecc9.base_power == 100.0
        assert wecc9.damping == 0.0

    def test_all_loads_sheddable(self, wecc9):
        assert all(ld.sheddable for ld in wecc9.loads)


class TestTotalInertia:
    def test_wecc9_all_online(self, wecc9):
        assert total_inertia(wecc9) == pytest.approx(33.05, abs=1e-12)

    def test_wecc9_machine3_offline(self, wecc9):
        assert total_inertia(wecc9.with_machine_offline("G3")) == pytest.approx(
            30.04, abs=1e-12
        )

    def test_single_machine_identity(self):
        system = PowerSystem(
            machines=(Machine("A", inertia_h=5.0, rating=100.0, output=10.0),),
            loads=(),
        )
        assert total_inertia(system) == 5.0

    def test_order_invariance_and_partition_additivity(self):
        rng = random.Random(7)
        machines = tuple(
            Machine(f"M{i}", inertia_h=rng.uniform(0.5, 30.0), rating=100.0)
            for i in range(8)
        )
        total = total_inertia(PowerSystem(machines=machines, loads=()))
        shuffled = list(machines)
        rng.shuffle(shuffled)
        assert total_inertia(
            PowerSystem(machines=tuple(shuffled), loads=())
        ) == pytest.approx(total, rel=1e-12)
        left = PowerSystem(machines=machines[:3], loads=())
        right = PowerSystem(machines=machines[3:], loads=())
        assert total_inertia(left) + total_inertia(right) == pytest.approx(
            total, rel=1e-12
        )


class TestValidation:
    def test_zero_machines_rejected(self, tmp_path):
        path = tmp_path / "empty.toml"
        path.write_text("base_mva = 100.0\nnominal_frequency_hz = 60.0\n")
        with pytest.raises(ValidationError, match="at least one machine required"):
            load_system(path)

    def test_all_machines_offline_rejected(self):
        with pytest.raises(ValidationError, match="online machine"):
            PowerSystem(
                machines=(Machine("A", inertia_h=5.0, rating=100.0, online=False),),
                loads=(),
            )

    def test_duplicate_machine_ids_rejected(self):
        machine = Machine("A", inertia_h=5.0, rating=100.0)
        with pytest.raises(ValidationError, match="unique"):
            PowerSystem(machines=(machine, machine), loads=())

    def test_duplicate_load_buses_rejected(self):
        with pytest.raises(ValidationError, match="unique"):
            PowerSystem(
                machines=(Machine("A", inertia_h=5.0, rating=100.0),),
                loads=(LoadPoint("5", 10.0), LoadPoint("5", 20.0)),
            )

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            (dict(inertia_h=0.0), "inertia_h"),
            (dict(inertia_h=-1.0), "inertia_h"),
            (dict(rating=0.0), "rating"),
            (dict(droop=0.0), "droop"),
            (dict(governor_tc=-0.1), "governor_tc"),
            (dict(output=200.0), "output"),
            (dict(output=-1.0), "output"),
        ],
    )
    def test_machine_invariants(self, kwargs, message):
        base = dict(id="A", inertia_h=5.0, rating=100.0)
        base.update(kwargs)
        with pytest.raises(ValidationError, match=message):
            Machine(**base)

    def test_negative_load_rejected(self):
        with pytest.raises(ValidationError, match="active power"):
            LoadPoint("5", active=-1.0)

    def test_priority_forces_not_sheddable(self):
        load = LoadPoint("5", active=10.0, sheddable=True, priority=True)
        assert load.priority and not load.sheddable

    def test_unknown_machine_lookup(self, wecc9):
        with pytest.raises(ValidationError, match="unknown machine"):
            wecc9.machine("nope")

    def test_unknown_load_lookup(self, wecc9):
        with pytest.raises(ValidationError, match="unknown load"):
            wecc9.load("nope")


class TestParsing:
    def test_malformed_toml_reports_location(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("base_mva = = 100.0\n")
        with pytest.raises(ParseError, match="line 1"):
            load_system(path)

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "missing.toml"
        path.write_text(
            "base_mva = 100.0\nnominal_frequency_hz = 60.0\n"
            "[[machines]]\nid = \"A\"\nrating_mva = 100.0\n"
        )
        with pytest.raises(ParseError, match="inertia_h_s"):
            load_system(path)

    def test_wrong_type_reported(self, tmp_path):
        path = tmp_path / "typed.toml"
        path.write_text(
            "base_mva = \"a hundred\"\nnominal_frequency_hz = 60.0\n"
            "[[machines]]\nid = \"A\"\ninertia_h_s = 5.0\nrating_mva = 100.0\n"
        )
        with pytest.raises(ParseError, match="base_mva"):
            load_system(path)

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            load_system(tmp_path / "nope.toml")

    def test_defaults_applied_for_omitted_governor_data(self, tmp_path):
        path = tmp_path / "bare.toml"
        path.write_text(
            "base_mva = 100.0\nnominal_frequency_hz = 60.0\n"
            "[[machines]]\nid = \"A\"\ninertia_h_s = 5.0\nrating_mva = 100.0\n"
        )
        machine = load_system(path).machines[0]
        assert machine.droop == 0.05
        assert machine.governor_tc == 0.5
        assert machine.online

    def test_unknown_sections_ignored(self, tmp_path):
        # Fuller datasets may carry line/transformer tables; they are not used.
        path = tmp_path / "full.toml"
        path.write_text(
            "base_mva = 100.0\nnominal_frequency_hz = 60.0\n"
            "[[machines]]\nid = \"A\"\ninertia_h_s = 5.0\nrating_mva = 100.0\n"
            "[[lines]]\nfrom = \"1\"\nto = \"2\"\nx_pu = 0.0576\n"
        )
        assert len(load_system(path).machines) == 1


class TestRoundTrip:
    def test_wecc9_round_trips(self, wecc9, tmp_path):
        path = tmp_path / "copy.toml"
        save_system(wecc9, path)
        assert load_system(path) == wecc9

    def test_awkward_floats_round_trip(self, tmp_path):
        system = PowerSystem(
            machines=(
                Machine("A", inertia_h=0.1 + 0.2, rating=123.456789, output=1e-3),
                Machine("B", inertia_h=9.999999999999998, rating=50.0, online=False),
            ),
            loads=(LoadPoint("x", active=1 / 3, reactive=2 / 7, priority=True),),
            nominal_frequency=50.0,
            base_power=137.035,
            damping=0.017,
        )
        path = tmp_path / "odd.toml"
        save_system(system, path)
        assert load_system(path) == system

    def test_serialize_is_parseable_text(self, wecc9):
        text = serialize_system(wecc9)
        assert text.startswith("base_mva = 100.0")
        assert "[[machines]]" in text and "[[loads]]" in text
