"""Tests for distribution factors, allocation and the measurement pipeline."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridshed import (
    InfeasiblePlanError,
    ValidationError,
    allocate,
    default_trigger_threshold,
    distribution_factors,
    equivalent_shapley,
    format_plan_table,
    load_system,
    plan_from_measurement,
    read_charfun_file,
    wecc9_charfun_path,
    wecc9_system_path,
    write_plan_csv,
)

# Reference equivalent Shapley values of the three-location case.
PSI_THREE = {"5": 1.1973, "6": 0.8581, "8": 0.9424}
# Reference two-location equivalent Shapley values.
PSI_TWO = {"5": 1.2222, "8": 0.9187}


class TestDistributionFactors:
    def test_three_location_factors(self):
        factors = distribution_factors(list(PSI_THREE.values()))
        assert factors == pytest.approx((0.39939, 0.28624, 0.31436), abs=5e-6)
        assert factors.sum() == pytest.approx(1.0, abs=1e-12)

    def test_equal_split(self):
        assert distribution_factors([1.0, 1.0]) == pytest.approx((0.5, 0.5), abs=0)

    def test_dummy_gets_nothing(self):
        assert distribution_factors([2.0, 0.0]) == pytest.approx((1.0, 0.0), abs=0)

    def test_all_zero_rejected(self):
        with pytest.raises(ValidationError, match="degenerate"):
            distribution_factors([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            distribution_factors([1.0, -0.1])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            distribution_factors([])


class TestAllocate:
    def test_three_location_85mw(self):
        plan = allocate(85.0, PSI_THREE)
        assert plan.amounts_by_bus() == {"5": 34.0, "6": 24.0, "8": 27.0}
        assert plan.rounded_total_mw == 85.0
        raw = [e.raw_mw for e in plan.entries]
        assert sum(raw) == pytest.approx(85.0, rel=1e-9)

    def test_two_location_85mw(self):
        plan = allocate(85.0, PSI_TWO)
        assert plan.amounts_by_bus() == {"5": 49.0, "8": 36.0}

    def test_equal_split(self):
        plan = allocate(10.0, {"a": 1.0, "b": 1.0})
        assert plan.amounts_by_bus() == {"a": 5.0, "b": 5.0}

    def test_zero_pd(self):
        plan = allocate(0.0, PSI_THREE)
        assert all(e.rounded_mw == 0.0 for e in plan.entries)
        assert all(e.raw_mw == 0.0 for e in plan.entries)

    def test_fractional_granularity(self):
        plan = allocate(10.3, {"a": 1.0, "b": 1.0}, granularity_mw=0.5)
        total = plan.rounded_total_mw
        assert total == 10.5  # nearest half-MW step, half rounded up
        for e in plan.entries:
            assert (e.rounded_mw / 0.5) == pytest.approx(round(e.rounded_mw / 0.5))

    def test_tie_broken_by_bus_id(self):
        # Identical remainders: the lexicographically smaller bus id wins.
        plan = allocate(5.0, {"b": 1.0, "a": 1.0})
        assert plan.amounts_by_bus() == {"a": 3.0, "b": 2.0}

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            allocate(-1.0, PSI_THREE)
        with pytest.raises(ValidationError):
            allocate(10.0, PSI_THREE, granularity_mw=0.0)

    def test_cap_redistributes_proportionally(self):
        plan = allocate(
            100.0, {"a": 9.0, "b": 1.0}, caps_mw={"a": 50.0, "b": 60.0}
        )
        assert plan.amounts_by_bus() == {"a": 50.0, "b": 50.0}
        # Raw amounts keep the uncapped proportional split.
        assert [e.raw_mw for e in plan.entries] == pytest.approx([90.0, 10.0])

    def test_cap_iterates_until_feasible(self):
        plan = allocate(
            100.0,
            {"a": 8.0, "b": 1.0, "c": 1.0},
            caps_mw={"a": 40.0, "b": 55.0, "c": 5.0},
        )
        assert plan.amounts_by_bus() == {"a": 40.0, "b": 55.0, "c": 5.0}

    def test_total_over_capacity_infeasible(self):
        with pytest.raises(InfeasiblePlanError, match="exceeds total sheddable"):
            allocate(100.0, {"a": 1.0, "b": 1.0}, caps_mw={"a": 40.0, "b": 40.0})

    def test_redistribution_to_zero_share_buses_infeasible(self):
        with pytest.raises(InfeasiblePlanError, match="no share"):
            allocate(50.0, {"a": 1.0, "b": 0.0}, caps_mw={"a": 10.0, "b": 100.0})

    def test_missing_cap_rejected(self):
        with pytest.raises(ValidationError, match="missing cap"):
            allocate(10.0, {"a": 1.0, "b": 1.0}, caps_mw={"a": 10.0})


class TestAllocateProperties:
    @given(
        pd=st.floats(min_value=0.0, max_value=2000.0),
        psi=st.lists(
            st.floats(min_value=0.0, max_value=100.0), min_size=1, max_size=8
        ).filter(lambda xs: sum(xs) > 1e-6),
    )
    @settings(max_examples=200, deadline=None)
    def test_exact_total_and_bounded_deviation(self, pd, psi):
        buses = {f"b{i}": v for i, v in enumerate(psi)}
        plan = allocate(pd, buses, granularity_mw=1.0)
        assert plan.rounded_total_mw == float(int(pd + 0.5))
        for e in plan.entries:
            assert abs(e.rounded_mw - e.raw_mw) < 1.0

    @given(
        pd=st.floats(min_value=0.0, max_value=2000.0),
        psi=st.lists(st.integers(min_value=0, max_value=1000), min_size=1, max_size=8)
        .filter(lambda xs: sum(xs) > 0),
        scale=st.sampled_from([0.25, 0.5, 2.0, 8.0, 1024.0]),
    )
    @settings(max_examples=200, deadline=None)
    def test_scale_invariance(self, pd, psi, scale):
        # Normalisation makes the factors scale-free; power-of-two scales
        # keep the float arithmetic exact so the plans match bitwise.
        base = {f"b{i}": float(v) for i, v in enumerate(psi)}
        scaled = {b: v * scale for b, v in base.items()}
        plan_a = allocate(pd, base)
        plan_b = allocate(pd, scaled)
        for ea, eb in zip(plan_a.entries, plan_b.entries):
            assert ea.distribution_factor == eb.distribution_factor
            assert ea.raw_mw == eb.raw_mw
            assert ea.rounded_mw == eb.rounded_mw

    @given(
        pd=st.floats(min_value=0.0, max_value=2000.0),
        psi=st.lists(
            st.floats(min_value=0.01, max_value=100.0), min_size=2, max_size=6
        ),
        bump=st.floats(min_value=0.01, max_value=50.0),
        which=st.integers(min_value=0, max_value=5),
    )
    @settings(max_examples=200, deadline=None)
    def test_raising_psi_never_lowers_raw_amount(self, pd, psi, bump, which):
        which %= len(psi)
        base = {f"b{i}": v for i, v in enumerate(psi)}
        bumped = dict(base)
        bumped[f"b{which}"] += bump
        raw_before = allocate(pd, base).entries[which].raw_mw
        raw_after = allocate(pd, bumped).entries[which].raw_mw
        assert raw_after >= raw_before - 1e-9

    @given(
        amounts=st.lists(st.integers(min_value=0, max_value=400), min_size=1,
                         max_size=8).filter(lambda xs: sum(xs) > 0)
    )
    @settings(max_examples=200, deadline=None)
    def test_idempotent_on_integral_amounts(self, amounts):
        psi = {f"b{i}": float(v) for i, v in enumerate(amounts)}
        plan = allocate(float(sum(amounts)), psi)
        assert [e.rounded_mw for e in plan.entries] == [float(v) for v in amounts]


@pytest.fixture(scope="module")
def shapley():
    return equivalent_shapley(*read_charfun_file(wecc9_charfun_path()))


@pytest.fixture(scope="module")
def post_outage_system():
    return load_system(wecc9_system_path()).with_machine_offline("G3")


class TestPlanFromMeasurement:
    def test_machine3_outage_plan(self, shapley, post_outage_system):
        plan = plan_from_measurement(-0.8489, post_outage_system, shapley)
        assert plan.total_pd_mw == pytest.approx(85.0, abs=0.01)
        assert plan.amounts_by_bus() == {"5": 34.0, "6": 24.0, "8": 27.0}

    def test_zero_rocof_yields_empty_plan(self, shapley, post_outage_system):
        plan = plan_from_measurement(0.0, post_outage_system, shapley)
        assert plan.total_pd_mw == 0.0
        assert all(e.rounded_mw == 0.0 for e in plan.entries)

    def test_excessive_rocof_infeasible(self, shapley, post_outage_system):
        # 2*30.04*10/60*100 ~ 1001 MW against 315 MW of sheddable load.
        with pytest.raises(InfeasiblePlanError):
            plan_from_measurement(-10.0, post_outage_system, shapley)

    def test_non_sheddable_candidate_rejected(self, shapley):
        system = load_system(wecc9_system_path())
        protected = type(system)(
            machines=system.machines,
            loads=tuple(
                type(ld)(ld.bus, ld.active, ld.reactive, priority=True)
                if ld.bus == "5"
                else ld
                for ld in system.loads
            ),
            nominal_frequency=system.nominal_frequency,
            base_power=system.base_power,
        )
        with pytest.raises(ValidationError, match="bus 5"):
            plan_from_measurement(-0.5, protected, shapley)


class TestOutputs:
    def test_plan_csv_format(self, tmp_path):
        plan = allocate(85.0, PSI_THREE)
        path = tmp_path / "plan.csv"
        write_plan_csv(plan, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "bus,psi_eqv,distribution_factor,raw_mw,rounded_mw"
        assert lines[1].startswith("5,1.197300,0.399393,")
        assert lines[1].endswith(",34.000000")

    def test_plan_table_columns(self):
        table = format_plan_table(allocate(85.0, PSI_THREE))
        lines = table.splitlines()
        assert lines[0].split() == ["bus", "psi_eqv", "factor", "raw_mw", "rounded_mw"]
        assert lines[2].split() == ["5", "1.1973", "0.3994", "33.95", "34"]
        assert lines[-1].split() == ["total", "85.00", "85"]

    def test_default_trigger_threshold(self):
        assert default_trigger_threshold(60.0) == 59.5
        assert default_trigger_threshold(50.0) == pytest.approx(49.5833333333)
        with pytest.raises(ValidationError):
            default_trigger_threshold(0.0)
