"""Two-stage shedding planner: disturbance power in, per-bus amounts out.

Stage 1 turns a measured initial ROCOF into the total power to shed;
stage 2 splits that total across candidate buses in proportion to their
equivalent Shapley values, then rounds to the shedding granularity by
largest-remainder apportionment so the rounded amounts still sum to the
total exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import floor
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .coalition_game import ShapleyResult
from .errors import InfeasiblePlanError, ValidationError
from .frequency_dynamics import estimate_disturbance
from .grid_model import PowerSystem


@dataclass(frozen=True)
class PlanEntry:
    bus: str
    psi_eqv: float
    distribution_factor: float
    raw_mw: float
    rounded_mw: float


@dataclass(frozen=True)
class SheddingPlan:
    """Per-bus shedding amounts for a disturbance of ``total_pd_mw``."""

    entries: tuple[PlanEntry, ...]
    total_pd_mw: float
    granularity_mw: float

    @property
    def rounded_total_mw(self) -> float:
        return sum(e.rounded_mw for e in self.entries)

    def amounts_by_bus(self) -> dict[str, float]:
        return {e.bus: e.rounded_mw for e in self.entries}


def default_trigger_threshold(nominal_hz: float) -> float:
    """Frequency (Hz) below which shedding is armed; 59.5 Hz on a 60 Hz system."""
    if nominal_hz <= 0:
        raise ValidationError("nominal frequency must be > 0")
    return nominal_hz * (59.5 / 60.0)


def distribution_factors(psi_eqv: Sequence[float]) -> np.ndarray:
    """Normalise equivalent Shapley values into shares summing to one."""
    psi = np.asarray(psi_eqv, dtype=float)
    if psi.size == 0:
        raise ValidationError("need at least one candidate bus")
    if np.any(psi < 0):
        raise ValidationError("equivalent Shapley values must be >= 0")
    total = psi.sum()
    if total <= 0:
        raise ValidationError("degenerate Shapley values: all zero")
    return psi / total


def _largest_remainder(
    quotas: Sequence[float], units: int, buses: Sequence[str]
) -> list[int]:
    """Integer apportionment of ``units`` with quotas' floors plus bonuses.

    Bonus units go to the largest fractional remainders; ties break on
    ascending bus id so the result is deterministic.
    """
    floors = [floor(q) for q in quotas]
    remainders = [q - f for q, f in zip(quotas, floors)]
    extra = units - sum(floors)
    order = sorted(range(len(quotas)), key=lambda i: (-remainders[i], buses[i]))
    out = list(floors)
    for i in order[:extra]:
        out[i] += 1
    return out


def allocate(
    pd_mw: float,
    psi_eqv: Mapping[str, float],
    granularity_mw: float = 1.0,
    caps_mw: Mapping[str, float] | None = None,
) -> SheddingPlan:
    """Split ``pd_mw`` across buses in proportion to their Shapley values.

    Raw amounts are ``factor * pd_mw`` per bus.  Rounded amounts are
    integer multiples of the granularity whose sum equals ``pd_mw``
    rounded to the granularity (half away from zero); without caps each
    bus lands within one granularity unit of its raw amount.

    When caps are given, any bus pushed past its cap is pinned there and
    the excess is re-apportioned among the remaining buses in proportion
    to their factors, iterating until feasible.

    Raises :class:`InfeasiblePlanError` when the total cannot be placed.
    """
    if pd_mw < 0:
        raise ValidationError("disturbance power must be >= 0")
    if granularity_mw <= 0:
        raise ValidationError("granularity must be > 0")
    buses = list(psi_eqv.keys())
    psi = [psi_eqv[b] for b in buses]
    factors = distribution_factors(psi)
    raw = factors * pd_mw

    g = granularity_mw
    units_total = floor(pd_mw / g + 0.5)
    # Caps in whole granularity units (1e-9 slack absorbs float division).
    cap_units = None
    if caps_mw is not None:
        missing = [b for b in buses if b not in caps_mw]
        if missing:
            raise ValidationError(f"missing cap(s) for bus(es): {missing}")
        cap_units = {b: floor(caps_mw[b] / g + 1e-9) for b in buses}
        if units_total > sum(cap_units.values()):
            raise InfeasiblePlanError(
                f"disturbance power {pd_mw:g} MW exceeds total sheddable "
                f"capacity {sum(cap_units.values()) * g:g} MW"
            )

    assigned: dict[str, int] = {}
    index_of = {b: i for i, b in enumerate(buses)}
    active = list(buses)
    remaining_units = units_total
    # First pass apportions against the unscaled quotas factor * pd/g, which
    # keeps every bus within one granularity unit of its raw amount; passes
    # after a cap binds re-apportion the integer remainder instead.
    quota_total = pd_mw / g
    while True:
        weight = {b: factors[index_of[b]] for b in active}
        total_weight = sum(weight.values())
        if remaining_units > 0 and (not active or total_weight <= 0):
            raise InfeasiblePlanError(
                "cannot redistribute shedding: remaining candidates have no share"
            )
        quotas = [
            weight[b] / total_weight * quota_total if total_weight > 0 else 0.0
            for b in active
        ]
        shares = dict(zip(active, _largest_remainder(quotas, remaining_units, active)))
        if cap_units is None:
            assigned.update(shares)
            break
        over = [b for b in active if shares[b] > cap_units[b]]
        if not over:
            assigned.update(shares)
            break
        for b in over:
            assigned[b] = cap_units[b]
            remaining_units -= cap_units[b]
            active.remove(b)
        quota_total = remaining_units

    entries = tuple(
        PlanEntry(
            bus=b,
            psi_eqv=float(psi[i]),
            distribution_factor=float(factors[i]),
            raw_mw=float(raw[i]),
            rounded_mw=assigned[b] * g,
        )
        for i, b in enumerate(buses)
    )
    return SheddingPlan(entries=entries, total_pd_mw=pd_mw, granularity_mw=g)


def candidate_caps(system: PowerSystem, buses: Sequence[str]) -> dict[str, float]:
    """Shedding capacity per candidate bus (its load size); all must be sheddable."""
    caps = {}
    for bus in buses:
        load = system.load(bus)
        if not load.sheddable:
            raise ValidationError(f"candidate load at bus {bus} is not sheddable")
        caps[bus] = load.active
    return caps


def plan_from_measurement(
    rocof: float,
    system: PowerSystem,
    shapley: ShapleyResult,
    granularity_mw: float = 1.0,
) -> SheddingPlan:
    """Stage-1 + stage-2 pipeline from a measured initial COI ROCOF.

    The disturbance power follows from the ROCOF and the inertia of the
    machines still online; amounts are capped at each candidate load's
    size.
    """
    pd = estimate_disturbance(rocof, system).p_d
    caps = candidate_caps(system, shapley.players)
    psi = dict(zip(shapley.players, (float(v) for v in shapley.psi_eqv)))
    return allocate(pd, psi, granularity_mw, caps)


def format_plan_table(plan: SheddingPlan) -> str:
    """Aligned text table mirroring the plan CSV columns."""
    header = f"{'bus':<8}{'psi_eqv':>10}{'factor':>10}{'raw_mw':>10}{'rounded_mw':>12}"
    lines = [header, "-" * len(header)]
    for e in plan.entries:
        lines.append(
            f"{e.bus:<8}{e.psi_eqv:>10.4f}{e.distribution_factor:>10.4f}"
            f"{e.raw_mw:>10.2f}{e.rounded_mw:>12g}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'total':<8}{'':>10}{'':>10}{plan.total_pd_mw:>10.2f}"
        f"{plan.rounded_total_mw:>12g}"
    )
    return "\n".join(lines)


def write_plan_csv(plan: SheddingPlan, path: str | Path) -> None:
    lines = ["bus,psi_eqv,distribution_factor,raw_mw,rounded_mw"]
    for e in plan.entries:
        lines.append(
            f"{e.bus},{e.psi_eqv:.6f},{e.distribution_factor:.6f},"
            f"{e.raw_mw:.6f},{e.rounded_mw:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
