"""Multi-machine frequency dynamics and disturbance-power estimation.

Model
-----
Online machines are assumed to stay synchronised (coherent response), so
a power imbalance splits among them in proportion to their inertia and
every machine swings with the centre-of-inertia (COI) frequency.  Summing
the per-machine swing equations under that sharing rule collapses them to
a single COI swing equation,

    2 * sum(H_i) / f_n * d(f_c)/dt  =  sum(p_mech_i) - dP - D * x,

driven by per-machine first-order governor lags

    T_g,i * d(p_mech_i)/dt  =  -(rating_i / base) / R_i * x - p_mech_i,

where ``x`` is the per-unit COI frequency deviation, ``dP`` the net
event-driven imbalance in per unit on the system base (positive =
generation deficit) and ``D`` the optional load damping.  At the instant
of an imbalance the COI slope is exactly ``-dP * f_n / (2 * sum(H_i))``,
and the steady state settles at ``-dP / beta`` with
``beta = sum((rating_i/base)/R_i) + D``.

Integration is classical fixed-step 4th-order Runge-Kutta, so identical
inputs produce bit-identical traces.  Events are applied at the first
sample boundary within half a step of their scheduled time.  A tripped
machine stops contributing output, inertia and governor response; its
trace column holds the frequency at which it disconnected.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, floor
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .coalition_game import MAX_PLAYERS, CoalitionGame
from .errors import ValidationError
from .grid_model import PowerSystem, total_inertia

#: Default least-squares window for the initial-ROCOF estimate (s).
DEFAULT_ROCOF_WINDOW_S = 0.1
#: Default integration step (s); the upper bound accepted by simulate is 10 ms.
DEFAULT_DT_S = 1e-3


@dataclass(frozen=True)
class MachineOutage:
    """Trip of a machine: its output becomes the imbalance, its inertia leaves."""

    time: float
    machine_id: str


@dataclass(frozen=True)
class LoadShed:
    """Disconnection of ``amount_mw`` of the load at ``bus``."""

    time: float
    bus: str
    amount_mw: float

    def __post_init__(self) -> None:
        if self.amount_mw < 0:
            raise ValidationError("shed amount must be >= 0")


@dataclass(frozen=True)
class LoadStep:
    """Sudden load change at ``bus`` (positive = extra demand)."""

    time: float
    bus: str
    delta_mw: float


Event = Union[MachineOutage, LoadShed, LoadStep]


@dataclass(frozen=True)
class EventSchedule:
    """A time-ordered list of disturbance/shedding events."""

    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        last = 0.0
        for ev in self.events:
            if ev.time < 0:
                raise ValidationError("event times must be non-negative")
            if ev.time < last:
                raise ValidationError("event times must be non-decreasing")
            last = ev.time


@dataclass(frozen=True)
class FrequencyTrace:
    """Fixed-step frequency series for each machine plus the COI average.

    ``freqs[i, k]`` is machine i's frequency at sample k; after a machine
    trips the row holds its disconnection frequency and ``online[i, k]``
    turns false.  ``coi`` satisfies the inertia-weighted average of the
    online rows at every sample.
    """

    time: np.ndarray
    machine_ids: tuple[str, ...]
    freqs: np.ndarray
    coi: np.ndarray
    online: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        if self.freqs.shape != (len(self.machine_ids), self.time.shape[0]):
            raise ValidationError("per-machine series must match the time grid")
        if self.coi.shape != self.time.shape or self.online.shape != self.freqs.shape:
            raise ValidationError("trace series lengths must agree")


def coi_frequency(freqs: Sequence[float], inertias: Sequence[float]) -> float:
    """Inertia-weighted average frequency (Hz) of a set of machines."""
    f = np.asarray(freqs, dtype=float)
    h = np.asarray(inertias, dtype=float)
    if f.size == 0 or f.shape != h.shape:
        raise ValidationError("need equal, non-empty frequency and inertia vectors")
    if np.any(h <= 0):
        raise ValidationError("inertia constants must be > 0")
    # Averaging deviations from an anchor avoids round-off when the
    # frequencies are (nearly) identical.
    anchor = float(f[0])
    return anchor + float(np.dot(h, f - anchor) / h.sum())


def disturbance_power(
    rocof: float, total_inertia: float, nominal_hz: float, base_mva: float
) -> float:
    """Generation deficit (MW) implied by an initial COI frequency slope.

    ``2 * sum(H) * |df_c/dt| / f_n`` in per unit, scaled to MW by the
    system base.
    """
    if nominal_hz <= 0:
        raise ValidationError("nominal frequency must be > 0")
    if total_inertia <= 0:
        raise ValidationError("total inertia must be > 0")
    if base_mva <= 0:
        raise ValidationError("base power must be > 0")
    return 2.0 * total_inertia * abs(rocof) / nominal_hz * base_mva


def analytic_initial_rocof(
    deficit_mw: float, total_inertia: float, nominal_hz: float, base_mva: float
) -> float:
    """Exact COI slope (Hz/s) at the instant a deficit of ``deficit_mw`` appears."""
    if nominal_hz <= 0 or total_inertia <= 0 or base_mva <= 0:
        raise ValidationError("nominal frequency, inertia and base must be > 0")
    return -(deficit_mw / base_mva) * nominal_hz / (2.0 * total_inertia)


@dataclass(frozen=True)
class DisturbanceEstimate:
    """Stage-1 output: the deficit implied by a measured initial COI slope.

    ``per_machine_dp`` splits the deficit across the online machines in
    proportion to inertia, their instantaneous synchronous share of the
    imbalance.
    """

    rocof: float
    total_inertia: float
    p_d: float
    machine_ids: tuple[str, ...]
    per_machine_dp: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.p_d < 0:
            raise ValidationError("disturbance power must be >= 0")
        if len(self.machine_ids) != len(self.per_machine_dp):
            raise ValidationError("per-machine deviations must match machine ids")


def estimate_disturbance(rocof: float, system: PowerSystem) -> DisturbanceEstimate:
    """Disturbance power and its per-machine split for the online machines."""
    online = list(system.online_machines())
    h_total = total_inertia(system)
    p_d = disturbance_power(
        rocof, h_total, system.nominal_frequency, system.base_power
    )
    return DisturbanceEstimate(
        rocof=rocof,
        total_inertia=h_total,
        p_d=p_d,
        machine_ids=tuple(m.id for m in online),
        per_machine_dp=tuple(m.inertia_h / h_total * p_d for m in online),
    )


def _validate_events(system: PowerSystem, schedule: EventSchedule) -> None:
    """Reject schedules that would fail mid-integration.

    Event effects on the online set and remaining load are state
    independent, so the whole schedule can be replayed up front.
    """
    online = {m.id for m in system.machines if m.online}
    remaining = {ld.bus: ld.active for ld in system.loads}
    for ev in schedule.events:
        if isinstance(ev, MachineOutage):
            if ev.machine_id not in {m.id for m in system.machines}:
                raise ValidationError(f"unknown machine: {ev.machine_id}")
            if ev.machine_id not in online:
                raise ValidationError(
                    f"machine {ev.machine_id} is already offline at t={ev.time}"
                )
            online.remove(ev.machine_id)
            if not online:
                raise ValidationError("outage would leave no online machine")
        else:
            if ev.bus not in remaining:
                raise ValidationError(f"unknown load bus: {ev.bus}")
            if isinstance(ev, LoadShed):
                if ev.amount_mw > remaining[ev.bus] + 1e-9:
                    raise ValidationError(
                        f"shed of {ev.amount_mw} MW exceeds remaining "
                        f"{remaining[ev.bus]} MW at bus {ev.bus}"
                    )
                remaining[ev.bus] -= ev.amount_mw
            else:
                remaining[ev.bus] = max(0.0, remaining[ev.bus] + ev.delta_mw)


def simulate(
    system: PowerSystem,
    events: EventSchedule,
    duration: float,
    dt: float = DEFAULT_DT_S,
) -> FrequencyTrace:
    """Integrate the COI droop model over ``duration`` seconds.

    The system starts in equilibrium at nominal frequency (each machine's
    mechanical power balancing its electrical output); only scheduled
    events perturb it.
    """
    if duration <= 0:
        raise ValidationError("duration must be > 0")
    if not 0.0 < dt <= 0.01:
        raise ValidationError("dt must lie in (0, 0.01] s")
    _validate_events(system, events)

    machines = system.machines
    m = len(machines)
    f_n = system.nominal_frequency
    base = system.base_power
    damping = system.damping
    index = {mach.id: i for i, mach in enumerate(machines)}
    gain = [mach.rating / base / mach.droop for mach in machines]
    tg = [mach.governor_tc for mach in machines]

    active = [i for i, mach in enumerate(machines) if mach.online]
    sum_h = sum(machines[i].inertia_h for i in active)
    dp_event = 0.0  # net imbalance, pu on system base (positive = deficit)
    x = 0.0  # COI frequency deviation, pu
    pm = [0.0] * m  # governor mechanical-power deviations, pu

    n_steps = round(duration / dt)
    coi = np.empty(n_steps + 1)
    # (trip sample, frequency at disconnection); initially-offline machines
    # report nominal frequency throughout.
    trip_at: dict[int, tuple[int, float]] = {
        i: (0, f_n) for i, mach in enumerate(machines) if not mach.online
    }

    def deriv(x_: float, pm_: list[float]) -> tuple[float, list[float]]:
        acc = -dp_event - damping * x_
        dpm = [0.0] * m
        for i in active:
            if tg[i] > 0.0:
                acc += pm_[i]
                dpm[i] = (-gain[i] * x_ - pm_[i]) / tg[i]
            else:
                acc += -gain[i] * x_  # instantaneous droop
        return acc / (2.0 * sum_h), dpm

    pending = list(events.events)
    next_ev = 0
    half = dt / 2.0
    sixth = dt / 6.0
    for k in range(n_steps + 1):
        t = k * dt
        while next_ev < len(pending) and pending[next_ev].time <= t + half:
            ev = pending[next_ev]
            next_ev += 1
            if isinstance(ev, MachineOutage):
                i = index[ev.machine_id]
                mech = pm[i] if tg[i] > 0.0 else -gain[i] * x
                dp_event += machines[i].output / base + mech
                active.remove(i)
                sum_h -= machines[i].inertia_h
                trip_at[i] = (k, f_n * (1.0 + x))
            elif isinstance(ev, LoadShed):
                dp_event -= ev.amount_mw / base
            else:
                dp_event += ev.delta_mw / base
        coi[k] = f_n * (1.0 + x)
        if k == n_steps:
            break
        dx1, dp1 = deriv(x, pm)
        dx2, dp2 = deriv(x + half * dx1, [p + half * d for p, d in zip(pm, dp1)])
        dx3, dp3 = deriv(x + half * dx2, [p + half * d for p, d in zip(pm, dp2)])
        dx4, dp4 = deriv(x + dt * dx3, [p + dt * d for p, d in zip(pm, dp3)])
        x += sixth * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        pm = [
            p + sixth * (a + 2.0 * b + 2.0 * c + d)
            for p, a, b, c, d in zip(pm, dp1, dp2, dp3, dp4)
        ]

    time = np.arange(n_steps + 1) * dt
    freqs = np.tile(coi, (m, 1))
    online = np.ones((m, n_steps + 1), dtype=bool)
    for i, (k_trip, f_frozen) in trip_at.items():
        freqs[i, k_trip:] = f_frozen
        online[i, k_trip:] = False
    return FrequencyTrace(
        time=time,
        machine_ids=tuple(mach.id for mach in machines),
        freqs=freqs,
        coi=coi,
        online=online,
        dt=dt,
    )


def initial_rocof(
    trace: FrequencyTrace,
    event_time: float,
    window: float = DEFAULT_ROCOF_WINDOW_S,
) -> float:
    """Least-squares slope (Hz/s) of the COI frequency over a post-event window."""
    if window <= trace.dt:
        raise ValidationError("window must exceed the trace step")
    tol = 1e-9
    first = ceil((event_time - tol) / trace.dt)
    last = floor((event_time + window + tol) / trace.dt)
    if first < 0 or last >= trace.time.shape[0]:
        raise ValidationError("window lies outside the trace")
    t = trace.time[first : last + 1]
    f = trace.coi[first : last + 1]
    slope, _ = np.polyfit(t, f, 1)
    return float(slope)


def characteristic_functions(
    system: PowerSystem,
    candidates: Sequence[str],
    disturbance: EventSchedule,
    *,
    shed_delay: float = 2.0,
    duration: float | None = None,
    dt: float = DEFAULT_DT_S,
    rocof_window: float = DEFAULT_ROCOF_WINDOW_S,
    settle_time: float = 30.0,
) -> tuple[CoalitionGame, CoalitionGame]:
    """Generate both load-coalition games by repeated simulation.

    For every non-empty coalition of candidate buses, the disturbance is
    re-run with the coalition's loads fully shed:

    * delta-f worth: rise of the final COI frequency over the no-shedding
      baseline, with the shed applied ``shed_delay`` seconds after the
      disturbance;
    * ROCOF worth: improvement of the initial COI slope when the shed is
      instead coincident with the disturbance (bigger sheds arrest the
      decline more, so worth grows with coalition size).

    The empty coalition is worth exactly 0 in both games.
    """
    candidates = tuple(candidates)
    if not 1 <= len(candidates) <= MAX_PLAYERS:
        raise ValidationError(
            f"need between 1 and {MAX_PLAYERS} candidate buses, got {len(candidates)}"
        )
    if len(set(candidates)) != len(candidates):
        raise ValidationError("candidate buses must be unique")
    loads = {ld.bus: ld for ld in system.loads}
    for bus in candidates:
        if bus not in loads:
            raise ValidationError(f"unknown load bus: {bus}")
        if not loads[bus].sheddable:
            raise ValidationError(f"candidate load at bus {bus} is not sheddable")
    if shed_delay < 0:
        raise ValidationError("shed delay must be >= 0")

    t_dist = disturbance.events[0].time if disturbance.events else 0.0
    if duration is None:
        duration = t_dist + shed_delay + settle_time
    rocof_duration = t_dist + rocof_window + 0.5

    def run(extra: list[Event], run_duration: float) -> FrequencyTrace:
        merged = sorted(list(disturbance.events) + extra, key=lambda ev: ev.time)
        return simulate(system, EventSchedule(tuple(merged)), run_duration, dt)

    baseline = run([], duration)
    base_end = float(baseline.coi[-1])
    base_rocof = initial_rocof(run([], rocof_duration), t_dist, rocof_window)

    n = len(candidates)
    df_values = np.zeros(1 << n)
    rocof_values = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        members = [candidates[i] for i in range(n) if mask >> i & 1]
        delayed = [
            LoadShed(t_dist + shed_delay, bus, loads[bus].active) for bus in members
        ]
        coincident = [LoadShed(t_dist, bus, loads[bus].active) for bus in members]
        df_values[mask] = float(run(delayed, duration).coi[-1]) - base_end
        rocof_values[mask] = (
            initial_rocof(run(coincident, rocof_duration), t_dist, rocof_window)
            - base_rocof
        )
    return (
        CoalitionGame(candidates, df_values),
        CoalitionGame(candidates, rocof_values),
    )


def write_trace_csv(trace: FrequencyTrace, path: str | Path) -> None:
    """Write ``time_s,f_coi_hz,f_<id>_hz,...`` rows with 6-decimal formatting."""
    header = "time_s,f_coi_hz," + ",".join(
        f"f_{mid}_hz" for mid in trace.machine_ids
    )
    data = np.column_stack([trace.time, trace.coi, trace.freqs.T])
    np.savetxt(path, data, fmt="%.6f", delimiter=",", header=header, comments="")
