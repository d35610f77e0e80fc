"""Power-system data model and TOML file ingestion.

The model is intentionally frequency-centric: machines carry inertia,
droop and an initial output; loads carry active power and shedding
eligibility.  Network topology (lines, transformers, load flow) is out of
scope -- unknown top-level sections in a system file are accepted and
ignored so that fuller datasets can be loaded as-is.

All inertia constants are interpreted on the common system base
(``base_power``), so total system inertia is their direct sum.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParseError, ValidationError

#: Defaults applied when a system file omits governor data (the usual case
#: for inertia-only datasets).
DEFAULT_DROOP_PU = 0.05
DEFAULT_GOVERNOR_TC_S = 0.5


@dataclass(frozen=True)
class Machine:
    """A synchronous machine participating in frequency dynamics.

    ``inertia_h`` is the inertia constant H in seconds on the system base.
    ``droop`` is the per-unit speed regulation R (frequency deviation per
    unit power).  ``governor_tc`` is the first-order governor lag in
    seconds; zero means an instantaneous droop response.
    """

    id: str
    inertia_h: float
    rating: float
    droop: float = DEFAULT_DROOP_PU
    governor_tc: float = DEFAULT_GOVERNOR_TC_S
    output: float = 0.0
    online: bool = True

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("machine id must be non-empty")
        if self.inertia_h <= 0:
            raise ValidationError(f"machine {self.id}: inertia_h must be > 0")
        if self.rating <= 0:
            raise ValidationError(f"machine {self.id}: rating must be > 0")
        if self.droop <= 0:
            raise ValidationError(f"machine {self.id}: droop must be > 0")
        if self.governor_tc < 0:
            raise ValidationError(f"machine {self.id}: governor_tc must be >= 0")
        if not 0.0 <= self.output <= self.rating:
            raise ValidationError(
                f"machine {self.id}: output must lie in [0, rating]"
            )


@dataclass(frozen=True)
class LoadPoint:
    """A load connected at a bus.

    Reactive power is carried for data fidelity but never used by the
    frequency model.  A priority load is forced non-sheddable.
    """

    bus: str
    active: float
    reactive: float = 0.0
    sheddable: bool = True
    priority: bool = False

    def __post_init__(self) -> None:
        if not self.bus:
            raise ValidationError("load bus id must be non-empty")
        if self.active < 0:
            raise ValidationError(f"load {self.bus}: active power must be >= 0")
        if self.priority and self.sheddable:
            # Priority loads are never candidates; normalise rather than reject.
            object.__setattr__(self, "sheddable", False)


@dataclass(frozen=True)
class PowerSystem:
    """A validated collection of machines and loads plus system constants."""

    machines: tuple[Machine, ...]
    loads: tuple[LoadPoint, ...]
    nominal_frequency: float = 60.0
    base_power: float = 100.0
    damping: float = 0.0

    def __post_init__(self) -> None:
        if self.nominal_frequency <= 0:
            raise ValidationError("nominal_frequency must be > 0")
        if self.base_power <= 0:
            raise ValidationError("base_power must be > 0")
        if self.damping < 0:
            raise ValidationError("damping must be >= 0")
        if not self.machines:
            raise ValidationError("at least one machine required")
        if not any(m.online for m in self.machines):
            raise ValidationError("at least one online machine required")
        machine_ids = [m.id for m in self.machines]
        if len(set(machine_ids)) != len(machine_ids):
            raise ValidationError("machine ids must be unique")
        bus_ids = [ld.bus for ld in self.loads]
        if len(set(bus_ids)) != len(bus_ids):
            raise ValidationError("load bus ids must be unique")

    def machine(self, machine_id: str) -> Machine:
        for m in self.machines:
            if m.id == machine_id:
                return m
        raise ValidationError(f"unknown machine: {machine_id}")

    def load(self, bus: str) -> LoadPoint:
        for ld in self.loads:
            if ld.bus == bus:
                return ld
        raise ValidationError(f"unknown load bus: {bus}")

    def online_machines(self) -> Iterator[Machine]:
        return (m for m in self.machines if m.online)

    def sheddable_loads(self) -> Iterator[LoadPoint]:
        return (ld for ld in self.loads if ld.sheddable)

    def with_machine_offline(self, machine_id: str) -> "PowerSystem":
        """Copy of the system with one machine marked offline."""
        self.machine(machine_id)  # existence check
        machines = tuple(
            Machine(m.id, m.inertia_h, m.rating, m.droop, m.governor_tc, m.output, False)
            if m.id == machine_id
            else m
            for m in self.machines
        )
        return PowerSystem(
            machines, self.loads, self.nominal_frequency, self.base_power, self.damping
        )


def total_inertia(system: PowerSystem) -> float:
    """Sum of inertia constants (s, system base) over online machines."""
    return sum(m.inertia_h for m in system.online_machines())


# ---------------------------------------------------------------------------
# File ingestion (TOML)

_MACHINE_FIELDS = {
    "id": str,
    "inertia_h_s": float,
    "rating_mva": float,
    "droop_pu": float,
    "governor_tc_s": float,
    "output_mw": float,
    "online": bool,
}
_LOAD_FIELDS = {
    "bus": str,
    "active_mw": float,
    "reactive_mvar": float,
    "sheddable": bool,
    "priority": bool,
}


def _coerce(table: dict, key: str, kind: type, where: str, default=None):
    if key not in table:
        if default is None:
            raise ParseError(f"{where}: missing field '{key}'")
        return default
    value = table[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{where}: field '{key}' must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise ParseError(f"{where}: field '{key}' must be {kind.__name__}")
    return value


def load_system(path: str | Path) -> PowerSystem:
    """Parse and validate a system file.

    Raises :class:`ParseError` for malformed files (with line/field
    context) and :class:`ValidationError` when a model invariant is
    violated.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read system file {path}: {exc}") from exc
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc

    base = _coerce(doc, "base_mva", float, str(path))
    f_n = _coerce(doc, "nominal_frequency_hz", float, str(path))
    damping = _coerce(doc, "damping_pu", float, str(path), default=0.0)

    machines = []
    for i, table in enumerate(doc.get("machines", [])):
        where = f"{path}: machines[{i}]"
        if not isinstance(table, dict):
            raise ParseError(f"{where}: expected a table")
        machines.append(
            Machine(
                id=_coerce(table, "id", str, where),
                inertia_h=_coerce(table, "inertia_h_s", float, where),
                rating=_coerce(table, "rating_mva", float, where),
                droop=_coerce(table, "droop_pu", float, where, DEFAULT_DROOP_PU),
                governor_tc=_coerce(
                    table, "governor_tc_s", float, where, DEFAULT_GOVERNOR_TC_S
                ),
                output=_coerce(table, "output_mw", float, where, 0.0),
                online=_coerce(table, "online", bool, where, True),
            )
        )
    loads = []
    for i, table in enumerate(doc.get("loads", [])):
        where = f"{path}: loads[{i}]"
        if not isinstance(table, dict):
            raise ParseError(f"{where}: expected a table")
        loads.append(
            LoadPoint(
                bus=_coerce(table, "bus", str, where),
                active=_coerce(table, "active_mw", float, where),
                reactive=_coerce(table, "reactive_mvar", float, where, 0.0),
                sheddable=_coerce(table, "sheddable", bool, where, True),
                priority=_coerce(table, "priority", bool, where, False),
            )
        )
    return PowerSystem(
        machines=tuple(machines),
        loads=tuple(loads),
        nominal_frequency=f_n,
        base_power=base,
        damping=damping,
    )


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest round-tripping representation
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"unsupported TOML value: {value!r}")


def serialize_system(system: PowerSystem) -> str:
    """Render a system back to the canonical TOML format (round-trips)."""
    lines = [
        f"base_mva = {_toml_value(system.base_power)}",
        f"nominal_frequency_hz = {_toml_value(system.nominal_frequency)}",
        f"damping_pu = {_toml_value(system.damping)}",
    ]
    for m in system.machines:
        lines += [
            "",
            "[[machines]]",
            f"id = {_toml_value(m.id)}",
            f"inertia_h_s = {_toml_value(m.inertia_h)}",
            f"rating_mva = {_toml_value(m.rating)}",
            f"droop_pu = {_toml_value(m.droop)}",
            f"governor_tc_s = {_toml_value(m.governor_tc)}",
            f"output_mw = {_toml_value(m.output)}",
            f"online = {_toml_value(m.online)}",
        ]
    for ld in system.loads:
        lines += [
            "",
            "[[loads]]",
            f"bus = {_toml_value(ld.bus)}",
            f"active_mw = {_toml_value(ld.active)}",
            f"reactive_mvar = {_toml_value(ld.reactive)}",
            f"sheddable = {_toml_value(ld.sheddable)}",
            f"priority = {_toml_value(ld.priority)}",
        ]
    return "\n".join(lines) + "\n"


def save_system(system: PowerSystem, path: str | Path) -> None:
    Path(path).write_text(serialize_system(system), encoding="utf-8")
