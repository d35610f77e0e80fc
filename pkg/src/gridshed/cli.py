"""Scenario runner for the two-stage shedding pipeline.

Subcommands mirror the offline/online split of the scheme:

* ``charfun``  -- build (or validate) the coalition characteristic
  functions; an offline, cacheable artifact.
* ``shapley``  -- per-bus Shapley values from a characteristic-function
  source; also offline.
* ``plan``     -- shedding locations and amounts for a disturbance.
* ``simulate`` -- frequency traces without and with the planned shed.

Exit codes: 0 success, 1 validation error, 2 infeasible plan, 3 I/O error.
"""

from __future__ import annotations

import argparse
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

from .coalition_game import (
    CoalitionGame,
    ShapleyResult,
    equivalent_shapley,
    read_charfun_file,
    write_charfun_file,
)
from .errors import InfeasiblePlanError, ValidationError
from .frequency_dynamics import (
    DEFAULT_ROCOF_WINDOW_S,
    EventSchedule,
    MachineOutage,
    LoadShed,
    characteristic_functions,
    initial_rocof,
    simulate,
    write_trace_csv,
)
from .grid_model import PowerSystem, load_system
from .ufls_planner import (
    SheddingPlan,
    allocate,
    candidate_caps,
    default_trigger_threshold,
    format_plan_table,
    plan_from_measurement,
    write_plan_csv,
)

#: |f_end - f_n| below which a with-shedding run counts as recovered (Hz).
RECOVERY_TOLERANCE_HZ = 0.05


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed command-line scenario description."""

    system: Path | None
    charfun: str
    candidates: tuple[str, ...]
    outage: tuple[str, float] | None
    shed_delay: float
    pd_mw: float | None  # None = estimate from measured ROCOF
    granularity: float
    dt: float
    duration: float | None
    threshold: float | None
    out: Path

    def __post_init__(self) -> None:
        if self.shed_delay < 0:
            raise ValidationError("shed delay must be >= 0")
        if self.granularity <= 0:
            raise ValidationError("granularity must be > 0")


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; remap to code 1."""

    def error(self, message: str):
        raise ValidationError(message)


def _parse_outage(text: str) -> tuple[str, float]:
    machine, sep, at = text.partition("@")
    if not sep or not machine:
        raise ValidationError(f"outage must look like '<machine>@<time>', got {text!r}")
    try:
        time = float(at)
    except ValueError:
        raise ValidationError(f"bad outage time in {text!r}") from None
    if time < 0:
        raise ValidationError("outage time must be >= 0")
    return machine, time


def _parse_pd(text: str) -> float | None:
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"--pd must be a number of MW or 'auto', got {text!r}") from None
    if value < 0:
        raise ValidationError("--pd must be >= 0")
    return value


def _config_from_args(args: argparse.Namespace) -> ScenarioConfig:
    candidates = tuple(
        c.strip() for c in (args.candidates or "").split(",") if c.strip()
    )
    return ScenarioConfig(
        system=Path(args.system) if args.system else None,
        charfun=args.charfun,
        candidates=candidates,
        outage=_parse_outage(args.outage) if args.outage else None,
        shed_delay=args.shed_delay,
        pd_mw=_parse_pd(args.pd),
        granularity=args.granularity,
        dt=args.dt,
        duration=args.duration,
        threshold=args.threshold,
        out=Path(args.out),
    )


def _require(value, flag: str, why: str):
    if not value:
        raise ValidationError(f"{flag} is required {why}")
    return value


def _load_config_system(config: ScenarioConfig) -> PowerSystem:
    _require(config.system, "--system", "for this command")
    return load_system(config.system)


def _outage_schedule(config: ScenarioConfig) -> tuple[EventSchedule, str, float]:
    machine, time = _require(config.outage, "--outage", "for this command")
    return EventSchedule((MachineOutage(time, machine),)), machine, time


def _build_games(
    config: ScenarioConfig, system: PowerSystem | None
) -> tuple[CoalitionGame, CoalitionGame]:
    """Characteristic functions from the configured source.

    ``simulate`` runs the dynamics engine against the configured outage;
    a path reads the file and restricts it to the candidate buses.
    """
    if config.charfun == "simulate":
        if system is None:
            system = _load_config_system(config)
        _require(config.candidates, "--candidates", "to simulate characteristic functions")
        disturbance, _, _ = _outage_schedule(config)
        return characteristic_functions(
            system,
            config.candidates,
            disturbance,
            shed_delay=config.shed_delay,
            dt=config.dt,
        )
    df_game, rocof_game = read_charfun_file(config.charfun)
    if config.candidates and config.candidates != df_game.players:
        df_game = df_game.restrict(config.candidates)
        rocof_game = rocof_game.restrict(config.candidates)
    return df_game, rocof_game


def _measure_pd(
    config: ScenarioConfig, system: PowerSystem
) -> tuple[float, PowerSystem]:
    """Measured initial ROCOF of the configured outage, plus the post-outage system."""
    schedule, machine, time = _outage_schedule(config)
    trace = simulate(
        system, schedule, time + DEFAULT_ROCOF_WINDOW_S + 0.5, config.dt
    )
    rocof = initial_rocof(trace, time, DEFAULT_ROCOF_WINDOW_S)
    return rocof, system.with_machine_offline(machine)


def _plan(
    config: ScenarioConfig, system: PowerSystem, shapley: ShapleyResult
) -> tuple[SheddingPlan, str]:
    """The shedding plan plus a one-line description of the P_d source."""
    if config.pd_mw is not None:
        caps = candidate_caps(system, shapley.players)
        plan = allocate(
            config.pd_mw, shapley.eqv_by_bus(), config.granularity, caps
        )
        return plan, f"P_d: {config.pd_mw:g} MW (given)"
    rocof, post_system = _measure_pd(config, system)
    plan = plan_from_measurement(rocof, post_system, shapley, config.granularity)
    return plan, f"P_d: {plan.total_pd_mw:.3f} MW (auto, measured rocof {rocof:.4f} Hz/s)"


def cmd_charfun(config: ScenarioConfig) -> int:
    config.out.mkdir(parents=True, exist_ok=True)
    target = config.out / "charfun.txt"
    if config.charfun == "simulate":
        df_game, rocof_game = _build_games(config, None)
        write_charfun_file(target, df_game, rocof_game)
    else:
        read_charfun_file(config.charfun)  # validate before the verbatim copy
        shutil.copyfile(config.charfun, target)
    print(f"wrote {target}")
    return 0


def cmd_shapley(config: ScenarioConfig) -> int:
    df_game, rocof_game = _build_games(config, None)
    result = equivalent_shapley(df_game, rocof_game)
    config.out.mkdir(parents=True, exist_ok=True)
    target = config.out / "shapley.csv"
    lines = ["bus,psi_deltaf,psi_rocof,psi_eqv"]
    header = f"{'bus':<8}{'psi_deltaf':>12}{'psi_rocof':>12}{'psi_eqv':>12}"
    print(header)
    print("-" * len(header))
    for i, bus in enumerate(result.players):
        print(
            f"{bus:<8}{result.psi_deltaf[i]:>12.5f}{result.psi_rocof[i]:>12.5f}"
            f"{result.psi_eqv[i]:>12.5f}"
        )
        lines.append(
            f"{bus},{result.psi_deltaf[i]:.6f},{result.psi_rocof[i]:.6f},"
            f"{result.psi_eqv[i]:.6f}"
        )
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {target}")
    return 0


def cmd_plan(config: ScenarioConfig) -> int:
    _require(config.candidates, "--candidates", "to build a plan")
    system = _load_config_system(config)
    df_game, rocof_game = _build_games(config, system)
    result = equivalent_shapley(df_game, rocof_game)
    plan, pd_line = _plan(config, system, result)
    print(pd_line)
    print(format_plan_table(plan))
    config.out.mkdir(parents=True, exist_ok=True)
    target = config.out / "plan.csv"
    write_plan_csv(plan, target)
    print(f"wrote {target}")
    return 0


def _nadir(trace) -> tuple[float, float]:
    k = int(trace.coi.argmin())
    return float(trace.coi[k]), float(trace.time[k])


def cmd_simulate(config: ScenarioConfig) -> int:
    _require(config.candidates, "--candidates", "to build a plan")
    system = _load_config_system(config)
    schedule, machine, outage_time = _outage_schedule(config)
    f_n = system.nominal_frequency

    df_game, rocof_game = _build_games(config, system)
    result = equivalent_shapley(df_game, rocof_game)
    plan, pd_line = _plan(config, system, result)

    shed_time = outage_time + config.shed_delay
    duration = config.duration if config.duration is not None else shed_time + 35.0
    no_shed = simulate(system, schedule, duration, config.dt)

    # Closed-loop arming: shedding fires at outage + delay, provided the COI
    # frequency has crossed the trigger threshold by then.
    threshold = (
        config.threshold
        if config.threshold is not None
        else default_trigger_threshold(f_n)
    )
    below = no_shed.coi < threshold
    crossed_at = float(no_shed.time[below.argmax()]) if below.any() else None
    triggered = crossed_at is not None and crossed_at <= shed_time
    events = list(schedule.events)
    if triggered:
        events += [
            LoadShed(shed_time, e.bus, e.rounded_mw)
            for e in plan.entries
            if e.rounded_mw > 0
        ]
    with_shed = simulate(system, EventSchedule(tuple(sorted(events, key=lambda e: e.time))), duration, config.dt)

    config.out.mkdir(parents=True, exist_ok=True)
    no_shed_csv = config.out / "trace_no_shed.csv"
    with_shed_csv = config.out / "trace_with_shed.csv"
    plan_csv = config.out / "plan.csv"
    write_trace_csv(no_shed, no_shed_csv)
    write_trace_csv(with_shed, with_shed_csv)
    write_plan_csv(plan, plan_csv)

    nadir0, t0 = _nadir(no_shed)
    nadir1, t1 = _nadir(with_shed)
    end_dev = abs(float(with_shed.coi[-1]) - f_n)
    recovered = triggered and end_dev <= RECOVERY_TOLERANCE_HZ
    print(f"scenario: outage of {machine} at {outage_time:g} s, shed delay {config.shed_delay:g} s")
    print(pd_line)
    print("plan: " + ", ".join(f"{e.bus}={e.rounded_mw:g} MW" for e in plan.entries)
          + f" (total {plan.rounded_total_mw:g} MW)")
    if crossed_at is None:
        print(f"threshold: {threshold:.3f} Hz, never crossed -- shedding not triggered")
    elif not triggered:
        print(f"threshold: {threshold:.3f} Hz, crossed at {crossed_at:.3f} s "
              f"(after shed time {shed_time:g} s) -- shedding not triggered")
    else:
        print(f"threshold: {threshold:.3f} Hz, crossed at {crossed_at:.3f} s, "
              f"shed applied at {shed_time:g} s")
    print(f"without shedding: nadir {nadir0:.4f} Hz at {t0:.3f} s, "
          f"steady-state {no_shed.coi[-1]:.4f} Hz")
    print(f"with shedding:    nadir {nadir1:.4f} Hz at {t1:.3f} s, "
          f"steady-state {with_shed.coi[-1]:.4f} Hz")
    print(f"recovered: {'yes' if recovered else 'no'} "
          f"(|f_end - f_n| = {end_dev:.4f} Hz, tolerance {RECOVERY_TOLERANCE_HZ} Hz)")
    for path in (no_shed_csv, with_shed_csv, plan_csv):
        print(f"wrote {path}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="gridshed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("charfun", "build or validate coalition characteristic functions"),
        ("shapley", "per-bus Shapley values from a characteristic-function source"),
        ("plan", "shedding locations and amounts for a disturbance"),
        ("simulate", "frequency traces without and with the planned shed"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--system", help="system file (TOML)")
        p.add_argument(
            "--charfun",
            default="simulate",
            help="characteristic-function source: a file path or 'simulate' (default)",
        )
        p.add_argument("--candidates", help="comma-separated candidate bus ids")
        p.add_argument("--outage", help="disturbance, e.g. G2@5 (machine id @ time s)")
        p.add_argument("--shed-delay", type=float, default=2.0,
                       help="seconds between disturbance and shedding (default 2)")
        p.add_argument("--pd", default="auto",
                       help="disturbance power in MW, or 'auto' to measure (default)")
        p.add_argument("--granularity", type=float, default=1.0,
                       help="shedding step size in MW (default 1)")
        p.add_argument("--dt", type=float, default=1e-3,
                       help="integration step in s (default 0.001)")
        p.add_argument("--duration", type=float, default=None,
                       help="trace length in s (default: shed time + 35)")
        p.add_argument("--threshold", type=float, default=None,
                       help="shedding trigger threshold in Hz (default 59.5 on 60 Hz)")
        p.add_argument("--out", default="out", help="output directory (default ./out)")
    return parser


_COMMANDS = {
    "charfun": cmd_charfun,
    "shapley": cmd_shapley,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _config_from_args(args)
        return _COMMANDS[args.command](config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InfeasiblePlanError as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
