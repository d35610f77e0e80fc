"""Cooperative-game engine: coalitions, Shapley values, core membership.

Coalitions are plain integer bitmasks over player indices ``0..n-1``
(bit ``j`` set means player ``j`` is a member).  A game stores its
characteristic function as a dense array indexed by bitmask, which keeps
the exact-summation Shapley computation at O(n * 2^n) with vectorised
inner loops.

Player count is capped at :data:`MAX_PLAYERS` so the dense enumeration
stays tractable; the permutation oracle is additionally capped at
:data:`ORACLE_MAX_PLAYERS` because it walks all n! orderings.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ParseError, ValidationError

#: Dense coalition enumeration guard: 2^24 coalitions is the practical limit.
MAX_PLAYERS = 24
#: Factorial guard for the permutation oracle (8! = 40320 orderings).
ORACLE_MAX_PLAYERS = 8
#: Absolute slack used for the core's coalitional-rationality inequalities.
CORE_SLACK = 1e-9

#: A coalition is a bitmask over player indices; the empty coalition is 0.
Coalition = int


def enumerate_coalitions(n: int) -> list[Coalition]:
    """All 2^n coalitions of an n-player game, ascending by bitmask."""
    if n < 0:
        raise ValidationError("player count must be >= 0")
    if n > MAX_PLAYERS:
        raise CapacityError(f"player count {n} exceeds the {MAX_PLAYERS}-player limit")
    return list(range(1 << n))


def coalition_of(indices: Iterable[int]) -> Coalition:
    """Bitmask for the coalition containing the given player indices."""
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def coalition_members(mask: Coalition, players: Sequence[str]) -> tuple[str, ...]:
    """Player identifiers belonging to the coalition ``mask``."""
    return tuple(p for i, p in enumerate(players) if mask >> i & 1)


@dataclass(frozen=True, eq=False)
class CoalitionGame:
    """An n-player game with a total characteristic function.

    ``values[mask]`` is the worth of the coalition encoded by ``mask``;
    ``values[0]`` (the empty coalition) must be zero.
    """

    players: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.players) > MAX_PLAYERS:
            raise CapacityError(
                f"player count {len(self.players)} exceeds the "
                f"{MAX_PLAYERS}-player limit"
            )
        if len(set(self.players)) != len(self.players):
            raise ValidationError("player identifiers must be unique")
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (1 << len(self.players),):
            raise ValidationError(
                f"characteristic function must map all {1 << len(self.players)} "
                f"coalitions, got {values.shape[0]} values"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("coalition worths must be finite")
        if values[0] != 0.0:
            raise ValidationError("worth of the empty coalition must be 0")

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def grand_worth(self) -> float:
        """Worth of the grand coalition V(N)."""
        return float(self.values[-1])

    def worth(self, coalition: Coalition) -> float:
        return float(self.values[coalition])

    def worth_of(self, members: Iterable[str]) -> float:
        """Worth looked up by player identifiers instead of bitmask."""
        index = {p: i for i, p in enumerate(self.players)}
        try:
            mask = coalition_of(index[m] for m in members)
        except KeyError as exc:
            raise ValidationError(f"unknown player: {exc.args[0]}") from exc
        return self.worth(mask)

    @classmethod
    def from_worths(
        cls, players: Sequence[str], worths: Mapping[frozenset, float]
    ) -> "CoalitionGame":
        """Build a game from a {frozenset of player ids: worth} mapping.

        The empty coalition may be omitted (defaults to 0); every
        non-empty coalition must be present.
        """
        players = tuple(players)
        index = {p: i for i, p in enumerate(players)}
        values = np.zeros(1 << len(players))
        seen = {0}
        for members, worth in worths.items():
            unknown = set(members) - index.keys()
            if unknown:
                raise ValidationError(f"unknown player(s): {sorted(unknown)}")
            mask = coalition_of(index[m] for m in members)
            if mask == 0 and worth != 0.0:
                raise ValidationError("worth of the empty coalition must be 0")
            values[mask] = worth
            seen.add(mask)
        missing = (1 << len(players)) - len(seen)
        if missing:
            raise ValidationError(f"characteristic function incomplete: {missing} "
                                  "coalition(s) missing")
        return cls(players, values)

    def restrict(self, players: Sequence[str]) -> "CoalitionGame":
        """Sub-game on a subset of players (worths of their coalitions)."""
        index = {p: i for i, p in enumerate(self.players)}
        try:
            bits = [index[p] for p in players]
        except KeyError as exc:
            raise ValidationError(f"unknown player: {exc.args[0]}") from exc
        sub = np.empty(1 << len(bits))
        for mask in range(1 << len(bits)):
            parent = coalition_of(bits[i] for i in range(len(bits)) if mask >> i & 1)
            sub[mask] = self.values[parent]
        return CoalitionGame(tuple(players), sub)


@dataclass(frozen=True)
class Allocation:
    """A payoff vector over the players of a game."""

    payoffs: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class ShapleyResult:
    """Per-player Shapley values of the two games and their weighted mean."""

    players: tuple[str, ...]
    psi_deltaf: np.ndarray
    psi_rocof: np.ndarray
    psi_eqv: np.ndarray

    def eqv_by_bus(self) -> dict[str, float]:
        return {p: float(v) for p, v in zip(self.players, self.psi_eqv)}


def _shapley_weights(n: int) -> np.ndarray:
    """Shapley weight by coalition size: w[s] = (s-1)!(n-s)!/n!.

    Computed as exact rationals then rounded once to float, so there is
    no multiplicative drift; each weight is within half an ulp of the
    true value even at n = 24 where n! overflows 64-bit integers.
    """
    fact = math.factorial
    weights = [0.0]  # size 0 never contributes
    for s in range(1, n + 1):
        weights.append(float(Fraction(fact(s - 1) * fact(n - s), fact(n))))
    return np.array(weights)


def shapley_values(game: CoalitionGame) -> np.ndarray:
    """Shapley value of every player by direct summation over coalitions.

    For each player j the sum runs over the coalitions containing j,
    weighting the marginal contribution V(S) - V(S \\ {j}) by
    (|S|-1)!(n-|S|)!/n!.  Reductions use numpy's deterministic pairwise
    summation, so results are reproducible bit-for-bit.
    """
    n = game.n
    if n == 0:
        return np.zeros(0)
    index = np.arange(1 << n, dtype=np.uint32)
    weight_of = _shapley_weights(n)[np.bitwise_count(index).astype(np.intp)]
    values = game.values
    psi = np.empty(n)
    for j in range(n):
        bit = np.uint32(1 << j)
        containing = index[(index & bit) != 0]
        marginal = values[containing] - values[containing ^ bit]
        psi[j] = np.dot(weight_of[containing], marginal)
    return psi


def shapley_permutation_oracle(game: CoalitionGame) -> np.ndarray:
    """Shapley values as average marginal contribution over all orderings.

    Mathematically identical to :func:`shapley_values`; kept as an
    independent cross-check.  Guarded at n <= 8 (walks all n! orderings).
    """
    n = game.n
    if n > ORACLE_MAX_PLAYERS:
        raise CapacityError(
            f"permutation oracle limited to {ORACLE_MAX_PLAYERS} players, got {n}"
        )
    totals = np.zeros(n)
    count = 0
    for order in itertools.permutations(range(n)):
        mask = 0
        for j in order:
            before = game.values[mask]
            mask |= 1 << j
            totals[j] += game.values[mask] - before
        count += 1
    return totals / max(count, 1)


def equivalent_shapley(
    deltaf_game: CoalitionGame,
    rocof_game: CoalitionGame,
    rocof_weight: float = 0.5,
) -> ShapleyResult:
    """Shapley values of both games plus their weighted average.

    The default weight of 0.5 gives the transient (ROCOF) and
    steady-state (frequency-rise) responses equal say.
    """
    if deltaf_game.players != rocof_game.players:
        raise ValidationError("the two games must share an identical player list")
    if not 0.0 <= rocof_weight <= 1.0:
        raise ValidationError("rocof_weight must lie in [0, 1]")
    psi1 = shapley_values(deltaf_game)
    psi2 = shapley_values(rocof_game)
    eqv = (1.0 - rocof_weight) * psi1 + rocof_weight * psi2
    return ShapleyResult(deltaf_game.players, psi1, psi2, eqv)


def _coalition_payoffs(payoffs: Sequence[float]) -> np.ndarray:
    """Sum of payoffs over the members of every coalition (by bitmask)."""
    n = len(payoffs)
    sums = np.zeros(1 << n)
    for j in range(n):
        width = 1 << j
        sums[width : 2 * width] = sums[:width] + payoffs[j]
    return sums


def in_core(game: CoalitionGame, allocation: Allocation) -> bool:
    """Whether an allocation is stable (coalitionally rational) and efficient.

    Every coalition must receive at least its worth (within an absolute
    slack of :data:`CORE_SLACK`) and the grand coalition's worth must be
    fully distributed (within 1e-9 relative).
    """
    if len(allocation.payoffs) != game.n:
        raise ValidationError("allocation length must match player count")
    sums = _coalition_payoffs(allocation.payoffs)
    grand = game.grand_worth
    if abs(sums[-1] - grand) > 1e-9 * max(1.0, abs(grand)):
        return False
    return bool(np.all(sums[:-1] >= game.values[:-1] - CORE_SLACK))


# ---------------------------------------------------------------------------
# Characteristic-function files
#
# One line per coalition:
#   members=<comma-separated bus ids>, delta_f_hz=<real>, rocof_hz_s=<real>
# The empty coalition may be omitted and defaults to worth 0 in both games.

_ROW_RE = re.compile(
    r"^members=(?P<members>.*?),\s*delta_f_hz=(?P<df>[^,\s]+),"
    r"\s*rocof_hz_s=(?P<rocof>[^,\s]+)$"
)


def read_charfun_file(
    path: str | Path, players: Sequence[str] | None = None
) -> tuple[CoalitionGame, CoalitionGame]:
    """Parse a characteristic-function file into the (delta-f, ROCOF) games.

    When ``players`` is omitted the player order is the order of first
    appearance in the file.  Every non-empty coalition must be present.
    """
    path = Path(path)
    rows: list[tuple[tuple[str, ...], float, float]] = []
    order: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            match = _ROW_RE.match(line)
            if not match:
                raise ParseError(f"{path}:{lineno}: malformed coalition row")
            raw_members = match.group("members").strip()
            members = tuple(
                m.strip() for m in raw_members.split(",") if m.strip()
            )
            try:
                df = float(match.group("df"))
                rocof = float(match.group("rocof"))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            rows.append((members, df, rocof))
            for m in members:
                if m not in order:
                    order.append(m)

    if players is None:
        players = order
    players = tuple(players)
    unknown = set(order) - set(players)
    if unknown:
        raise ValidationError(
            f"{path}: coalition member(s) {sorted(unknown)} not in player list"
        )

    df_worths: dict[frozenset, float] = {}
    rocof_worths: dict[frozenset, float] = {}
    for members, df, rocof in rows:
        key = frozenset(members)
        if key in df_worths:
            raise ValidationError(
                f"{path}: duplicate coalition {{{', '.join(sorted(members))}}}"
            )
        df_worths[key] = df
        rocof_worths[key] = rocof
    df_worths.setdefault(frozenset(), 0.0)
    rocof_worths.setdefault(frozenset(), 0.0)
    return (
        CoalitionGame.from_worths(players, df_worths),
        CoalitionGame.from_worths(players, rocof_worths),
    )


def write_charfun_file(
    path: str | Path, deltaf_game: CoalitionGame, rocof_game: CoalitionGame
) -> None:
    """Write both games to the row format read by :func:`read_charfun_file`."""
    if deltaf_game.players != rocof_game.players:
        raise ValidationError("the two games must share an identical player list")
    lines = []
    for mask in range(1, 1 << deltaf_game.n):
        members = ",".join(coalition_members(mask, deltaf_game.players))
        lines.append(
            f"members={members}, delta_f_hz={float(deltaf_game.values[mask])!r}, "
            f"rocof_hz_s={float(rocof_game.values[mask])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
