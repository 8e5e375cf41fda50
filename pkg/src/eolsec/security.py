"""Eavesdropping metrics under spectrum randomization.

An attacker monitors a fixed window of ``width`` contiguous slots whose
position is uniform over the link.  An attack across one randomization
survives if the connection pattern lying fully inside the window is
unchanged and no connection straddles a window edge afterwards; straddling
spectrum is observationally distinct, so straddled placements never count
as the same observation.

Counting the surviving rearrangements is done two independent ways: by
enumerating every arrangement of the state's pattern, and by a closed-form
product of the inside rearrangements with the number of ways to split the
outside tokens onto the two sides of the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .link import Arrangement, DemandProfile, connection_spans, pattern
from .statespace import StateSpace, _token_sequences

DEFAULT_ENUMERATION_BUDGET = 2_000_000


class NonIntegerRpRatio(ValueError):
    """randomization_rate / service_rate must be a positive integer."""


@dataclass(frozen=True)
class ObservationWindow:
    """``width`` contiguous slots starting at 1-based slot ``start``."""

    start: int
    width: int

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError("window width must be >= 1")
        if self.start < 1:
            raise ValueError("window start must be >= 1")

    @property
    def last(self) -> int:
        return self.start + self.width - 1


def _check_window(w: ObservationWindow, profile: DemandProfile) -> None:
    if w.last > profile.capacity:
        raise ValueError(f"window [{w.start}, {w.last}] exceeds capacity {profile.capacity}")


def _permutation_count(frees: int, counts: tuple[int, ...]) -> int:
    """Distinct orderings of ``frees`` free slots and ``counts`` connections."""
    total = math.factorial(frees + sum(counts)) // math.factorial(frees)
    for n in counts:
        total //= math.factorial(n)
    return total


def total_rearrangements(pat: tuple[int, ...], profile: DemandProfile) -> int:
    """Number of distinct placements of the pattern on the link (exact integer)."""
    frees = profile.capacity - sum(n * d for n, d in zip(pat, profile.demands))
    if frees < 0:
        raise ValueError(f"pattern {pat} does not fit capacity {profile.capacity}")
    return _permutation_count(frees, tuple(pat))


def _inside_of_spans(
    spans: list[tuple[int, int, int]], start: int, last: int, num_classes: int
) -> tuple[tuple[int, ...], bool]:
    counts = [0] * num_classes
    straddle = False
    for k, s, e in spans:
        if s >= start and e <= last:
            counts[k - 1] += 1
        elif s <= last and e >= start:
            straddle = True
    return tuple(counts), straddle


def inside_pattern(
    arr: Arrangement, window: ObservationWindow, profile: DemandProfile
) -> tuple[tuple[int, ...], bool]:
    """Pattern of connections fully inside the window, plus a straddle flag.

    Connections overlapping a window edge set the flag and are excluded
    from the pattern.
    """
    _check_window(window, profile)
    spans = connection_spans(arr, profile)
    return _inside_of_spans(spans, window.start, window.last, profile.num_classes)


@lru_cache(maxsize=4096)
def _match_table(
    profile: DemandProfile, pat: tuple[int, ...], start: int, width: int
) -> dict[tuple[int, ...], int]:
    """For each inside pattern: how many straddle-free arrangements of ``pat`` show it."""
    frees = profile.capacity - sum(n * d for n, d in zip(pat, profile.demands))
    last = start + width - 1
    table: dict[tuple[int, ...], int] = {}
    for tokens in _token_sequences([frees] + list(pat)):
        spans = connection_spans(Arrangement(tokens), profile)
        n_in, straddle = _inside_of_spans(spans, start, last, profile.num_classes)
        if not straddle:
            table[n_in] = table.get(n_in, 0) + 1
    return table


def _outside_split_count(
    n_out: tuple[int, ...],
    frees_out: int,
    cap_left: int,
    demands: tuple[int, ...],
) -> int:
    """Ways to order the outside tokens onto the two sides of the window.

    Sums, over every multiset split whose left side fills exactly
    ``cap_left`` slots, the orderings of each side.
    """
    total = 0
    for m in product(*(range(n + 1) for n in n_out)):
        f_left = cap_left - sum(c * d for c, d in zip(m, demands))
        if 0 <= f_left <= frees_out:
            right = tuple(n - c for n, c in zip(n_out, m))
            total += _permutation_count(f_left, m) * _permutation_count(frees_out - f_left, right)
    return total


def count_matching_rearrangements(
    arr: Arrangement,
    window: ObservationWindow,
    profile: DemandProfile,
    method: str = "partition",
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> int:
    """Arrangements of ``arr``'s pattern indistinguishable inside the window.

    Counts the arrangements with the same full pattern whose fully-inside
    pattern equals the one observed in ``arr`` and which leave no connection
    straddling a window edge.  ``method`` selects the enumeration route or
    the closed-form inside-times-outside-split product; both agree.
    """
    _check_window(window, profile)
    if method not in ("partition", "enumeration"):
        raise ValueError(f"unknown method {method!r}")
    pat = pattern(arr, profile)
    n_in, _ = inside_pattern(arr, window, profile)

    if method == "enumeration":
        if total_rearrangements(pat, profile) > enumeration_budget:
            raise RuntimeError("pattern too large for enumeration; use the partition method")
        return _match_table(profile, pat, window.start, window.width).get(n_in, 0)

    frees_total = profile.capacity - sum(n * d for n, d in zip(pat, profile.demands))
    frees_in = window.width - sum(n * d for n, d in zip(n_in, profile.demands))
    if frees_in > frees_total:
        return 0
    n_out = tuple(n - i for n, i in zip(pat, n_in))
    inside = _permutation_count(frees_in, n_in)
    outside = _outside_split_count(n_out, frees_total - frees_in, window.start - 1, profile.demands)
    return inside * outside


def per_state_attack_success(space: StateSpace, width: int) -> np.ndarray:
    """Per regular state: probability that an attack survives one randomization.

    Averages, over the uniformly placed window, the fraction of the
    pattern's rearrangements that leave the window's observation intact.
    Counts stay exact integers; division happens once per state.
    """
    profile = space.profile
    capacity = profile.capacity
    if not 1 <= width <= capacity:
        raise ValueError(f"window width must be in 1..{capacity}")
    cache = space._security_cache
    if width in cache:
        return cache[width]

    positions = capacity - width + 1
    numerators = [0] * space.num_regular
    denominators = [0] * space.num_regular
    for pat, members in space.pattern_groups.items():
        spans_of = {i: connection_spans(space.arrangements[i], profile) for i in members}
        r_n = total_rearrangements(pat, profile)
        for start in range(1, positions + 1):
            last = start + width - 1
            table: dict[tuple[int, ...], int] = {}
            insides: dict[int, tuple[int, ...]] = {}
            for i in members:
                n_in, straddle = _inside_of_spans(spans_of[i], start, last, profile.num_classes)
                insides[i] = n_in
                if not straddle:
                    table[n_in] = table.get(n_in, 0) + 1
            for i in members:
                numerators[i] += table.get(insides[i], 0)
        for i in members:
            denominators[i] = r_n * positions

    result = np.array([n / d for n, d in zip(numerators, denominators)])
    cache[width] = result
    return result


def attack_success_probability(pi: np.ndarray, space: StateSpace, width: int) -> float:
    """Stationary attack-success probability for one window width.

    The expectation runs over the occupied regular states only (the all-free
    state is excluded and the weights renormalized over the rest).
    """
    per_state = per_state_attack_success(space, width)
    weights = np.asarray(pi)[: space.num_regular].copy()
    weights[space.empty_index] = 0.0
    mass = weights.sum()
    if mass <= 0:
        raise ValueError("no stationary mass on occupied states")
    return float(per_state @ weights / mass)


def observable_fraction(
    p_attack: float,
    randomization_rate: float,
    service_rate: float,
    data_rate: float = 1.0,
) -> tuple[float, float]:
    """Observable data until the last randomization in a mean holding time.

    Returns ``(amount, fraction)``: the expected amount of data the attacker
    observes across the randomizations occurring during one mean holding
    time, and that amount as a fraction of all data sent.  The number of
    randomizations per holding time must be a positive integer.
    """
    if not 0.0 <= p_attack <= 1.0 + 1e-12:
        raise ValueError(f"attack probability must be in [0, 1], got {p_attack}")
    if randomization_rate <= 0:
        raise ValueError("randomization rate must be > 0")
    ratio = randomization_rate / service_rate
    rounds = round(ratio)
    if rounds < 1 or abs(ratio - rounds) > 1e-9 * max(1.0, ratio):
        raise NonIntegerRpRatio(
            f"randomization_rate/service_rate = {ratio} is not a positive integer"
        )
    p = min(p_attack, 1.0)
    if p >= 1.0 - 1e-12:
        amount = data_rate * rounds / randomization_rate
    else:
        amount = data_rate / randomization_rate * (1.0 - p**rounds) / (1.0 - p)
    return amount, service_rate * amount / data_rate


@dataclass(frozen=True)
class WindowSecurity:
    width: int
    attack_success: float
    observable_data: float
    observable_fraction: float


@dataclass(frozen=True)
class SecurityReport:
    windows: tuple[WindowSecurity, ...]
    randomization_rate: float
    service_rate: float
    data_rate: float


def security_report(
    pi: np.ndarray,
    space: StateSpace,
    widths: tuple[int, ...],
    randomization_rate: float,
    service_rate: float,
    data_rate: float = 1.0,
) -> SecurityReport:
    windows = []
    for w in widths:
        p = attack_success_probability(pi, space, w)
        amount, fraction = observable_fraction(p, randomization_rate, service_rate, data_rate)
        windows.append(WindowSecurity(w, p, amount, fraction))
    return SecurityReport(
        windows=tuple(windows),
        randomization_rate=randomization_rate,
        service_rate=service_rate,
        data_rate=data_rate,
    )
