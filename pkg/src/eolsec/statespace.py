"""Enumeration of all occupancy states of a link plus derived index sets.

Regular states are every token sequence of total width ``capacity``.  For
each connection pattern there may additionally be one randomization state
(reconfiguration triggered proactively) and, when some state of the pattern
is fragmentation-blocked, one defragmentation state.

Canonical order: patterns ascending lexicographically, then token sequences
ascending lexicographically within a pattern.  Index 0 is therefore always
the all-free state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, TextIO

from .link import (
    Arrangement,
    Classification,
    DemandProfile,
    classify,
    is_defragmented,
)

DEFAULT_STATE_BUDGET = 5_000_000


class StateBudgetExceeded(RuntimeError):
    """Enumeration would produce more regular states than the budget allows."""

    def __init__(self, predicted_states: int, budget: int):
        self.predicted_states = predicted_states
        self.budget = budget
        super().__init__(
            f"state space would hold {predicted_states} regular states, budget is {budget}; "
            "use the Monte Carlo engine instead"
        )


@dataclass(frozen=True)
class SpaceOptions:
    # randomize_empty: also create a randomization state for the empty pattern,
    # so randomization requests arriving at an idle link still block it.
    randomize_empty: bool = False
    state_budget: int = DEFAULT_STATE_BUDGET


def feasible_patterns(profile: DemandProfile) -> Iterator[tuple[int, ...]]:
    """All patterns with total demand <= capacity, lexicographically ascending."""

    def rec(k: int, room: int, prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if k == profile.num_classes:
            yield prefix
            return
        d = profile.demands[k]
        for count in range(room // d + 1):
            yield from rec(k + 1, room - count * d, prefix + (count,))

    yield from rec(0, profile.capacity, ())


def pattern_size(pat: tuple[int, ...], profile: DemandProfile) -> int:
    """Number of distinct states realizing ``pat`` (multiset permutations)."""
    used = sum(n * d for n, d in zip(pat, profile.demands))
    if used > profile.capacity:
        return 0
    frees = profile.capacity - used
    size = math.factorial(frees + sum(pat)) // math.factorial(frees)
    for n in pat:
        size //= math.factorial(n)
    return size


def count_states(profile: DemandProfile) -> int:
    """Number of regular states, computed without enumerating them."""
    return sum(pattern_size(p, profile) for p in feasible_patterns(profile))


def _token_sequences(counts: list[int]) -> Iterator[tuple[int, ...]]:
    """Multiset permutations of tokens {t: counts[t]}, lexicographically ascending."""
    total = sum(counts)
    seq: list[int] = []

    def rec() -> Iterator[tuple[int, ...]]:
        if len(seq) == total:
            yield tuple(seq)
            return
        for t, c in enumerate(counts):
            if c:
                counts[t] -= 1
                seq.append(t)
                yield from rec()
                seq.pop()
                counts[t] += 1

    yield from rec()


@dataclass
class StateSpace:
    """Indexed regular states plus the derived randomization/defrag structure.

    Global state indices follow the layout [regular | randomization | defrag]:
    randomization state ``v`` has index ``num_regular + v`` and defrag state
    ``v`` has index ``num_regular + num_raas + v`` (when the model variant
    instantiates them).
    """

    profile: DemandProfile
    options: SpaceOptions
    arrangements: tuple[Arrangement, ...]
    state_patterns: tuple[tuple[int, ...], ...]
    index_of: dict[Arrangement, int]
    pattern_groups: dict[tuple[int, ...], tuple[int, ...]]
    frag_blocked: tuple[frozenset[int], ...]
    resource_blocked: tuple[frozenset[int], ...]
    raas_patterns: tuple[tuple[int, ...], ...]
    raas_index: dict[tuple[int, ...], int]
    daas_patterns: tuple[tuple[int, ...], ...]
    daas_index: dict[tuple[int, ...], int]
    defrag_targets: tuple[tuple[int, ...], ...]
    defrag_sources: tuple[tuple[frozenset[int], ...], ...]
    _security_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_regular(self) -> int:
        return len(self.arrangements)

    @property
    def num_raas(self) -> int:
        return len(self.raas_patterns)

    @property
    def num_daas(self) -> int:
        return len(self.daas_patterns)

    @property
    def empty_index(self) -> int:
        return 0

    def gamma_of(self, pat: tuple[int, ...]) -> tuple[int, ...]:
        """Indices of all regular states with pattern ``pat`` (empty if unrealizable)."""
        return self.pattern_groups.get(tuple(pat), ())


def build_state_space(profile: DemandProfile, options: SpaceOptions | None = None) -> StateSpace:
    """Enumerate the full state space for ``profile``.

    Raises StateBudgetExceeded before doing any enumeration work if the
    closed-form state count is over ``options.state_budget``.
    """
    options = options or SpaceOptions()
    predicted = count_states(profile)
    if predicted > options.state_budget:
        raise StateBudgetExceeded(predicted, options.state_budget)

    K = profile.num_classes
    arrangements: list[Arrangement] = []
    state_patterns: list[tuple[int, ...]] = []
    pattern_groups: dict[tuple[int, ...], tuple[int, ...]] = {}
    frag: list[set[int]] = [set() for _ in range(K)]
    res: list[set[int]] = [set() for _ in range(K)]

    for pat in feasible_patterns(profile):
        used = sum(n * d for n, d in zip(pat, profile.demands))
        counts = [profile.capacity - used] + list(pat)
        members: list[int] = []
        for tokens in _token_sequences(counts):
            idx = len(arrangements)
            arr = Arrangement(tokens)
            arrangements.append(arr)
            state_patterns.append(pat)
            members.append(idx)
            for k in range(1, K + 1):
                c = classify(arr, k, profile)
                if c is Classification.FRAG_BLOCKED:
                    frag[k - 1].add(idx)
                elif c is Classification.RESOURCE_BLOCKED:
                    res[k - 1].add(idx)
        pattern_groups[pat] = tuple(members)

    index_of = {arr: i for i, arr in enumerate(arrangements)}

    raas_patterns = tuple(
        pat for pat in pattern_groups
        if sum(pat) >= 1 or options.randomize_empty
    )
    raas_index = {pat: v for v, pat in enumerate(raas_patterns)}

    frag_sets = tuple(frozenset(s) for s in frag)
    daas_patterns = tuple(
        pat for pat, members in pattern_groups.items()
        if any(any(i in fs for i in members) for fs in frag_sets)
    )
    daas_index = {pat: v for v, pat in enumerate(daas_patterns)}

    defrag_targets = tuple(
        tuple(i for i in pattern_groups[pat] if is_defragmented(arrangements[i]))
        for pat in daas_patterns
    )
    defrag_sources = tuple(
        tuple(frozenset(i for i in pattern_groups[pat] if i in frag_sets[k]) for k in range(K))
        for pat in daas_patterns
    )

    return StateSpace(
        profile=profile,
        options=options,
        arrangements=tuple(arrangements),
        state_patterns=tuple(state_patterns),
        index_of=index_of,
        pattern_groups=pattern_groups,
        frag_blocked=frag_sets,
        resource_blocked=tuple(frozenset(s) for s in res),
        raas_patterns=raas_patterns,
        raas_index=raas_index,
        daas_patterns=daas_patterns,
        daas_index=daas_index,
        defrag_targets=defrag_targets,
        defrag_sources=defrag_sources,
    )


def _render_tokens(arr: Arrangement) -> str:
    return " ".join("F" if t == 0 else f"C{t}" for t in arr.tokens)


def _render_pattern(pat: tuple[int, ...]) -> str:
    return "(" + ",".join(str(n) for n in pat) + ")"


def dump_states(space: StateSpace, out: TextIO) -> None:
    """Line-oriented debug dump: ``index<TAB>pattern<TAB>token-sequence``.

    Randomization and defrag states carry no token sequence and are listed
    after the regular states with ``-`` in the token column.
    """
    for i, arr in enumerate(space.arrangements):
        out.write(f"{i}\t{_render_pattern(space.state_patterns[i])}\t{_render_tokens(arr)}\n")
    base = space.num_regular
    for v, pat in enumerate(space.raas_patterns):
        out.write(f"{base + v}\t{_render_pattern(pat)}\t-\n")
    base += space.num_raas
    for v, pat in enumerate(space.daas_patterns):
        out.write(f"{base + v}\t{_render_pattern(pat)}\t-\n")
