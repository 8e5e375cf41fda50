"""Occupancy model of a single elastic optical link.

The link has ``capacity`` spectrum slots.  A class-k connection occupies
``demands[k-1]`` contiguous slots.  An occupancy state is stored as an
ordered token sequence: token 0 is one free slot, token ``k >= 1`` is one
class-k connection (width ``demands[k-1]``).  Two adjacent equal tokens are
two distinct connections, so the token sequence fully determines the state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

FREE = 0


@dataclass(frozen=True)
class DemandProfile:
    """Link capacity and per-class traffic parameters.

    Classes are numbered 1..K; ``demands[k-1]`` is the slot demand of
    class k.  Rates are per unit time.
    """

    capacity: int
    demands: tuple[int, ...]
    arrival_rates: tuple[float, ...]
    service_rates: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if len(self.demands) < 1:
            raise ValueError("at least one traffic class is required")
        if len(self.arrival_rates) != len(self.demands) or len(self.service_rates) != len(self.demands):
            raise ValueError("demands, arrival_rates and service_rates must have equal length")
        for k, d in enumerate(self.demands, start=1):
            if not 1 <= d <= self.capacity:
                raise ValueError(f"demand of class {k} must be in 1..{self.capacity}, got {d}")
        for k, rate in enumerate(self.arrival_rates, start=1):
            if rate < 0:
                raise ValueError(f"arrival rate of class {k} must be >= 0, got {rate}")
        for k, rate in enumerate(self.service_rates, start=1):
            if rate <= 0:
                raise ValueError(f"service rate of class {k} must be > 0, got {rate}")

    @property
    def num_classes(self) -> int:
        return len(self.demands)

    def demand(self, k: int) -> int:
        """Slot demand of class k (1-based)."""
        return self.demands[k - 1]

    @classmethod
    def with_uniform_load(
        cls,
        capacity: int,
        demands: tuple[int, ...],
        load_erlang: float,
        service_rates: tuple[float, ...] | float = 1.0,
    ) -> "DemandProfile":
        """Profile whose total arrival rate is split uniformly across classes.

        ``load_erlang`` is the offered load sum(lambda_k * d_k / mu_k); with
        the uniform split lambda_k = lambda / K this pins every lambda_k.
        """
        if isinstance(service_rates, (int, float)):
            service_rates = (float(service_rates),) * len(demands)
        per_class = load_erlang / sum(d / m for d, m in zip(demands, service_rates))
        return cls(
            capacity=capacity,
            demands=tuple(demands),
            arrival_rates=(per_class,) * len(demands),
            service_rates=tuple(service_rates),
        )


@dataclass(frozen=True)
class Arrangement:
    """Ordered token sequence describing one occupancy state."""

    tokens: tuple[int, ...]

    @classmethod
    def empty(cls, profile: DemandProfile) -> "Arrangement":
        return cls(tokens=(FREE,) * profile.capacity)


class Classification(Enum):
    """Outcome of offering one class-k arrival to a state."""

    ACCEPT = "accept"
    FRAG_BLOCKED = "frag-blocked"
    RESOURCE_BLOCKED = "resource-blocked"


def token_width(token: int, profile: DemandProfile) -> int:
    return 1 if token == FREE else profile.demands[token - 1]


def arrangement_width(arr: Arrangement, profile: DemandProfile) -> int:
    return sum(token_width(t, profile) for t in arr.tokens)


def check_arrangement(arr: Arrangement, profile: DemandProfile) -> None:
    """Raise ValueError unless ``arr`` is a valid state for ``profile``."""
    K = profile.num_classes
    for t in arr.tokens:
        if not 0 <= t <= K:
            raise ValueError(f"unknown token {t}; expected 0 (free) or 1..{K}")
    width = arrangement_width(arr, profile)
    if width != profile.capacity:
        raise ValueError(f"token widths sum to {width}, capacity is {profile.capacity}")


def pattern(arr: Arrangement, profile: DemandProfile) -> tuple[int, ...]:
    """Per-class connection counts of ``arr``."""
    counts = [0] * profile.num_classes
    for t in arr.tokens:
        if t != FREE:
            counts[t - 1] += 1
    return tuple(counts)


def free_fragments(arr: Arrangement) -> list[int]:
    """Sizes of maximal free-slot runs, in slot order."""
    sizes: list[int] = []
    run = 0
    for t in arr.tokens:
        if t == FREE:
            run += 1
        elif run:
            sizes.append(run)
            run = 0
    if run:
        sizes.append(run)
    return sizes


def classify(arr: Arrangement, k: int, profile: DemandProfile) -> Classification:
    """Accept, fragmentation-blocked or resource-blocked for a class-k arrival."""
    need = profile.demand(k)
    total_free = 0
    largest = 0
    run = 0
    for t in arr.tokens:
        if t == FREE:
            run += 1
            total_free += 1
            if run > largest:
                largest = run
        else:
            run = 0
    if largest >= need:
        return Classification.ACCEPT
    if total_free >= need:
        return Classification.FRAG_BLOCKED
    return Classification.RESOURCE_BLOCKED


def placement_count(arr: Arrangement, k: int, profile: DemandProfile) -> int:
    """Number of distinct slot positions where a class-k block fits."""
    need = profile.demand(k)
    return sum(f - need + 1 for f in free_fragments(arr) if f >= need)


def placements(arr: Arrangement, k: int, profile: DemandProfile) -> list[Arrangement]:
    """All states reachable by admitting one class-k connection.

    One result per admissible slot position, in slot order.  Under the
    random-fit policy each result is chosen with probability 1/len(result).
    """
    if classify(arr, k, profile) is not Classification.ACCEPT:
        raise ValueError(f"class {k} is not acceptable in this state")
    need = profile.demand(k)
    tokens = arr.tokens
    out: list[Arrangement] = []
    i = 0
    n = len(tokens)
    while i < n:
        if tokens[i] == FREE:
            j = i
            while j < n and tokens[j] == FREE:
                j += 1
            for off in range(i, j - need + 1):
                out.append(Arrangement(tokens[:off] + (k,) + tokens[off + need:]))
            i = j
        else:
            i += 1
    return out


def removals(arr: Arrangement, k: int, profile: DemandProfile) -> list[tuple[Arrangement, int]]:
    """States reachable by one class-k departure, with multiplicities.

    Each of the n_k class-k connections is removed in turn; identical
    results are merged and their multiplicities summed, so the total
    multiplicity is n_k.
    """
    need = profile.demand(k)
    frees = (FREE,) * need
    merged: dict[Arrangement, int] = {}
    for i, t in enumerate(arr.tokens):
        if t == k:
            target = Arrangement(arr.tokens[:i] + frees + arr.tokens[i + 1:])
            merged[target] = merged.get(target, 0) + 1
    if not merged:
        raise ValueError(f"no class-{k} connection to remove")
    return list(merged.items())


def is_defragmented(arr: Arrangement) -> bool:
    """True iff all free slots form at most one contiguous block."""
    return len(free_fragments(arr)) <= 1


def connection_spans(arr: Arrangement, profile: DemandProfile) -> list[tuple[int, int, int]]:
    """Connections of ``arr`` as (class, first_slot, last_slot), 1-based slots."""
    spans: list[tuple[int, int, int]] = []
    slot = 1
    for t in arr.tokens:
        w = token_width(t, profile)
        if t != FREE:
            spans.append((t, slot, slot + w - 1))
        slot += w
    return spans
