"""Generator assembly, stationary solve and blocking metrics.

Three model variants share one state space:

* ``regular``      -- occupancy states only; blocked arrivals are lost.
* ``randomized``   -- adds one randomization state per pattern; every
  occupancy state feeds it at the randomization rate and it returns
  uniformly over the states of its pattern at the reconfiguration rate.
* ``randomized-defrag`` -- additionally adds defrag states: a
  fragmentation-blocked class-k arrival moves the chain into the pattern's
  defrag state (the call itself is lost), which then jumps uniformly onto
  the pattern's defragmented states.

Reconfiguration states have total outflow equal to the reconfiguration
rate only: departures are frozen and further arrivals cause no transition.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .link import Classification, DemandProfile, classify, placements, removals
from .statespace import StateSpace

DEFAULT_SOLVER_TOL = 1e-10


class VariantKind(str, Enum):
    REGULAR = "regular"
    RANDOMIZED = "randomized"
    RANDOMIZED_DEFRAG = "randomized-defrag"


@dataclass(frozen=True)
class ModelVariant:
    """Variant choice plus the two reconfiguration-process rates."""

    kind: VariantKind
    randomization_rate: float = 0.0   # proactive reconfiguration arrivals, per unit time
    reconfig_rate: float = 0.0        # reconfiguration completions, per unit time

    def __post_init__(self) -> None:
        if self.kind is VariantKind.REGULAR:
            if self.randomization_rate != 0.0 or self.reconfig_rate != 0.0:
                raise ValueError("the regular variant has no reconfiguration rates")
        else:
            if self.randomization_rate < 0:
                raise ValueError("randomization rate must be >= 0")
            if self.reconfig_rate <= 0:
                raise ValueError("reconfiguration rate must be > 0")

    @classmethod
    def regular(cls) -> "ModelVariant":
        return cls(VariantKind.REGULAR)

    @classmethod
    def randomized(cls, randomization_rate: float, reconfig_rate: float) -> "ModelVariant":
        return cls(VariantKind.RANDOMIZED, randomization_rate, reconfig_rate)

    @classmethod
    def randomized_defrag(cls, randomization_rate: float, reconfig_rate: float) -> "ModelVariant":
        return cls(VariantKind.RANDOMIZED_DEFRAG, randomization_rate, reconfig_rate)

    @property
    def has_randomization(self) -> bool:
        return self.kind is not VariantKind.REGULAR

    @property
    def has_defrag(self) -> bool:
        return self.kind is VariantKind.RANDOMIZED_DEFRAG


class NotIrreducible(RuntimeError):
    """The rate matrix has more than one closed communicating class."""


class NoConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"solver residual {residual:.3e} after {iterations} refinement steps")


@dataclass
class RateMatrix:
    """Sparse generator; rows sum to zero, off-diagonal entries are rates."""

    matrix: sp.csr_matrix
    variant: ModelVariant
    num_regular: int
    num_raas: int
    num_daas: int

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float


@dataclass(frozen=True)
class BlockingReport:
    """Per-class and overall blocking probabilities for one solved variant."""

    variant: VariantKind
    resource_blocking: tuple[float, ...]
    fragmentation_blocking: tuple[float, ...]
    reconfiguration_blocking: float
    overall_blocking: float


def assemble_generator(space: StateSpace, profile: DemandProfile, variant: ModelVariant) -> RateMatrix:
    """Install all transitions of ``variant`` over ``space``.

    ``profile`` must structurally match the space (same capacity and
    demands); its rates drive the transition intensities, so one space can
    be reused across traffic points.
    """
    if profile.capacity != space.profile.capacity or profile.demands != space.profile.demands:
        raise ValueError("profile does not match the state space structure")

    n_sa = space.num_regular
    n_r = space.num_raas if variant.has_randomization else 0
    n_d = space.num_daas if variant.has_defrag else 0
    dim = n_sa + n_r + n_d
    lam = profile.arrival_rates
    mu = profile.service_rates
    lam_s = variant.randomization_rate
    mu_d = variant.reconfig_rate

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def add(i: int, j: int, rate: float) -> None:
        if rate != 0.0:
            rows.append(i)
            cols.append(j)
            vals.append(rate)

    for i, arr in enumerate(space.arrangements):
        pat = space.state_patterns[i]
        for k in range(1, profile.num_classes + 1):
            outcome = classify(arr, k, profile)
            if outcome is Classification.ACCEPT:
                targets = placements(arr, k, profile)
                rate = lam[k - 1] / len(targets)
                for target in targets:
                    add(i, space.index_of[target], rate)
            elif outcome is Classification.FRAG_BLOCKED and variant.has_defrag:
                add(i, n_sa + n_r + space.daas_index[pat], lam[k - 1])
            # blocked arrivals otherwise cause no transition (lost calls)
            if pat[k - 1]:
                for target, mult in removals(arr, k, profile):
                    add(i, space.index_of[target], mu[k - 1] * mult)
        if variant.has_randomization and pat in space.raas_index:
            add(i, n_sa + space.raas_index[pat], lam_s)

    if variant.has_randomization:
        for v, pat in enumerate(space.raas_patterns):
            members = space.pattern_groups[pat]
            rate = mu_d / len(members)
            for j in members:
                add(n_sa + v, j, rate)

    if variant.has_defrag:
        for v in range(space.num_daas):
            targets = space.defrag_targets[v]
            rate = mu_d / len(targets)
            for j in targets:
                add(n_sa + n_r + v, j, rate)

    q = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    q = q + sp.diags(-np.asarray(q.sum(axis=1)).ravel(), format="csr")
    return RateMatrix(matrix=q, variant=variant, num_regular=n_sa, num_raas=n_r, num_daas=n_d)


def is_strongly_connected(rm: RateMatrix) -> bool:
    adjacency = rm.matrix.copy()
    adjacency.setdiag(0)
    n_comp, _ = connected_components(adjacency, directed=True, connection="strong")
    return n_comp == 1


def _terminal_states(q: sp.csr_matrix) -> np.ndarray:
    """Indices of the unique closed communicating class.

    States outside it are transient and carry zero stationary mass; more
    than one closed class means the stationary distribution is not unique.
    """
    adjacency = q.copy()
    adjacency.setdiag(0)
    n_comp, labels = connected_components(adjacency, directed=True, connection="strong")
    if n_comp == 1:
        return np.arange(q.shape[0])
    coo = adjacency.tocoo()
    leaves = np.zeros(n_comp, dtype=bool)
    for i, j, v in zip(coo.row, coo.col, coo.data):
        if v != 0 and labels[i] != labels[j]:
            leaves[labels[i]] = True
    terminal = np.flatnonzero(~leaves)
    if len(terminal) != 1:
        raise NotIrreducible(f"{len(terminal)} closed communicating classes")
    return np.flatnonzero(labels == terminal[0])


def solve_stationary(rm: RateMatrix, tol: float = DEFAULT_SOLVER_TOL) -> StationaryDistribution:
    """Solve pi Q = 0 with sum(pi) = 1 by sparse LU.

    The last balance equation is replaced by the normalization constraint.
    One step of iterative refinement is applied if the residual exceeds
    ``tol``; failure to reach ``tol`` raises NoConvergence.
    """
    q = rm.matrix
    n = q.shape[0]
    keep = _terminal_states(q)
    q_sub = q[np.ix_(keep, keep)] if len(keep) < n else q

    m = q_sub.shape[0]
    a = q_sub.transpose().tolil()
    a[m - 1, :] = np.ones(m)
    a = a.tocsc()
    b = np.zeros(m)
    b[m - 1] = 1.0

    x = spsolve(a, b)
    pi = np.zeros(n)
    pi[keep] = x

    def residual_of(p: np.ndarray) -> float:
        return float(np.max(np.abs(p @ q)))

    res = residual_of(pi)
    iterations = 0
    while res > tol and iterations < 3:
        r = b - a @ x
        x = x + spsolve(a, r)
        pi = np.zeros(n)
        pi[keep] = x
        res = residual_of(pi)
        iterations += 1
    if res > tol:
        raise NoConvergence(iterations, res)

    if float(pi.min()) < -1e-14:
        raise NoConvergence(iterations, res)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return StationaryDistribution(pi=pi, residual=residual_of(pi))


def dense_stationary_oracle(rm: RateMatrix) -> np.ndarray:
    """Independent dense solve: least squares on [Q^T; 1] x = [0; 1]."""
    q = rm.matrix.toarray()
    n = q.shape[0]
    a = np.vstack([q.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[n] = 1.0
    x, *_ = scipy.linalg.lstsq(a, b, lapack_driver="gelsy")
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def blocking_report(
    dist: StationaryDistribution | np.ndarray,
    space: StateSpace,
    profile: DemandProfile,
    variant: ModelVariant,
) -> BlockingReport:
    """Blocking metrics of a solved variant.

    Per-class resource/fragmentation blocking are stationary masses of the
    corresponding state sets; reconfiguration blocking is the mass of all
    reconfiguration states; the overall figure adds the arrival-weighted
    per-class parts to it.
    """
    pi = dist.pi if isinstance(dist, StationaryDistribution) else dist
    n_sa = space.num_regular
    rb = tuple(float(sum(pi[i] for i in s)) for s in space.resource_blocked)
    fb = tuple(float(sum(pi[i] for i in s)) for s in space.frag_blocked)
    rcb = float(pi[n_sa:].sum()) if variant.has_randomization else 0.0
    lam = profile.arrival_rates
    lam_total = sum(lam)
    if lam_total > 0:
        weighted = sum(l * (r + f) for l, r, f in zip(lam, rb, fb)) / lam_total
    else:
        weighted = 0.0
    return BlockingReport(
        variant=variant.kind,
        resource_blocking=rb,
        fragmentation_blocking=fb,
        reconfiguration_blocking=rcb,
        overall_blocking=rcb + weighted,
    )
