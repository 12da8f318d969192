"""Dictionary subset search by annealed birth-death sampling.

States are nonempty subsets of a spectral pool, scored by the reconstruction
energy of an evaluation set unmixed with that subset. The sampler targets

    pi(S) proportional to exp(-U(S)/R) * lambda^K / K!,   K = |S|,

a Poisson prior on the subset size times a tempered likelihood, restricted
to 1 <= K <= max_elements. Birth and death moves are proposed with equal
probability away from the size boundaries and forced at them; the
temperature R shrinks geometrically so late samples concentrate near the
minimum-energy subset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .solver import (SolverConfig, _residual_norm, _simplex_nnls_gram,
                     _sparsify_gram)
from .types import Dataset, FloatArray, SpectralLibrary
from .validation import check_band_counts

# Energies within this window count as ties for the reported best subset;
# strictly smaller energy always wins.
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings.

    prior_lambda: Poisson mean of the subset-size prior.
    max_elements: hard upper bound on the subset size.
    iterations: number of birth-death steps.
    initial_temperature: starting R, or "auto" (the standard deviation of
        the energies of 20 random subsets; 1.0 if that collapses to 0).
    cooling_factor: per-step multiplier on R; 1.0 keeps the temperature
        fixed, which turns annealing off and leaves a plain sampler whose
        stationary law is the target above.
    seed: drives all randomness; fixed seed means a bit-identical trace.
    sparsity / tolerance: solver settings used inside the energy.
    require_class_coverage: when set, subsets must keep at least one
        element of every pool class; violating proposals are rejected.
    """

    prior_lambda: float = 75.0
    max_elements: int = 150
    iterations: int = 10000
    initial_temperature: float | str = "auto"
    cooling_factor: float = 0.995
    seed: int | None = None
    sparsity: int = 7
    tolerance: float = 1e-10
    require_class_coverage: bool = False

    def __post_init__(self) -> None:
        if self.prior_lambda <= 0:
            raise ValueError("prior_lambda must be positive")
        if self.max_elements < 1:
            raise ValueError("max_elements must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if isinstance(self.initial_temperature, str):
            if self.initial_temperature != "auto":
                raise ValueError("initial_temperature must be positive or 'auto'")
        elif not self.initial_temperature > 0:
            raise ValueError("initial_temperature must be positive or 'auto'")
        if not 0.0 < self.cooling_factor <= 1.0:
            raise ValueError("cooling_factor must lie in (0, 1]")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.sparsity, self.tolerance)


@dataclass(frozen=True)
class McmcState:
    """Chain snapshot: the subset, its energy, and the schedule position."""

    subset: tuple[int, ...]
    energy: float
    temperature: float
    step: int
    rng_state: object = None


@dataclass(frozen=True)
class Proposal:
    """A birth or death move with the probability of choosing that kind."""

    kind: str  # "birth" | "death"
    index: int
    kind_prob: float


@dataclass(frozen=True)
class McmcTrace:
    """Per-step chain record (step 0 is the initial state).

    ``subset_ids[i]`` indexes ``subset_table`` to recover the subset the
    chain occupied at step ``i``.
    """

    steps: np.ndarray
    subset_sizes: np.ndarray
    energies: FloatArray
    temperatures: FloatArray
    moves: np.ndarray
    accepted: np.ndarray
    subset_ids: np.ndarray
    subset_table: tuple[tuple[int, ...], ...]
    best_subset: tuple[int, ...]
    best_energy: float

    def __len__(self) -> int:
        return self.steps.size

    def to_csv(self) -> str:
        rows = ["step,K,energy,temperature,move,accepted"]
        for i in range(self.steps.size):
            rows.append(f"{self.steps[i]},{self.subset_sizes[i]},"
                        f"{self.energies[i]:.17g},{self.temperatures[i]:.17g},"
                        f"{self.moves[i]},{int(self.accepted[i])}")
        return "\n".join(rows) + "\n"


class _EnergyCache:
    """Exact subset energies, memoized by subset.

    Every distinct subset is evaluated once with the full solver; repeat
    visits are free. The computation matches :func:`energy` on the same
    inputs, so cached values never drift from a fresh recomputation.
    """

    def __init__(self, pool_matrix: FloatArray, eval_matrix: FloatArray,
                 solver_config: SolverConfig):
        self.pool = pool_matrix
        self.eval = eval_matrix
        self.gram = pool_matrix @ pool_matrix.T
        self.lin = pool_matrix @ eval_matrix.T  # (P, T)
        self.config = solver_config
        self.cache: dict[tuple[int, ...], float] = {}

    def __call__(self, subset: tuple[int, ...]) -> float:
        cached = self.cache.get(subset)
        if cached is not None:
            return cached
        value = self.compute(subset)
        self.cache[subset] = value
        return value

    def compute(self, subset: tuple[int, ...]) -> float:
        idx = np.asarray(subset, dtype=int)
        gram = self.gram[np.ix_(idx, idx)]
        sub_matrix = self.pool[idx]
        cap = self.config.iteration_cap(idx.size)
        total = 0.0
        for t in range(self.eval.shape[0]):
            lin = self.lin[idx, t]
            alpha, _ = _simplex_nnls_gram(gram, lin, self.config.tolerance, cap)
            alpha, _ = _sparsify_gram(gram, lin, alpha, self.config)
            total += _residual_norm(sub_matrix, alpha, self.eval[t]) ** 2
        return float(np.sqrt(total))


def _eval_matrix(eval_set) -> FloatArray:
    if isinstance(eval_set, Dataset):
        return eval_set.pixels
    return np.asarray(eval_set, dtype=np.float64)


def energy(pool: SpectralLibrary, subset: Sequence[int], eval_set,
           config: McmcConfig | None = None) -> float:
    """Reconstruction energy of a subset: the Euclidean norm of all
    per-pixel residual vectors stacked, using the full solver (including
    the sparsity cap) on every evaluation pixel.
    """
    config = config or McmcConfig()
    subset = tuple(sorted(int(i) for i in subset))
    if not subset:
        raise ValueError("subset must be nonempty")
    if len(set(subset)) != len(subset):
        raise ValueError("subset indices must be distinct")
    if subset[0] < 0 or subset[-1] >= len(pool):
        raise ValueError(f"subset index out of range for pool of {len(pool)}")
    matrix = _eval_matrix(eval_set)
    if matrix.shape[0] == 0:
        raise ValueError("evaluation set must be nonempty")
    check_band_counts(pool, matrix)
    cache = _EnergyCache(pool.spectra, matrix, config.solver_config())
    return cache.compute(subset)


def propose(state: McmcState, pool_size: int,
            rng: np.random.Generator,
            max_elements: int | None = None) -> Proposal:
    """Draw a birth or death move from the current subset.

    Birth and death each have probability 0.5 strictly inside the size
    range; at K = 1 birth is forced, at the upper bound death is forced.
    The target index is uniform over the unused (birth) or current (death)
    indices. The returned proposal records the probability of its kind.
    """
    k = len(state.subset)
    k_max = min(max_elements, pool_size) if max_elements else pool_size
    if k <= 1 and k >= k_max:
        raise ValueError("no move possible: subset size is pinned at 1")
    if k <= 1:
        birth, kind_prob = True, 1.0
    elif k >= k_max:
        birth, kind_prob = False, 1.0
    else:
        birth = rng.random() < 0.5
        kind_prob = 0.5
    if birth:
        unused = np.setdiff1d(np.arange(pool_size), state.subset,
                              assume_unique=True)
        index = int(unused[rng.integers(unused.size)])
        return Proposal("birth", index, kind_prob)
    index = state.subset[int(rng.integers(k))]
    return Proposal("death", index, kind_prob)


def _kind_prob(k: int, kind: str, k_max: int) -> float:
    """Probability of proposing ``kind`` from a size-k state."""
    if kind == "birth":
        if k >= k_max:
            return 0.0
        return 1.0 if k <= 1 else 0.5
    if k <= 1:
        return 0.0
    return 1.0 if k >= k_max else 0.5


def acceptance_probability(delta_energy: float, move: Proposal, k: int,
                           pool_size: int, config: McmcConfig,
                           temperature: float) -> float:
    """Hastings acceptance for a birth or death from a size-k subset.

    Birth:  min{1, exp(-dU/R) * (lambda/(K+1)) * (d'/b) * (P-K)/(K+1)}
    Death:  min{1, exp(-dU/R) * (K/lambda) * (b'/d) * K/(P-K+1)}

    where b, d are the forward kind probabilities and b', d' the reverse
    ones (0.5 in the interior, 1 at the boundaries). Computed in log space
    so extreme temperatures cannot overflow.
    """
    lam = config.prior_lambda
    k_max = min(config.max_elements, pool_size)
    if move.kind == "birth":
        reverse = _kind_prob(k + 1, "death", k_max)
        log_ratio = (-delta_energy / temperature + math.log(lam)
                     - math.log(k + 1.0)
                     + math.log(reverse) - math.log(move.kind_prob)
                     + math.log(pool_size - k) - math.log(k + 1.0))
    else:
        reverse = _kind_prob(k - 1, "birth", k_max)
        log_ratio = (-delta_energy / temperature - math.log(lam)
                     + math.log(float(k))
                     + math.log(reverse) - math.log(move.kind_prob)
                     + math.log(float(k)) - math.log(pool_size - k + 1.0))
    return math.exp(min(0.0, log_ratio))


def _poisson_log_prior(k: int, lam: float) -> float:
    return k * math.log(lam) - math.lgamma(k + 1.0)


def _initial_subset(rng: np.random.Generator, pool: SpectralLibrary,
                    config: McmcConfig) -> tuple[int, ...]:
    p = len(pool)
    size = max(1, min(int(round(config.prior_lambda)), p,
                      config.max_elements))
    if not config.require_class_coverage:
        return tuple(sorted(int(i) for i in rng.choice(p, size, replace=False)))
    classes: dict[str, list[int]] = {}
    for i, cid in enumerate(pool.class_ids):
        classes.setdefault(cid, []).append(i)
    if config.max_elements < len(classes):
        raise ValueError(f"max_elements ({config.max_elements}) cannot cover "
                         f"{len(classes)} classes")
    chosen = [int(members[rng.integers(len(members))])
              for members in classes.values()]
    size = max(size, len(chosen))
    remaining = np.setdiff1d(np.arange(p), chosen, assume_unique=True)
    extra = size - len(chosen)
    if extra > 0:
        chosen.extend(int(i) for i in
                      rng.choice(remaining, extra, replace=False))
    return tuple(sorted(chosen))


def _covers_classes(subset: Sequence[int], class_ids: Sequence[str],
                    class_set: frozenset[str]) -> bool:
    return frozenset(class_ids[i] for i in subset) == class_set


def _resolve_temperature(rng: np.random.Generator, pool: SpectralLibrary,
                         config: McmcConfig, cache: _EnergyCache,
                         size: int) -> float:
    if not isinstance(config.initial_temperature, str):
        return float(config.initial_temperature)
    probes = []
    p = len(pool)
    for _ in range(20):
        subset = tuple(sorted(int(i) for i in
                              rng.choice(p, size, replace=False)))
        probes.append(cache(subset))
    spread = float(np.std(probes))
    return spread if spread > 0.0 else 1.0


def run_rjmcmc(pool: SpectralLibrary, eval_set,
               config: McmcConfig | None = None
               ) -> tuple[SpectralLibrary, McmcTrace]:
    """Annealed subset search; returns (best subset library, trace).

    The chain starts from a random subset of size about ``prior_lambda``,
    runs ``iterations`` birth-death steps with geometric cooling, and
    returns the lowest-energy subset occupied at any step, not merely the
    final state. Among subsets whose energies tie within 1e-12 the one with
    the larger Poisson prior mass is reported (the annealing limit favors
    it); the trace's ``best_energy`` is the exact running minimum. The
    energy of the returned subset is re-verified against a fresh
    computation before returning.
    """
    config = config or McmcConfig()
    if len(pool) < 1:
        raise ValueError("pool must be nonempty")
    matrix = _eval_matrix(eval_set)
    if matrix.shape[0] == 0:
        raise ValueError("evaluation set must be nonempty")
    check_band_counts(pool, matrix)

    p = len(pool)
    k_max = min(config.max_elements, p)
    rng = np.random.default_rng(config.seed)
    cache = _EnergyCache(pool.spectra, matrix, config.solver_config())
    class_set = frozenset(pool.class_ids)

    subset = _initial_subset(rng, pool, config)
    temperature = _resolve_temperature(rng, pool, config, cache, len(subset))
    current_energy = cache(subset)

    n = config.iterations + 1
    steps = np.arange(n)
    sizes = np.zeros(n, dtype=np.int64)
    energies = np.zeros(n)
    temperatures = np.zeros(n)
    moves = np.full(n, "none", dtype="U5")
    accepted = np.zeros(n, dtype=bool)
    subset_ids = np.zeros(n, dtype=np.int32)
    table: dict[tuple[int, ...], int] = {}

    def subset_id(s: tuple[int, ...]) -> int:
        sid = table.get(s)
        if sid is None:
            sid = len(table)
            table[s] = sid
        return sid

    def record(i: int, move: str, ok: bool) -> None:
        sizes[i] = len(subset)
        energies[i] = current_energy
        temperatures[i] = temperature
        moves[i] = move
        accepted[i] = ok
        subset_ids[i] = subset_id(subset)

    best_subset = subset
    best_energy = current_energy
    best_prior = _poisson_log_prior(len(subset), config.prior_lambda)

    record(0, "init", True)
    pinned = k_max <= 1  # single-state space: no move ever possible

    for step in range(1, n):
        temperature *= config.cooling_factor
        ok = False
        kind = "none"
        if not pinned:
            state = McmcState(subset, current_energy, temperature, step - 1)
            proposal = propose(state, p, rng, config.max_elements)
            kind = proposal.kind
            if proposal.kind == "birth":
                candidate = tuple(sorted(subset + (proposal.index,)))
            else:
                candidate = tuple(i for i in subset if i != proposal.index)
            allowed = (not config.require_class_coverage
                       or _covers_classes(candidate, pool.class_ids, class_set))
            if allowed:
                cand_energy = cache(candidate)
                prob = acceptance_probability(cand_energy - current_energy,
                                              proposal, len(subset), p,
                                              config, temperature)
                ok = rng.random() < prob
                if ok:
                    subset = candidate
                    current_energy = cand_energy
        record(step, kind, ok)

        if current_energy < best_energy - _TIE_TOL:
            best_subset, best_energy = subset, current_energy
            best_prior = _poisson_log_prior(len(subset), config.prior_lambda)
        else:
            best_energy = min(best_energy, current_energy)
            if current_energy <= best_energy + _TIE_TOL:
                prior = _poisson_log_prior(len(subset), config.prior_lambda)
                if prior > best_prior:
                    best_subset, best_prior = subset, prior

    verified = cache.compute(best_subset)
    if abs(verified - best_energy) > 1e-9 * max(1.0, abs(best_energy)):
        raise RuntimeError(f"energy re-verification failed: recorded "
                           f"{best_energy!r}, recomputed {verified!r}")

    id_to_subset = [None] * len(table)
    for s, sid in table.items():
        id_to_subset[sid] = s
    trace = McmcTrace(steps, sizes, energies, temperatures, moves, accepted,
                      subset_ids, tuple(id_to_subset),
                      best_subset, float(energies.min()))
    return pool.subset(best_subset), trace
