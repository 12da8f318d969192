"""Archetype extraction by greedy simplex volume maximization.

Archetypes are extreme points of the candidate cloud, selected one at a time:
the first maximizes the distance to an initialization vector, each later one
maximizes the sum of distances to everything selected so far. Distances are
either plain Euclidean or the metric induced by a Gaussian RBF kernel, which
bends the geometry so that selection favors the concave hull.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .types import Dataset, FloatArray, SpectralLibrary
from .validation import as_float_matrix, as_float_vector, check_finite

UNLABELED = "unlabeled"


@dataclass(frozen=True)
class SivmConfig:
    """Selection settings.

    n_archetypes: how many candidates to pick.
    space: "linear" for Euclidean distances, "kernel" for the RBF-induced
        metric sqrt(2 - 2 k(a, b)) with k(a, b) = exp(-||a-b||^2 / (2 sigma^2)).
    init: "mean" (candidate mean vector), "random" (a candidate drawn by
        seed), or an explicit vector.
    sigma: kernel width; a positive number or "heuristic" (see
        :func:`sigma_heuristic`). Ignored in linear space.
    seed: drives the "random" initialization.
    """

    n_archetypes: int
    space: str = "linear"
    init: str | Sequence[float] | np.ndarray = "mean"
    sigma: float | str = "heuristic"
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.n_archetypes < 1:
            raise ValueError("n_archetypes must be >= 1")
        if self.space not in ("linear", "kernel"):
            raise ValueError(f"unknown space {self.space!r}; use 'linear' or 'kernel'")
        if isinstance(self.init, str) and self.init not in ("mean", "random"):
            raise ValueError(f"unknown init {self.init!r}; use 'mean', 'random', "
                             "or an explicit vector")
        if isinstance(self.sigma, str) and self.sigma != "heuristic":
            raise ValueError("sigma must be a positive number or 'heuristic'")
        if not isinstance(self.sigma, str) and not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class ArchetypeSet:
    """Selected archetypes in selection order.

    indices: candidate indices, distinct, selection order preserved.
    criterion_values: the winning criterion value at each step (distance to
        the init vector for the first pick, sum of distances afterwards).
    library: the materialized spectra with their labels.
    provenance: settings that produced the set, including all seeds.
    """

    indices: tuple[int, ...]
    criterion_values: tuple[float, ...]
    library: SpectralLibrary
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("archetype indices must be distinct")
        if len(self.library) != len(self.indices):
            raise ValueError("library size must match index count")

    def __len__(self) -> int:
        return len(self.indices)


def _candidate_matrix(candidates) -> FloatArray:
    if isinstance(candidates, Dataset):
        return candidates.pixels
    return as_float_matrix(candidates, "candidates")


def _candidate_labels(candidates, n: int) -> tuple[str, ...]:
    if isinstance(candidates, Dataset) and candidates.labels is not None:
        return candidates.labels
    return (UNLABELED,) * n


def distance(a, b, space: str = "linear", sigma: float | None = None) -> float:
    """Distance between two spectra in the configured geometry.

    Linear space is the Euclidean norm. Kernel space uses the metric induced
    by the Gaussian RBF kernel, sqrt(k(a,a) - 2 k(a,b) + k(b,b)) which
    simplifies to sqrt(2 - 2 k(a,b)); it is bounded by sqrt(2).
    """
    av = as_float_vector(a, "a")
    bv = as_float_vector(b, "b")
    if av.shape[0] != bv.shape[0]:
        raise ValueError(f"band count mismatch: {av.shape[0]} vs {bv.shape[0]}")
    sq = float(np.sum((av - bv) ** 2))
    if space == "linear":
        return float(np.sqrt(sq))
    if space == "kernel":
        if sigma is None or not sigma > 0:
            raise ValueError("kernel distance requires sigma > 0")
        k = np.exp(-sq / (2.0 * sigma * sigma))
        return float(np.sqrt(max(2.0 - 2.0 * k, 0.0)))
    raise ValueError(f"unknown space {space!r}")


def _distances_to(point: FloatArray, matrix: FloatArray, space: str,
                  sigma: float | None) -> FloatArray:
    sq = np.sum((matrix - point) ** 2, axis=1)
    if space == "linear":
        return np.sqrt(sq)
    k = np.exp(-sq / (2.0 * sigma * sigma))
    return np.sqrt(np.maximum(2.0 - 2.0 * k, 0.0))


def sigma_heuristic(candidates) -> float:
    """Kernel width from data spread: half the average per-band deviation."""
    matrix = _candidate_matrix(candidates)
    if matrix.shape[0] < 2:
        raise ValueError("sigma heuristic needs at least 2 candidates")
    sigma = 0.5 * float(np.mean(np.std(matrix, axis=0)))
    if sigma <= 0.0:
        raise ValueError("all candidates identical; supply an explicit sigma")
    return sigma


def _resolve_sigma(candidates, config: SivmConfig) -> float | None:
    if config.space != "kernel":
        return None
    if isinstance(config.sigma, str):
        return sigma_heuristic(candidates)
    return float(config.sigma)


def _resolve_init(matrix: FloatArray, config: SivmConfig) -> FloatArray:
    if isinstance(config.init, str):
        if config.init == "mean":
            return matrix.mean(axis=0)
        rng = np.random.default_rng(config.seed)
        return matrix[int(rng.integers(matrix.shape[0]))]
    vec = as_float_vector(config.init, "init")
    if vec.shape[0] != matrix.shape[1]:
        raise ValueError(f"init vector has {vec.shape[0]} bands, "
                         f"candidates have {matrix.shape[1]}")
    return vec


def sivm_select(candidates, config: SivmConfig) -> ArchetypeSet:
    """Greedy farthest-point selection of ``config.n_archetypes`` candidates.

    The first archetype maximizes the distance to the initialization vector;
    each subsequent one maximizes the summed distance to all archetypes
    selected so far. Ties break toward the lowest candidate index. Selected
    archetypes are always actual candidates, referenced by index.
    """
    matrix = _candidate_matrix(candidates)
    check_finite(matrix, "candidates")
    n = matrix.shape[0]
    if n == 0:
        raise ValueError("candidates must be nonempty")
    if config.n_archetypes > n:
        raise ValueError(f"n_archetypes ({config.n_archetypes}) exceeds "
                         f"candidate count ({n})")
    sigma = _resolve_sigma(candidates, config)
    init = _resolve_init(matrix, config)

    crit = _distances_to(init, matrix, config.space, sigma)
    indices: list[int] = []
    values: list[float] = []
    selected = np.zeros(n, dtype=bool)
    # After the first pick, crit becomes the running sum of distances to the
    # selected set; masking keeps argmax (lowest index on ties) correct.
    for step in range(config.n_archetypes):
        masked = np.where(selected, -np.inf, crit)
        pick = int(np.argmax(masked))
        indices.append(pick)
        values.append(float(masked[pick]))
        selected[pick] = True
        add = _distances_to(matrix[pick], matrix, config.space, sigma)
        crit = add if step == 0 else crit + add

    labels = _candidate_labels(candidates, n)
    library = SpectralLibrary.from_arrays(
        matrix[indices], [labels[i] for i in indices],
        [f"candidate_{i}" for i in indices])
    provenance = {
        "space": config.space,
        "init": config.init if isinstance(config.init, str) else "fixed",
        "sigma": sigma,
        "seeds": (config.seed,),
        "candidate_count": n,
        "candidate_checksum": _fingerprint(matrix),
    }
    return ArchetypeSet(tuple(indices), tuple(values), library, provenance)


def _fingerprint(matrix: FloatArray) -> str:
    return hashlib.sha256(np.ascontiguousarray(matrix).tobytes()).hexdigest()[:16]


def accumulate_runs(runs: Sequence[ArchetypeSet]) -> ArchetypeSet:
    """Union of several selections, ordered by first appearance.

    All runs must come from the same candidate set; this is checked through
    the recorded candidate count and by value on overlapping indices.
    """
    if not runs:
        raise ValueError("runs must be nonempty")
    counts = {run.provenance.get("candidate_count") for run in runs}
    if len(counts) > 1:
        raise ValueError(f"runs come from different candidate sets: "
                         f"candidate counts {sorted(counts)}")
    checksums = {run.provenance.get("candidate_checksum") for run in runs}
    if len(checksums) > 1:
        raise ValueError("runs come from different candidate sets "
                         "(candidate checksums differ)")
    seen: dict[int, FloatArray] = {}
    order: list[int] = []
    spectra: list[FloatArray] = []
    class_ids: list[str] = []
    source_ids: list[str] = []
    for run in runs:
        for pos, idx in enumerate(run.indices):
            values = run.library.spectra[pos]
            if idx in seen:
                if not np.array_equal(seen[idx], values):
                    raise ValueError(f"runs disagree on candidate {idx}; "
                                     "not drawn from the same candidate set")
                continue
            seen[idx] = values
            order.append(idx)
            spectra.append(values)
            class_ids.append(run.library.class_ids[pos])
            source_ids.append(run.library.source_ids[pos])
    seeds = tuple(s for run in runs
                  for s in run.provenance.get("seeds", ()))
    provenance = {
        "space": runs[0].provenance.get("space"),
        "init": "accumulated",
        "sigma": runs[0].provenance.get("sigma"),
        "seeds": seeds,
        "candidate_count": counts.pop(),
        "candidate_checksum": checksums.pop(),
        "runs": len(runs),
    }
    library = SpectralLibrary(np.vstack(spectra), tuple(class_ids),
                              tuple(source_ids))
    return ArchetypeSet(tuple(order), (), library, provenance)


def label_archetypes(archetypes: ArchetypeSet,
                     labels: Sequence[str]) -> ArchetypeSet:
    """Attach per-candidate class labels to a selection.

    ``labels`` is indexed by candidate position, so it must cover every
    selected index.
    """
    for idx in archetypes.indices:
        if idx >= len(labels):
            raise ValueError(f"no label for selected candidate {idx} "
                             f"(labels cover {len(labels)})")
    library = SpectralLibrary(
        archetypes.library.spectra,
        tuple(str(labels[i]) for i in archetypes.indices),
        archetypes.library.source_ids)
    return ArchetypeSet(archetypes.indices, archetypes.criterion_values,
                        library, archetypes.provenance)


class SivmArchetypes(BaseEstimator):
    """Estimator wrapper around greedy archetype selection.

    ``fit(X)`` selects archetypes from the rows of X (a matrix or a Dataset)
    and exposes ``indices_``, ``archetypes_``, ``labels_``,
    ``criterion_values_``, and ``sigma_`` (kernel mode only).
    """

    def __init__(self, n_archetypes: int = 10, space: str = "linear",
                 init: str = "mean", sigma: float | str = "heuristic",
                 seed: int | None = None):
        self.n_archetypes = n_archetypes
        self.space = space
        self.init = init
        self.sigma = sigma
        self.seed = seed

    def fit(self, X, y=None):
        config = SivmConfig(self.n_archetypes, self.space, self.init,
                            self.sigma, self.seed)
        result = sivm_select(X, config)
        if y is not None:
            result = label_archetypes(result, list(y))
        self.result_ = result
        self.indices_ = np.asarray(result.indices)
        self.criterion_values_ = np.asarray(result.criterion_values)
        self.archetypes_ = result.library.spectra
        self.labels_ = result.library.class_ids
        self.sigma_ = result.provenance.get("sigma")
        return self

    def transform(self, X):
        """Distances from each row of X to every fitted archetype."""
        if not hasattr(self, "result_"):
            raise NotFittedError("SivmArchetypes must be fitted first")
        matrix = _candidate_matrix(X)
        sigma = self.sigma_ if self.space == "kernel" else None
        cols = [_distances_to(arch, matrix, self.space, sigma)
                for arch in self.archetypes_]
        return np.column_stack(cols)
