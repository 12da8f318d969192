"""Simplex-constrained sparse unmixing.

Each pixel is expressed as a convex combination of library spectra: the
coefficients are non-negative, sum to one, and are limited to at most
``sparsity`` nonzero entries. The equality/inequality constraints are handled
exactly by an active-set iteration over the simplex facets; the sparsity cap
is enforced afterwards by greedy backward elimination of the smallest
activations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .types import Dataset, FloatArray, SpectralLibrary
from .validation import (as_float_vector, check_band_counts, check_finite,
                         library_matrix)

DEFAULT_SPARSITY = 7


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the constrained solver.

    sparsity: maximum number of nonzero coefficients per pixel.
    tolerance: dual-feasibility tolerance of the active-set iteration.
    max_iterations: iteration cap; ``None`` means 10x the library size.
    """

    sparsity: int = DEFAULT_SPARSITY
    tolerance: float = 1e-10
    max_iterations: int | None = None

    def __post_init__(self) -> None:
        if self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def iteration_cap(self, n_atoms: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 10 * n_atoms


@dataclass(frozen=True)
class UnmixResult:
    """Solution for one pixel: coefficients, residual norm, iteration count."""

    coefficients: FloatArray
    residual_norm: float
    iterations: int

    @cached_property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients > 0.0)


def _solve_equality_ls(gram: FloatArray, lin: FloatArray) -> FloatArray:
    """Minimize a'Ga - 2 lin'a subject to sum(a) = 1, signs unconstrained."""
    k = gram.shape[0]
    kkt = np.empty((k + 1, k + 1))
    kkt[:k, :k] = gram
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    kkt[k, k] = 0.0
    rhs = np.empty(k + 1)
    rhs[:k] = lin
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
        if not np.isfinite(sol).all():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        # Duplicate atoms make the Gram singular; the minimum-norm solution
        # keeps the iteration well defined.
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:k]


def _simplex_nnls_gram(gram: FloatArray, lin: FloatArray, tolerance: float,
                       max_iterations: int) -> tuple[FloatArray, int]:
    """Active-set minimization of ||Da - x||^2 over the probability simplex.

    Works entirely in Gram space: ``gram = D D'`` and ``lin = D x``. Returns
    exact zeros outside the passive set, so the support of the result is the
    passive set itself.
    """
    n = lin.shape[0]
    tol = tolerance * max(1.0, float(np.max(np.abs(lin))))

    # Feasible start: the best single vertex of the simplex.
    start = int(np.argmin(gram.diagonal() - 2.0 * lin))
    alpha = np.zeros(n)
    alpha[start] = 1.0
    passive = np.zeros(n, dtype=bool)
    passive[start] = True

    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        idx = np.flatnonzero(passive)
        if idx.size == 1:
            trial = np.ones(1)
        else:
            trial = _solve_equality_ls(gram[np.ix_(idx, idx)], lin[idx])

        # Inner loop: step from the last feasible point toward the trial
        # solution, stopping at the first facet, until the equality solution
        # on the shrunken passive set is strictly positive.
        while trial.min() <= 0.0 and iterations < max_iterations:
            iterations += 1
            cur = alpha[idx]
            blocking = trial <= 0.0
            denom = cur - trial
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(blocking & (denom > 0.0), cur / denom, np.inf)
            step = float(ratios.min())
            if not np.isfinite(step):
                # Only already-zero coordinates block; drop them in place.
                step = 0.0
            cur = cur + step * (trial - cur)
            cur[cur <= tol] = 0.0
            alpha[:] = 0.0
            alpha[idx] = np.maximum(cur, 0.0)
            passive = alpha > 0.0
            if not passive.any():
                passive[start] = True
                alpha[start] = 1.0
            idx = np.flatnonzero(passive)
            if idx.size == 1:
                trial = np.ones(1)
            else:
                trial = _solve_equality_ls(gram[np.ix_(idx, idx)], lin[idx])

        if trial.min() <= 0.0:
            break  # iteration cap hit mid-step; alpha is the last feasible point

        alpha[:] = 0.0
        alpha[idx] = trial
        total = alpha.sum()
        if total > 0.0 and total != 1.0:
            alpha /= total

        # Optimality: moving mass from any positive coordinate to a zero one
        # must not decrease the objective. The gradient is constant on the
        # support at an equality-constrained optimum.
        grad = gram[:, idx] @ alpha[idx] - lin
        mu = float(grad[idx].max())
        zero_idx = np.flatnonzero(~passive)
        if zero_idx.size == 0:
            break
        violation = grad[zero_idx] - mu
        worst = int(np.argmin(violation))
        if violation[worst] >= -tol:
            break
        passive[zero_idx[worst]] = True

    return alpha, iterations


def _residual_norm(matrix: FloatArray, alpha: FloatArray, x: FloatArray) -> float:
    support = np.flatnonzero(alpha > 0.0)
    recon = alpha[support] @ matrix[support]
    return float(np.linalg.norm(x - recon))


def solve_simplex_nnls(library: SpectralLibrary | np.ndarray, pixel,
                       config: SolverConfig | None = None) -> UnmixResult:
    """Least-squares coefficients on the probability simplex (no sparsity cap).

    Parameters
    ----------
    library : SpectralLibrary or (n_elements, n_bands) array
    pixel : (n_bands,) array
    config : SolverConfig, optional

    Returns
    -------
    UnmixResult with non-negative coefficients summing to one and the
    Euclidean reconstruction error recomputed in feature space.
    """
    config = config or SolverConfig()
    matrix = library_matrix(library)
    x = as_float_vector(pixel, "pixel")
    check_finite(x, "pixel")
    if x.shape[0] != matrix.shape[1]:
        raise ValueError(f"band count mismatch: library has {matrix.shape[1]} bands, "
                         f"pixel has {x.shape[0]}")
    gram = matrix @ matrix.T
    lin = matrix @ x
    alpha, iterations = _simplex_nnls_gram(gram, lin, config.tolerance,
                                           config.iteration_cap(matrix.shape[0]))
    return UnmixResult(alpha, _residual_norm(matrix, alpha, x), iterations)


def _sparsify_gram(gram: FloatArray, lin: FloatArray, alpha: FloatArray,
                   config: SolverConfig) -> tuple[FloatArray, int]:
    """Greedy backward elimination in Gram space; returns (alpha, iterations)."""
    iterations = 0
    support = np.flatnonzero(alpha > 0.0)
    while support.size > config.sparsity:
        drop = support[int(np.argmin(alpha[support]))]
        keep = support[support != drop]
        sub, iters = _simplex_nnls_gram(gram[np.ix_(keep, keep)], lin[keep],
                                        config.tolerance,
                                        config.iteration_cap(keep.size))
        iterations += iters
        alpha = np.zeros_like(alpha)
        alpha[keep] = sub
        support = np.flatnonzero(alpha > 0.0)
    return alpha, iterations


def sparsify_backward(library: SpectralLibrary | np.ndarray, pixel,
                      result: UnmixResult,
                      config: SolverConfig | None = None) -> UnmixResult:
    """Enforce the sparsity cap by removing the smallest activations.

    While the support is larger than ``config.sparsity``, the smallest
    activation (ties broken by lowest index) is dropped and the simplex
    problem is re-solved on the surviving elements. Returns the input
    unchanged when the cap is already met.
    """
    config = config or SolverConfig()
    if result.support.size <= config.sparsity:
        return result
    matrix = library_matrix(library)
    x = as_float_vector(pixel, "pixel")
    gram = matrix @ matrix.T
    lin = matrix @ x
    alpha, iterations = _sparsify_gram(gram, lin, result.coefficients.copy(), config)
    return UnmixResult(alpha, _residual_norm(matrix, alpha, x),
                       result.iterations + iterations)


def unmix_pixel(library: SpectralLibrary | np.ndarray, pixel,
                config: SolverConfig | None = None) -> UnmixResult:
    """Full per-pixel pipeline: simplex solve followed by sparsification."""
    config = config or SolverConfig()
    result = solve_simplex_nnls(library, pixel, config)
    return sparsify_backward(library, pixel, result, config)


class _BatchOperator:
    """Precomputed Gram-space view of a dictionary for repeated solves."""

    def __init__(self, matrix: FloatArray, config: SolverConfig):
        self.matrix = matrix
        self.gram = matrix @ matrix.T
        self.config = config

    def solve(self, x: FloatArray) -> UnmixResult:
        lin = self.matrix @ x
        cap = self.config.iteration_cap(self.matrix.shape[0])
        alpha, iterations = _simplex_nnls_gram(self.gram, lin,
                                               self.config.tolerance, cap)
        alpha, extra = _sparsify_gram(self.gram, lin, alpha, self.config)
        return UnmixResult(alpha, _residual_norm(self.matrix, alpha, x),
                           iterations + extra)


def _solve_indexed(op: _BatchOperator, index: int, x: FloatArray) -> UnmixResult:
    try:
        check_finite(x, "pixel")
        return op.solve(x)
    except ValueError as exc:
        raise ValueError(f"pixel {index}: {exc}") from exc


def unmix_batch(library: SpectralLibrary | np.ndarray, pixels,
                config: SolverConfig | None = None,
                n_jobs: int | None = None) -> list[UnmixResult]:
    """Unmix every pixel; output order matches input order.

    Results are identical to sequential per-pixel calls regardless of
    ``n_jobs``; per-pixel failures are re-raised with the pixel index.
    """
    config = config or SolverConfig()
    matrix = library_matrix(library)
    data = pixels.pixels if isinstance(pixels, Dataset) else \
        np.asarray(pixels, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("pixels must be 2-D (n_pixels, n_bands)")
    if data.shape[0] == 0:
        return []
    check_band_counts(matrix, data)
    op = _BatchOperator(matrix, config)
    if n_jobs is None or n_jobs == 1:
        return [_solve_indexed(op, i, x) for i, x in enumerate(data)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_solve_indexed)(op, i, x) for i, x in enumerate(data))
    return list(results)


def coefficient_matrix(results: list[UnmixResult]) -> FloatArray:
    """Stack per-pixel coefficients into an (n_pixels, n_elements) matrix."""
    if not results:
        return np.zeros((0, 0))
    return np.vstack([r.coefficients for r in results])


def stacked_residual_norm(results: list[UnmixResult]) -> float:
    """Euclidean norm of all per-pixel residual vectors stacked together."""
    return float(np.sqrt(sum(r.residual_norm ** 2 for r in results)))


class SimplexUnmixer(BaseEstimator, TransformerMixin):
    """Transformer mapping pixels to sparse simplex coefficients.

    ``fit`` memorizes the dictionary (a labeled library or a plain matrix);
    ``transform`` returns the coefficient matrix. Class fractions are
    obtained with :func:`specmix.metrics.aggregate_fraction_matrix`.

    Parameters
    ----------
    sparsity : int, maximum nonzero coefficients per pixel.
    tolerance : float, active-set dual tolerance.
    max_iterations : int or None, per-solve iteration cap.
    n_jobs : int or None, workers used by transform.
    """

    def __init__(self, sparsity: int = DEFAULT_SPARSITY, tolerance: float = 1e-10,
                 max_iterations: int | None = None, n_jobs: int | None = None):
        self.sparsity = sparsity
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.n_jobs = n_jobs

    def _config(self) -> SolverConfig:
        return SolverConfig(self.sparsity, self.tolerance, self.max_iterations)

    def fit(self, X, y=None):
        """Store the dictionary. X is a SpectralLibrary or an atom matrix."""
        if isinstance(X, SpectralLibrary):
            self.dictionary_ = X.spectra
            self.labels_ = X.class_ids
        else:
            self.dictionary_ = library_matrix(X)
            self.labels_ = tuple(y) if y is not None else None
        self._config()  # validate params eagerly
        self.n_features_in_ = self.dictionary_.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "dictionary_"):
            raise NotFittedError("SimplexUnmixer must be fitted with a dictionary "
                                 "before calling transform")

    def transform(self, X) -> FloatArray:
        """Coefficient matrix (n_pixels, n_elements) for the given pixels."""
        self._check_fitted()
        results = self.unmix(X)
        if not results:
            return np.zeros((0, self.dictionary_.shape[0]))
        return coefficient_matrix(results)

    def unmix(self, X) -> list[UnmixResult]:
        """Per-pixel results including residual norms and iteration counts."""
        self._check_fitted()
        return unmix_batch(self.dictionary_, X, self._config(), n_jobs=self.n_jobs)
