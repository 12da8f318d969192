"""Independent reference implementations used to verify the package.

Everything here favors obviousness over speed: exhaustive enumeration,
plain loops, and textbook formulas. Nothing imports from specmix.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize

_FEAS_TOL = 1e-12


def _equality_ls_on_subset(matrix: np.ndarray, x: np.ndarray,
                           subset: tuple[int, ...]) -> np.ndarray:
    """Solve min ||D_S' a - x||^2 s.t. sum(a) = 1 on the given subset."""
    sub = matrix[list(subset)]
    k = sub.shape[0]
    gram = sub @ sub.T
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = gram
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.append(sub @ x, 1.0)
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:k]


def simplex_qp_bruteforce(matrix: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact simplex-constrained least squares by subset enumeration.

    Tries every nonempty support, keeps feasible equality solutions, and
    returns the coefficient vector with the smallest true residual. Subsets
    are visited in order of increasing size so the minimal support wins ties.
    Exponential in the number of rows; intended for <= ~12 atoms.
    """
    n = matrix.shape[0]
    best_alpha = None
    best_obj = np.inf
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            coeff = _equality_ls_on_subset(matrix, x, subset)
            if coeff.min() < -_FEAS_TOL:
                continue
            coeff = np.maximum(coeff, 0.0)
            total = coeff.sum()
            if total <= 0.0:
                continue
            coeff = coeff / total
            alpha = np.zeros(n)
            alpha[list(subset)] = coeff
            obj = float(np.sum((matrix.T @ alpha - x) ** 2))
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_alpha = alpha
    assert best_alpha is not None
    return best_alpha


def greedy_backward_bruteforce(matrix: np.ndarray, x: np.ndarray,
                               sparsity: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Backward elimination path using the enumeration solver at every step.

    Returns the final coefficients and the sequence of supports after each
    restricted re-solve (starting with the unrestricted support).
    """
    alpha = simplex_qp_bruteforce(matrix, x)
    support = [int(i) for i in np.flatnonzero(alpha > 1e-9)]
    path = [tuple(support)]
    while len(support) > sparsity:
        local = int(np.argmin(alpha[support]))
        support.pop(local)
        sub_alpha = simplex_qp_bruteforce(matrix[support], x)
        alpha = np.zeros(matrix.shape[0])
        alpha[support] = sub_alpha
        support = [int(i) for i in np.flatnonzero(alpha > 1e-9)]
        path.append(tuple(support))
    return alpha, path


def simplex_qp_slsqp(matrix: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Simplex-constrained least squares via a generic SQP solver."""
    n = matrix.shape[0]

    def objective(a):
        r = matrix.T @ a - x
        return float(r @ r)

    def gradient(a):
        return 2.0 * (matrix @ (matrix.T @ a - x))

    res = minimize(objective, np.full(n, 1.0 / n), jac=gradient, method="SLSQP",
                   bounds=[(0.0, 1.0)] * n,
                   constraints=[{"type": "eq", "fun": lambda a: a.sum() - 1.0}],
                   options={"maxiter": 500, "ftol": 1e-14})
    return np.maximum(res.x, 0.0)


def _pairwise_linear(a: np.ndarray, b: np.ndarray) -> float:
    return float(math.sqrt(float(np.sum((a - b) ** 2))))


def _pairwise_kernel(a: np.ndarray, b: np.ndarray, sigma: float) -> float:
    k = math.exp(-float(np.sum((a - b) ** 2)) / (2.0 * sigma * sigma))
    return math.sqrt(max(2.0 - 2.0 * k, 0.0))


def sivm_bruteforce(candidates: np.ndarray, count: int, init: np.ndarray,
                    sigma: float | None = None) -> list[int]:
    """Farthest-point selection with plain loops.

    First pick maximizes distance to ``init``; later picks maximize the sum
    of distances to everything already selected. Ties go to the lowest index.
    ``sigma`` switches the metric from Euclidean to the kernel-induced one.
    """
    def dist(a, b):
        if sigma is None:
            return _pairwise_linear(a, b)
        return _pairwise_kernel(a, b, sigma)

    n = candidates.shape[0]
    selected: list[int] = []
    best, best_val = 0, -np.inf
    for i in range(n):
        val = dist(candidates[i], init)
        if val > best_val:
            best, best_val = i, val
    selected.append(best)
    while len(selected) < count:
        best, best_val = -1, -np.inf
        for i in range(n):
            if i in selected:
                continue
            val = sum(dist(candidates[i], candidates[j]) for j in selected)
            if val > best_val:
                best, best_val = i, val
        selected.append(best)
    return selected


def lof_bruteforce(points: np.ndarray, k: int) -> np.ndarray:
    """Local outlier factor with exactly k neighbors, computed with loops.

    Distance ties are broken by point index. Reachability sums are floored
    at 1e-12 so exact duplicates come out with score 1 instead of nan.
    """
    n = points.shape[0]
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = math.sqrt(float(np.sum((points[i] - points[j]) ** 2)))
            dist[i, j] = dist[j, i] = d

    neighbors = []
    kdist = np.zeros(n)
    for i in range(n):
        order = sorted((j for j in range(n) if j != i),
                       key=lambda j: (dist[i, j], j))
        neighbors.append(order[:k])
        kdist[i] = dist[i, order[k - 1]]

    lrd = np.zeros(n)
    for i in range(n):
        total = sum(max(kdist[j], dist[i, j], 1e-12) for j in neighbors[i])
        lrd[i] = k / total

    scores = np.zeros(n)
    for i in range(n):
        scores[i] = sum(lrd[j] for j in neighbors[i]) / (k * lrd[i])
    return scores


def subset_target_distribution(energies: dict[tuple[int, ...], float],
                               prior_lambda: float,
                               temperature: float) -> dict[tuple[int, ...], float]:
    """Normalized stationary law pi(S) ~ exp(-U(S)/T) * lambda^|S| / |S|!.

    ``energies`` must already contain every admissible subset (sorted index
    tuples); the result maps each to its probability.
    """
    logw = {}
    for subset, energy in energies.items():
        size = len(subset)
        logw[subset] = (-energy / temperature + size * math.log(prior_lambda)
                        - math.lgamma(size + 1))
    peak = max(logw.values())
    weights = {s: math.exp(v - peak) for s, v in logw.items()}
    total = sum(weights.values())
    return {s: w / total for s, w in weights.items()}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(s, 0.0) - q.get(s, 0.0)) for s in keys)
