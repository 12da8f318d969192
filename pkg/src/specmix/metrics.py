"""Evaluation statistics for estimated fraction maps.

Mean absolute error (plain, and restricted to pixels with nonzero reference
fraction), root mean square error, squared correlation with regression
lines, the sparsity-cap error scan, and the atom usage histogram.

Statistics that are undefined on the given data (empty nonzero set,
constant series) are reported as NaN and rendered as "undefined" in text
exports; they are never silently coerced to 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .solver import (SolverConfig, UnmixResult, _simplex_nnls_gram,
                     _sparsify_gram, _residual_norm)
from .types import Dataset, FloatArray, SpectralLibrary, default_class_names
from .validation import as_float_matrix, library_matrix


@dataclass(frozen=True)
class EvaluationReport:
    """Per-class and overall agreement between reference and estimate."""

    class_names: tuple[str, ...]
    classwise_mae: FloatArray
    classwise_mae_nonzero: FloatArray
    overall_mae: float
    overall_rmse: float
    r_squared: FloatArray
    regression_lines: FloatArray  # (C, 2) slope, intercept
    pixel_count: int

    def to_text(self) -> str:
        def fmt(v: float) -> str:
            return "undefined" if np.isnan(v) else f"{v:.6f}"

        lines = [f"pixels: {self.pixel_count}",
                 f"overall_mae: {fmt(self.overall_mae)}",
                 f"overall_rmse: {fmt(self.overall_rmse)}"]
        for i, name in enumerate(self.class_names):
            slope, intercept = self.regression_lines[i]
            lines.append(
                f"{name}: mae {fmt(self.classwise_mae[i])} "
                f"({fmt(self.classwise_mae_nonzero[i])}) "
                f"r2 {fmt(self.r_squared[i])} "
                f"line {fmt(slope)}x+{fmt(intercept)}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        def fmt(v: float) -> str:
            return "undefined" if np.isnan(v) else f"{v:.10g}"

        rows = ["class,mae,mae_nonzero,r_squared,slope,intercept"]
        for i, name in enumerate(self.class_names):
            rows.append(",".join([name, fmt(self.classwise_mae[i]),
                                  fmt(self.classwise_mae_nonzero[i]),
                                  fmt(self.r_squared[i]),
                                  fmt(self.regression_lines[i, 0]),
                                  fmt(self.regression_lines[i, 1])]))
        rows.append(f"overall,{fmt(self.overall_mae)},,,,")
        rows.append(f"rmse,{fmt(self.overall_rmse)},,,,")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class UsageHistogram:
    """Per-atom usage over a batch: pixel count and summed coefficient."""

    labels: tuple[str, ...]
    use_counts: np.ndarray
    fraction_sums: FloatArray
    pixel_count: int

    def to_csv(self) -> str:
        rows = ["atom,label,use_count,fraction_sum"]
        for i, label in enumerate(self.labels):
            rows.append(f"{i},{label},{self.use_counts[i]},"
                        f"{self.fraction_sums[i]:.10g}")
        return "\n".join(rows) + "\n"


def _resolve_class_names(library: SpectralLibrary,
                         class_names: Sequence[str] | None) -> tuple[str, ...]:
    if class_names is not None:
        return tuple(class_names)
    present = list(dict.fromkeys(library.class_ids))
    standard = default_class_names(4)
    if set(present) <= set(standard):
        return standard
    return tuple(present)


def aggregate_fractions(alpha, library: SpectralLibrary,
                        class_names: Sequence[str] | None = None) -> FloatArray:
    """Sum coefficients per class: the per-pixel class fraction vector.

    When ``class_names`` is omitted, the standard four-class palette is used
    if the library labels fit it, otherwise the labels in first-appearance
    order. Unknown labels (not covered by ``class_names``) are an error.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[-1] != len(library):
        raise ValueError(f"coefficient length {alpha.shape[-1]} does not match "
                         f"library size {len(library)}")
    names = _resolve_class_names(library, class_names)
    index = {name: i for i, name in enumerate(names)}
    member = np.zeros((len(library), len(names)))
    for d, cid in enumerate(library.class_ids):
        if cid not in index:
            raise ValueError(f"library class {cid!r} not among classes {names}")
        member[d, index[cid]] = 1.0
    return alpha @ member


def aggregate_fraction_matrix(coefficients, library: SpectralLibrary,
                              class_names: Sequence[str] | None = None
                              ) -> tuple[FloatArray, tuple[str, ...]]:
    """Batch form of :func:`aggregate_fractions`; returns (matrix, names)."""
    names = _resolve_class_names(library, class_names)
    return aggregate_fractions(coefficients, library, names), names


def _check_pair(reference, estimated) -> tuple[FloatArray, FloatArray]:
    ref = as_float_matrix(reference, "reference")
    est = as_float_matrix(estimated, "estimated")
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: reference {ref.shape} vs "
                         f"estimated {est.shape}")
    return ref, est


def mae(reference, estimated) -> tuple[FloatArray, FloatArray, float]:
    """Mean absolute error: per class, per class over nonzero-reference
    pixels (NaN when a class has none), and overall (all pixel-class pairs).
    """
    ref, est = _check_pair(reference, estimated)
    diff = np.abs(ref - est)
    classwise = diff.mean(axis=0)
    nonzero = np.full(ref.shape[1], np.nan)
    for c in range(ref.shape[1]):
        mask = ref[:, c] > 0.0
        if mask.any():
            nonzero[c] = diff[mask, c].mean()
    return classwise, nonzero, float(diff.mean())


def rmse(reference, estimated, literal_form: bool = False) -> float:
    """Root mean square error over all pixel-class pairs.

    ``literal_form`` switches to the mean of root squared differences,
    which collapses to the overall mean absolute error; it exists for
    comparability with sources using that convention.
    """
    ref, est = _check_pair(reference, estimated)
    diff = ref - est
    if literal_form:
        return float(np.mean(np.sqrt(diff ** 2)))
    return float(np.sqrt(np.mean(diff ** 2)))


def r_squared_and_line(reference, estimated) -> tuple[float, float, float]:
    """Squared Pearson correlation plus the least-squares line of the
    estimate on the reference. Returns (r2, slope, intercept); r2 is NaN
    when either series is constant.
    """
    ref = np.asarray(reference, dtype=np.float64).ravel()
    est = np.asarray(estimated, dtype=np.float64).ravel()
    if ref.size != est.size:
        raise ValueError("reference and estimate must have equal length")
    if ref.size < 2:
        raise ValueError("need at least 2 values")
    ref_const = np.ptp(ref) == 0.0
    est_const = np.ptp(est) == 0.0
    if ref_const:
        return float("nan"), float("nan"), float("nan")
    ref_c = ref - ref.mean()
    est_c = est - est.mean()
    ss_ref = float(ref_c @ ref_c)
    slope = float(ref_c @ est_c) / ss_ref if not est_const else 0.0
    intercept = float(est.mean() - slope * ref.mean())
    if est_const:
        return float("nan"), slope, intercept
    r = float(ref_c @ est_c) / np.sqrt(ss_ref * float(est_c @ est_c))
    return r * r, slope, intercept


def evaluate_fractions(reference, estimated,
                       class_names: Sequence[str] | None = None
                       ) -> EvaluationReport:
    """Full agreement report between reference and estimated fractions."""
    ref, est = _check_pair(reference, estimated)
    names = tuple(class_names) if class_names is not None else \
        default_class_names(ref.shape[1])
    if len(names) != ref.shape[1]:
        raise ValueError(f"{len(names)} class names for {ref.shape[1]} classes")
    classwise, nonzero, overall = mae(ref, est)
    r2 = np.full(ref.shape[1], np.nan)
    lines = np.full((ref.shape[1], 2), np.nan)
    for c in range(ref.shape[1]):
        r2[c], lines[c, 0], lines[c, 1] = r_squared_and_line(ref[:, c],
                                                             est[:, c])
    return EvaluationReport(names, classwise, nonzero, overall,
                            rmse(ref, est), r2, lines, ref.shape[0])


def elbow_scan(library, eval_set, w_range: Sequence[int],
               config: SolverConfig | None = None) -> list[tuple[int, float]]:
    """Stacked reconstruction error of the full solver per sparsity cap.

    The base simplex solution is cap-independent, so it is computed once per
    pixel and only the backward elimination is repeated per cap; the result
    is identical to running the full solver at each W. Output is sorted by W.
    """
    if not w_range:
        raise ValueError("w_range must be nonempty")
    caps = sorted(set(int(w) for w in w_range))
    if caps[0] < 1:
        raise ValueError("every W must be >= 1")
    config = config or SolverConfig()
    matrix = library_matrix(library)
    data = eval_set.pixels if isinstance(eval_set, Dataset) else \
        as_float_matrix(eval_set, "eval_set")
    gram = matrix @ matrix.T
    cap_iter = config.iteration_cap(matrix.shape[0])

    totals = {w: 0.0 for w in caps}
    for x in data:
        lin = matrix @ x
        base, _ = _simplex_nnls_gram(gram, lin, config.tolerance, cap_iter)
        for w in caps:
            cfg_w = SolverConfig(w, config.tolerance, config.max_iterations)
            alpha, _ = _sparsify_gram(gram, lin, base.copy(), cfg_w)
            totals[w] += _residual_norm(matrix, alpha, x) ** 2
    return [(w, float(np.sqrt(totals[w]))) for w in caps]


def find_elbow(scan: Sequence[tuple[int, float]],
               threshold: float = 0.01) -> int:
    """Smallest W whose error improves by less than ``threshold`` (relative)
    at the next scanned W. Falls back to the last W when nothing flattens.
    """
    if len(scan) < 2:
        raise ValueError("need at least two scan points")
    for (w, err), (_, nxt) in zip(scan, scan[1:]):
        if err <= 0.0:
            return w
        if (err - nxt) / err < threshold:
            return w
    return scan[-1][0]


def usage_histogram(results: Sequence[UnmixResult],
                    library: SpectralLibrary) -> UsageHistogram:
    """Count, per atom, the pixels using it and the summed coefficient."""
    counts = np.zeros(len(library), dtype=int)
    sums = np.zeros(len(library))
    for res in results:
        if res.coefficients.shape[0] != len(library):
            raise ValueError("results were not produced with this library")
        counts += res.coefficients > 0.0
        sums += res.coefficients
    return UsageHistogram(library.class_ids, counts, sums, len(results))


def scatter_data(reference, estimated,
                 class_names: Sequence[str]) -> dict[str, FloatArray]:
    """Per-class (reference, estimated) column pairs for external plotting."""
    ref, est = _check_pair(reference, estimated)
    if len(class_names) != ref.shape[1]:
        raise ValueError("class_names length must match the class axis")
    return {name: np.column_stack([ref[:, c], est[:, c]])
            for c, name in enumerate(class_names)}
