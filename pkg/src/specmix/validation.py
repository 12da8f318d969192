"""Input validation helpers shared by estimators and pipeline functions."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .types import Dataset, FloatArray, SpectralLibrary


def as_float_matrix(values, name: str = "X") -> FloatArray:
    """Coerce to a 2-D float64 array, raising a readable error otherwise."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        raise ValueError(f"{name} must be 2-D (n_samples, n_bands); "
                         "reshape single samples to (1, -1)")
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got {arr.ndim}-D")
    return arr


def as_float_vector(values, name: str = "x") -> FloatArray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got {arr.ndim}-D")
    return arr


def check_finite(arr: np.ndarray, name: str) -> None:
    """Reject NaN/Inf, naming the first offending position."""
    if np.isfinite(arr).all():
        return
    bad = np.argwhere(~np.isfinite(arr))[0]
    where = ", ".join(str(int(i)) for i in bad)
    raise ValueError(f"non-finite value in {name} at position ({where})")


def check_band_counts(library: SpectralLibrary | np.ndarray, data, name: str = "pixels") -> None:
    lib_bands = library.band_count if isinstance(library, SpectralLibrary) \
        else np.asarray(library).shape[1]
    data_bands = data.band_count if isinstance(data, Dataset) else np.asarray(data).shape[-1]
    if lib_bands != data_bands:
        raise ValueError(
            f"band count mismatch: library has {lib_bands} bands, {name} has {data_bands}")


def library_matrix(library: SpectralLibrary | np.ndarray) -> FloatArray:
    """Library spectra as an (n_elements, n_bands) float64 matrix."""
    if isinstance(library, SpectralLibrary):
        return library.spectra
    arr = as_float_matrix(library, "library")
    check_finite(arr, "library")
    if arr.shape[0] < 1:
        raise ValueError("library must contain at least one spectrum")
    return arr


def check_coefficients(alpha: np.ndarray, sparsity: int | None = None,
                       tol: float = 1e-9) -> None:
    """Assert the simplex and sparsity constraints on a coefficient vector."""
    alpha = np.asarray(alpha)
    if alpha.min(initial=0.0) < -tol:
        raise ValueError(f"negative coefficient {alpha.min()}")
    total = float(alpha.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"coefficients sum to {total}, expected 1 within {tol}")
    if sparsity is not None:
        support = int(np.count_nonzero(alpha > 0.0))
        if support > sparsity:
            raise ValueError(f"support size {support} exceeds sparsity bound {sparsity}")


def check_fractions(fractions: np.ndarray, tol: float = 1e-9) -> None:
    """Assert that class fractions form probability vectors (rows if 2-D)."""
    fractions = np.asarray(fractions)
    if fractions.min(initial=0.0) < -tol:
        raise ValueError(f"negative fraction {fractions.min()}")
    if fractions.max(initial=0.0) > 1.0 + tol:
        raise ValueError(f"fraction {fractions.max()} exceeds 1")
    sums = fractions.sum(axis=-1) if fractions.ndim > 1 else fractions.sum()
    err = np.max(np.abs(np.atleast_1d(sums) - 1.0), initial=0.0)
    if err > tol:
        raise ValueError(f"fractions must sum to 1 per vector; worst error {err}")


def validate_dataset(dataset: Dataset, fraction_sum_tol: float = 1e-6) -> list[str]:
    """Collect invariant violations of a dataset without raising.

    Returns an empty list iff the dataset is valid. Each entry names the
    offending pixel (and band) so problems can be fixed at the source.
    """
    report: list[str] = []
    pixels = dataset.pixels
    bad = np.argwhere(~np.isfinite(pixels))
    for i, j in bad:
        report.append(f"pixel {int(i)}: non-finite value in band {int(j)}")
    frac = dataset.reference_fractions
    if frac is not None:
        bad = np.argwhere(~np.isfinite(frac))
        for i, j in bad:
            report.append(f"pixel {int(i)}: non-finite reference fraction "
                          f"for class index {int(j)}")
        finite_rows = np.isfinite(frac).all(axis=1)
        sums = frac.sum(axis=1, where=np.isfinite(frac))
        off = np.flatnonzero(finite_rows & (np.abs(sums - 1.0) > fraction_sum_tol))
        for i in off:
            report.append(f"pixel {int(i)}: reference fractions sum to {sums[i]:.9g}, "
                          f"expected 1 within {fraction_sum_tol:g}")
        neg = np.argwhere(np.isfinite(frac) & (frac < 0))
        for i, j in neg:
            report.append(f"pixel {int(i)}: negative reference fraction "
                          f"for class index {int(j)}")
    return report


def check_class_ids(class_ids: Sequence[str], class_names: Sequence[str]) -> None:
    """Every label must belong to the configured class set."""
    known = set(class_names)
    for i, c in enumerate(class_ids):
        if c not in known:
            raise ValueError(f"element {i} has unknown class {c!r}; "
                             f"configured classes: {sorted(known)}")
