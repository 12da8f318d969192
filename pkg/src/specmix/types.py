"""Core immutable data containers shared by all pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]

#: Land cover classes used when nothing else is configured.
DEFAULT_CLASS_NAMES = ("impervious", "vegetation", "soil", "water")


def default_class_names(n_classes: int) -> tuple[str, ...]:
    """Class name tuple of the requested size, extending the default set."""
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    if n_classes <= len(DEFAULT_CLASS_NAMES):
        return DEFAULT_CLASS_NAMES[:n_classes]
    extra = tuple(f"class_{i}" for i in range(len(DEFAULT_CLASS_NAMES), n_classes))
    return DEFAULT_CLASS_NAMES + extra


def _as_readonly_float64(values, name: str, ndim: int) -> FloatArray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got {arr.ndim}-D")
    arr.setflags(write=False)
    return arr


class LabeledSpectrum(NamedTuple):
    """One library element: a reflectance vector with class and provenance."""

    values: FloatArray
    class_id: str
    source_id: str


@dataclass(frozen=True)
class SpectralLibrary:
    """Ordered, labeled collection of elementary spectra (the dictionary).

    Element order is load-bearing: coefficient vectors index into it.
    All spectra share the band count and must be finite.
    """

    spectra: FloatArray
    class_ids: tuple[str, ...]
    source_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        spectra = _as_readonly_float64(self.spectra, "spectra", ndim=2)
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "class_ids", tuple(str(c) for c in self.class_ids))
        object.__setattr__(self, "source_ids", tuple(str(s) for s in self.source_ids))
        n, m = spectra.shape
        if n < 1:
            raise ValueError("library must contain at least one spectrum")
        if m < 1:
            raise ValueError("spectra must have at least one band")
        if len(self.class_ids) != n:
            raise ValueError(f"expected {n} class ids, got {len(self.class_ids)}")
        if len(self.source_ids) != n:
            raise ValueError(f"expected {n} source ids, got {len(self.source_ids)}")
        bad = np.argwhere(~np.isfinite(spectra))
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"non-finite value in library element {i}, band {j}")

    @classmethod
    def from_arrays(cls, spectra, class_ids: Sequence[str],
                    source_ids: Sequence[str] | None = None) -> "SpectralLibrary":
        class_ids = tuple(class_ids)
        if source_ids is None:
            source_ids = tuple(f"element_{i}" for i in range(len(class_ids)))
        return cls(np.asarray(spectra), class_ids, tuple(source_ids))

    @property
    def band_count(self) -> int:
        return self.spectra.shape[1]

    def __len__(self) -> int:
        return self.spectra.shape[0]

    def __getitem__(self, index: int) -> LabeledSpectrum:
        return LabeledSpectrum(self.spectra[index], self.class_ids[index],
                               self.source_ids[index])

    def __iter__(self) -> Iterator[LabeledSpectrum]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices: Sequence[int]) -> "SpectralLibrary":
        """New library holding the given elements, in the given order."""
        idx = np.asarray(indices, dtype=int)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("indices must be a nonempty 1-D sequence")
        if idx.min(initial=0) < 0 or idx.max(initial=0) >= len(self):
            raise IndexError("subset index out of range")
        return SpectralLibrary(
            self.spectra[idx],
            tuple(self.class_ids[i] for i in idx),
            tuple(self.source_ids[i] for i in idx),
        )

    def class_histogram(self) -> dict[str, int]:
        """Element count per class id, in first-appearance order."""
        counts: dict[str, int] = {}
        for c in self.class_ids:
            counts[c] = counts.get(c, 0) + 1
        return counts


@dataclass(frozen=True)
class Dataset:
    """Pixel collection with optional per-pixel labels and reference fractions.

    Construction only checks shapes; value-level problems (non-finite bands,
    fraction sums off) are surfaced by ``validation.validate_dataset`` so that
    broken inputs can be loaded and reported instead of rejected blindly.
    """

    pixels: FloatArray
    labels: tuple[str, ...] | None = None
    reference_fractions: FloatArray | None = None
    fraction_classes: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        pixels = _as_readonly_float64(self.pixels, "pixels", ndim=2)
        object.__setattr__(self, "pixels", pixels)
        n = pixels.shape[0]
        if self.labels is not None:
            labels = tuple(str(c) for c in self.labels)
            if len(labels) != n:
                raise ValueError(f"expected {n} labels, got {len(labels)}")
            object.__setattr__(self, "labels", labels)
        if self.reference_fractions is not None:
            frac = _as_readonly_float64(self.reference_fractions,
                                        "reference_fractions", ndim=2)
            if frac.shape[0] != n:
                raise ValueError(
                    f"reference_fractions has {frac.shape[0]} rows for {n} pixels")
            object.__setattr__(self, "reference_fractions", frac)
            classes = self.fraction_classes
            if classes is None:
                classes = default_class_names(frac.shape[1])
            classes = tuple(str(c) for c in classes)
            if len(classes) != frac.shape[1]:
                raise ValueError(
                    f"expected {frac.shape[1]} fraction classes, got {len(classes)}")
            object.__setattr__(self, "fraction_classes", classes)
        elif self.fraction_classes is not None:
            object.__setattr__(self, "fraction_classes",
                               tuple(str(c) for c in self.fraction_classes))

    @property
    def n_pixels(self) -> int:
        return self.pixels.shape[0]

    @property
    def band_count(self) -> int:
        return self.pixels.shape[1]

    def take(self, indices) -> "Dataset":
        """Row subset with labels and reference fractions kept aligned."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.pixels[idx],
            None if self.labels is None else tuple(self.labels[i] for i in idx),
            None if self.reference_fractions is None else self.reference_fractions[idx],
            self.fraction_classes,
        )
