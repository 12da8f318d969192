"""File formats and synthetic scene generation.

Formats (all little-endian, all text UTF-8):

- Library: delimited text, optional leading ``# `` comment lines (used for
  provenance), header ``class,source_id,b1..bM``, one element per row,
  values printed with 17 significant digits so round-trips are exact.
- Raster: raw 32-bit float band-sequential payload plus a ``<path>.hdr``
  sidecar of ``key = value`` lines (rows, cols, bands, byte_order, optional
  wavelengths and provenance). Pixels are linearized row-major.
- Fraction map: delimited text, header ``row,col,<classes>``, one pixel per
  row, footer line ``# mean,...`` with per-class means.
- Labels: one class id per line.

Readers reject malformed input with the offending location; they never
repair. The synthetic scene generator is fully determined by its seed
(NumPy default generator, PCG64).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .types import Dataset, FloatArray, SpectralLibrary, default_class_names
from .validation import as_float_matrix

_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class RasterHeader:
    """Geometry and layout of a binary raster payload."""

    rows: int
    cols: int
    bands: int
    byte_order: str = "little"
    wavelengths: tuple[float, ...] | None = None
    provenance: str | None = None

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1 or self.bands < 1:
            raise ValueError("rows, cols, and bands must be positive")
        if self.byte_order != "little":
            raise ValueError(f"unsupported byte order {self.byte_order!r}")
        if self.wavelengths is not None and len(self.wavelengths) != self.bands:
            raise ValueError("wavelengths must have one entry per band")

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols

    @property
    def payload_bytes(self) -> int:
        return self.rows * self.cols * self.bands * 4


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic scene: smooth endmembers, sparse mixtures, optional noise."""

    n_endmembers: int = 20
    n_classes: int = 4
    n_bands: int = 111
    n_pixels: int = 500
    sparsity: int = 3
    noise_sigma: float = 0.0
    dirichlet_alpha: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_endmembers < 1 or self.n_bands < 1 or self.n_pixels < 1:
            raise ValueError("n_endmembers, n_bands, n_pixels must be positive")
        if not 1 <= self.sparsity <= self.n_endmembers:
            raise ValueError("sparsity must lie in [1, n_endmembers]")
        if not 1 <= self.n_classes <= self.n_endmembers:
            raise ValueError("n_classes must lie in [1, n_endmembers]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.dirichlet_alpha <= 0:
            raise ValueError("dirichlet_alpha must be positive")


def _provenance_lines(provenance: str | None) -> list[str]:
    if provenance is None:
        return []
    return [f"# provenance: {line}" for line in provenance.splitlines()]


def write_library(path, library: SpectralLibrary,
                  provenance: str | None = None) -> None:
    """Write a library as delimited text; see the module docstring."""
    path = Path(path)
    bands = library.band_count
    lines = _provenance_lines(provenance)
    lines.append("class,source_id," + ",".join(f"b{i + 1}" for i in range(bands)))
    for spec in library:
        values = ",".join(_FLOAT_FMT % v for v in spec.values)
        lines.append(f"{spec.class_id},{spec.source_id},{values}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_library(path) -> SpectralLibrary:
    """Parse a library file, rejecting malformed rows with their line number."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    body = [(i + 1, line) for i, line in enumerate(lines)
            if line.strip() and not line.startswith("#")]
    if not body:
        raise ValueError(f"{path}: no header row found")
    header_no, header = body[0]
    cols = header.split(",")
    if cols[:2] != ["class", "source_id"] or len(cols) < 3:
        raise ValueError(f"{path}:{header_no}: expected header "
                         "'class,source_id,b1..bM'")
    bands = len(cols) - 2
    spectra, class_ids, source_ids = [], [], []
    for line_no, line in body[1:]:
        parts = line.split(",")
        if len(parts) != bands + 2:
            raise ValueError(f"{path}:{line_no}: expected {bands + 2} fields, "
                             f"got {len(parts)}")
        try:
            values = [float(p) for p in parts[2:]]
        except ValueError as exc:
            raise ValueError(f"{path}:{line_no}: non-numeric band value") from exc
        class_ids.append(parts[0])
        source_ids.append(parts[1])
        spectra.append(values)
    if not spectra:
        raise ValueError(f"{path}: library has no elements")
    return SpectralLibrary(np.asarray(spectra, dtype=np.float64),
                           tuple(class_ids), tuple(source_ids))


def read_library_provenance(path) -> list[str]:
    """The provenance comment lines of a library file, without markers."""
    prefix = "# provenance: "
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith(prefix):
            out.append(line[len(prefix):])
        elif not line.startswith("#"):
            break
    return out


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + ".hdr")


def write_raster(path, pixels, rows: int, cols: int,
                 wavelengths: Sequence[float] | None = None,
                 provenance: str | None = None) -> None:
    """Write pixels (n_pixels, bands) as float32 band-sequential binary."""
    path = Path(path)
    matrix = pixels.pixels if isinstance(pixels, Dataset) else \
        as_float_matrix(pixels, "pixels")
    if matrix.shape[0] != rows * cols:
        raise ValueError(f"geometry mismatch: {matrix.shape[0]} pixels for "
                         f"{rows}x{cols} raster")
    header = RasterHeader(rows, cols, matrix.shape[1],
                          wavelengths=tuple(wavelengths) if wavelengths else None,
                          provenance=provenance)
    # band-sequential: all values of band 0, then band 1, ...
    payload = np.ascontiguousarray(matrix.T, dtype="<f4").tobytes()
    path.write_bytes(payload)
    lines = [f"rows = {header.rows}", f"cols = {header.cols}",
             f"bands = {header.bands}", f"byte_order = {header.byte_order}"]
    if header.wavelengths is not None:
        lines.append("wavelengths = " +
                     ",".join(_FLOAT_FMT % w for w in header.wavelengths))
    if header.provenance is not None:
        lines.append(f"provenance = {header.provenance}")
    _header_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_raster_header(path) -> RasterHeader:
    path = Path(path)
    hdr_path = _header_path(path)
    if not hdr_path.exists():
        raise ValueError(f"{path}: missing header sidecar {hdr_path.name}")
    fields: dict[str, str] = {}
    for line_no, line in enumerate(hdr_path.read_text(encoding="utf-8")
                                   .splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ValueError(f"{hdr_path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    for key in ("rows", "cols", "bands"):
        if key not in fields:
            raise ValueError(f"{hdr_path}: missing required field {key!r}")
    wavelengths = None
    if "wavelengths" in fields:
        wavelengths = tuple(float(v) for v in fields["wavelengths"].split(","))
    return RasterHeader(int(fields["rows"]), int(fields["cols"]),
                        int(fields["bands"]),
                        fields.get("byte_order", "little"), wavelengths,
                        fields.get("provenance"))


def read_raster(path) -> tuple[Dataset, RasterHeader]:
    """Read a raster payload + sidecar into a Dataset (row-major pixels)."""
    path = Path(path)
    header = read_raster_header(path)
    raw = path.read_bytes()
    if len(raw) != header.payload_bytes:
        raise ValueError(f"{path}: payload length mismatch: expected "
                         f"{header.payload_bytes} bytes, got {len(raw)}")
    bands = np.frombuffer(raw, dtype="<f4").reshape(header.bands,
                                                    header.n_pixels)
    return Dataset(bands.T.astype(np.float64)), header


def write_fraction_map(path, fractions, class_names: Sequence[str],
                       rows: int, cols: int,
                       provenance: str | None = None) -> None:
    """Write per-pixel class fractions with a per-class mean footer."""
    path = Path(path)
    matrix = as_float_matrix(fractions, "fractions")
    if matrix.shape[0] != rows * cols:
        raise ValueError(f"geometry mismatch: {matrix.shape[0]} fraction rows "
                         f"for {rows}x{cols} raster")
    if matrix.shape[1] != len(class_names):
        raise ValueError(f"{matrix.shape[1]} fraction columns for "
                         f"{len(class_names)} classes")
    lines = _provenance_lines(provenance)
    lines.append("row,col," + ",".join(class_names))
    for i in range(matrix.shape[0]):
        r, c = divmod(i, cols)
        values = ",".join(_FLOAT_FMT % v for v in matrix[i])
        lines.append(f"{r},{c},{values}")
    means = ",".join(_FLOAT_FMT % v for v in matrix.mean(axis=0))
    lines.append(f"# mean,{means}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_fraction_map(path) -> tuple[FloatArray, tuple[str, ...], tuple[int, int]]:
    """Read a fraction map; returns (fractions, class_names, (rows, cols))."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    header = None
    header_no = 0
    rows_seen: list[tuple[int, int, list[float]]] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if header is None:
            cols = line.split(",")
            if cols[:2] != ["row", "col"] or len(cols) < 3:
                raise ValueError(f"{path}:{line_no}: expected header "
                                 "'row,col,<classes>'")
            header = tuple(cols[2:])
            header_no = line_no
            continue
        parts = line.split(",")
        if len(parts) != len(header) + 2:
            raise ValueError(f"{path}:{line_no}: expected {len(header) + 2} "
                             f"fields, got {len(parts)}")
        try:
            rows_seen.append((int(parts[0]), int(parts[1]),
                              [float(v) for v in parts[2:]]))
        except ValueError as exc:
            raise ValueError(f"{path}:{line_no}: malformed row") from exc
    if header is None:
        raise ValueError(f"{path}: no header row found")
    if not rows_seen:
        raise ValueError(f"{path}:{header_no}: no data rows")
    n_rows = max(r for r, _, _ in rows_seen) + 1
    n_cols = max(c for _, c, _ in rows_seen) + 1
    if len(rows_seen) != n_rows * n_cols:
        raise ValueError(f"{path}: expected {n_rows * n_cols} pixels for "
                         f"{n_rows}x{n_cols} geometry, got {len(rows_seen)}")
    out = np.zeros((n_rows * n_cols, len(header)))
    for r, c, values in rows_seen:
        out[r * n_cols + c] = values
    return out, header, (n_rows, n_cols)


def write_labels(path, labels: Sequence[str]) -> None:
    Path(path).write_text("\n".join(str(l) for l in labels) + "\n",
                          encoding="utf-8")


def read_labels(path) -> tuple[str, ...]:
    text = Path(path).read_text(encoding="utf-8")
    labels = tuple(line for line in text.splitlines() if line.strip())
    if not labels:
        raise ValueError(f"{path}: no labels found")
    return labels


def _smooth_spectrum(rng: np.random.Generator, n_bands: int) -> FloatArray:
    grid = np.arange(n_bands, dtype=np.float64)
    n_bumps = int(rng.integers(2, 6))
    values = np.zeros(n_bands)
    for _ in range(n_bumps):
        center = rng.uniform(0.0, n_bands - 1.0)
        width = rng.uniform(n_bands / 20.0, n_bands / 5.0)
        amplitude = rng.uniform(0.2, 1.0)
        values += amplitude * np.exp(-((grid - center) ** 2) / (2.0 * width ** 2))
    return values / values.max()


def synth_scene(config: SynthConfig) -> tuple[SpectralLibrary, Dataset]:
    """Generate endmembers and a mixed scene with reference fractions.

    Endmembers are sums of random Gaussian bumps scaled into [0, 1] and
    labeled round-robin over the classes. Each pixel mixes ``sparsity``
    distinct endmembers with Dirichlet weights; optional Gaussian noise is
    clamped at zero. Each pixel's label is its dominant class.
    """
    rng = np.random.default_rng(config.seed)
    class_names = default_class_names(config.n_classes)

    spectra = np.vstack([_smooth_spectrum(rng, config.n_bands)
                         for _ in range(config.n_endmembers)])
    labels = [class_names[i % config.n_classes]
              for i in range(config.n_endmembers)]
    library = SpectralLibrary.from_arrays(
        spectra, labels, [f"synthetic_{i}" for i in range(config.n_endmembers)])

    class_index = {name: i for i, name in enumerate(class_names)}
    pixels = np.zeros((config.n_pixels, config.n_bands))
    fractions = np.zeros((config.n_pixels, config.n_classes))
    for t in range(config.n_pixels):
        chosen = rng.choice(config.n_endmembers, config.sparsity, replace=False)
        weights = rng.dirichlet(np.full(config.sparsity,
                                        config.dirichlet_alpha))
        pixels[t] = weights @ spectra[chosen]
        if config.noise_sigma > 0:
            pixels[t] = np.maximum(
                pixels[t] + rng.normal(0.0, config.noise_sigma,
                                       config.n_bands), 0.0)
        for w, d in zip(weights, chosen):
            fractions[t, class_index[labels[d]]] += w

    pixel_labels = tuple(class_names[int(np.argmax(row))] for row in fractions)
    dataset = Dataset(pixels, labels=pixel_labels,
                      reference_fractions=fractions,
                      fraction_classes=class_names)
    return library, dataset


def library_provenance_json(config: dict) -> str:
    """Canonical single-line JSON used in provenance blocks (sorted keys)."""
    return json.dumps(config, sort_keys=True, separators=(",", ":"))
