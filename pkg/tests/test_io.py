"""File format round-trips and synthetic scene properties."""

import struct

import numpy as np
import pytest

from specmix.io import (RasterHeader, SynthConfig, read_fraction_map,
                        read_labels, read_library, read_library_provenance,
                        read_raster, synth_scene, write_fraction_map,
                        write_labels, write_library, write_raster)
from specmix.metrics import mae
from specmix.solver import SolverConfig, unmix_batch
from specmix.types import SpectralLibrary
from specmix.validation import validate_dataset
from specmix.metrics import aggregate_fraction_matrix


class TestLibraryFormat:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        lib = SpectralLibrary.from_arrays(
            rng.random((75, 111)),
            [f"class_{i % 4}" for i in range(75)])
        path = tmp_path / "lib.csv"
        write_library(path, lib)
        back = read_library(path)
        np.testing.assert_array_equal(back.spectra, lib.spectra)
        assert back.class_ids == lib.class_ids
        assert back.source_ids == lib.source_ids

    def test_provenance_block_roundtrip(self, tmp_path):
        lib = SpectralLibrary.from_arrays(np.ones((2, 3)), ["a", "b"])
        path = tmp_path / "lib.csv"
        write_library(path, lib, provenance='{"seed":7}')
        assert read_library_provenance(path) == ['{"seed":7}']
        assert len(read_library(path)) == 2

    def test_missing_band_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("class,source_id,b1,b2\nveg,e0,0.5\n")
        with pytest.raises(ValueError, match=":2"):
            read_library(path)

    def test_non_numeric_value(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("class,source_id,b1\nveg,e0,zap\n")
        with pytest.raises(ValueError, match="non-numeric"):
            read_library(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar,b1\nveg,e0,1.0\n")
        with pytest.raises(ValueError, match="header"):
            read_library(path)

    def test_class_histogram_composition(self, tmp_path):
        # 4 classes with sizes 39/31/4/1 survive a round-trip intact
        sizes = {"impervious": 39, "vegetation": 31, "soil": 4, "water": 1}
        labels = [name for name, count in sizes.items() for _ in range(count)]
        lib = SpectralLibrary.from_arrays(
            np.random.default_rng(2).random((75, 10)), labels)
        path = tmp_path / "lib75.csv"
        write_library(path, lib)
        assert read_library(path).class_histogram() == sizes


class TestRasterFormat:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        pixels = rng.random((4, 3))
        path = tmp_path / "scene.raw"
        write_raster(path, pixels, rows=2, cols=2)
        ds, header = read_raster(path)
        assert header.rows == 2 and header.cols == 2 and header.bands == 3
        np.testing.assert_array_equal(ds.pixels,
                                      pixels.astype(np.float32).astype(np.float64))
        # writing the read-back values reproduces the file byte for byte
        second = tmp_path / "again.raw"
        write_raster(second, ds.pixels, rows=2, cols=2)
        assert second.read_bytes() == path.read_bytes()

    def test_band_sequential_layout(self, tmp_path):
        pixels = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0],
                           [4.0, 40.0]])
        path = tmp_path / "scene.raw"
        write_raster(path, pixels, rows=2, cols=2)
        flat = np.frombuffer(path.read_bytes(), dtype="<f4")
        np.testing.assert_array_equal(flat[:4], [1, 2, 3, 4])
        np.testing.assert_array_equal(flat[4:], [10, 20, 30, 40])

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "scene.raw"
        write_raster(path, np.ones((4, 3)), rows=2, cols=2)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError, match="expected 48 bytes, got 44"):
            read_raster(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "scene.raw"
        path.write_bytes(b"\0" * 48)
        with pytest.raises(ValueError, match="header"):
            read_raster(path)

    def test_independent_writer(self, tmp_path):
        # byte stream assembled by hand, band-sequential
        values = [[1.5, 2.5], [3.5, 4.5]]  # 2 pixels x 2 bands
        payload = b"".join(struct.pack("<f", v)
                           for band in range(2) for v in
                           (values[0][band], values[1][band]))
        path = tmp_path / "scene.raw"
        path.write_bytes(payload)
        (tmp_path / "scene.raw.hdr").write_text(
            "rows = 1\ncols = 2\nbands = 2\nbyte_order = little\n")
        ds, header = read_raster(path)
        np.testing.assert_allclose(ds.pixels, values)

    def test_wavelengths_roundtrip(self, tmp_path):
        path = tmp_path / "scene.raw"
        write_raster(path, np.ones((1, 3)), rows=1, cols=1,
                     wavelengths=[0.45, 0.55, 0.65])
        _, header = read_raster(path)
        assert header.wavelengths == (0.45, 0.55, 0.65)

    def test_geometry_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="geometry"):
            write_raster(tmp_path / "x.raw", np.ones((3, 2)), rows=2, cols=2)

    def test_header_validation(self):
        with pytest.raises(ValueError):
            RasterHeader(0, 1, 1)
        with pytest.raises(ValueError):
            RasterHeader(1, 1, 2, wavelengths=(0.5,))


class TestFractionMapFormat:
    def test_single_pixel(self, tmp_path):
        path = tmp_path / "frac.csv"
        write_fraction_map(path, np.array([[0.25, 0.25, 0.25, 0.25]]),
                           ("a", "b", "c", "d"), rows=1, cols=1)
        text = path.read_text()
        assert "0,0,0.25,0.25,0.25,0.25" in text
        assert text.strip().endswith("# mean,0.25,0.25,0.25,0.25")

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        fr = rng.dirichlet(np.ones(4), size=12)
        path = tmp_path / "frac.csv"
        write_fraction_map(path, fr, ("w", "x", "y", "z"), rows=3, cols=4)
        back, names, geom = read_fraction_map(path)
        assert names == ("w", "x", "y", "z")
        assert geom == (3, 4)
        np.testing.assert_array_equal(back, fr)

    def test_footer_means_match_columns(self, tmp_path):
        rng = np.random.default_rng(5)
        fr = rng.dirichlet(np.ones(3), size=6)
        path = tmp_path / "frac.csv"
        write_fraction_map(path, fr, ("a", "b", "c"), rows=2, cols=3)
        footer = [l for l in path.read_text().splitlines()
                  if l.startswith("# mean")][0]
        means = [float(v) for v in footer.split(",")[1:]]
        np.testing.assert_allclose(means, fr.mean(axis=0), atol=1e-16)

    def test_geometry_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="geometry"):
            write_fraction_map(tmp_path / "f.csv", np.ones((3, 2)) / 2,
                               ("a", "b"), rows=2, cols=2)

    def test_malformed_row_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("row,col,a,b\n0,0,0.5,0.5\n0,1,oops,0.5\n")
        with pytest.raises(ValueError, match=":3"):
            read_fraction_map(path)


class TestLabelsFormat:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "labels.txt"
        write_labels(path, ["veg", "soil", "veg"])
        assert read_labels(path) == ("veg", "soil", "veg")

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("\n\n")
        with pytest.raises(ValueError, match="no labels"):
            read_labels(path)


class TestSynthScene:
    def test_deterministic(self):
        cfg = SynthConfig(n_endmembers=8, n_bands=20, n_pixels=30, seed=42)
        lib_a, ds_a = synth_scene(cfg)
        lib_b, ds_b = synth_scene(cfg)
        np.testing.assert_array_equal(lib_a.spectra, lib_b.spectra)
        np.testing.assert_array_equal(ds_a.pixels, ds_b.pixels)
        np.testing.assert_array_equal(ds_a.reference_fractions,
                                      ds_b.reference_fractions)

    def test_pure_pixels_when_sparsity_one(self):
        cfg = SynthConfig(n_endmembers=6, n_bands=15, n_pixels=20,
                          sparsity=1, noise_sigma=0.0, seed=1)
        lib, ds = synth_scene(cfg)
        for t in range(20):
            dists = np.linalg.norm(lib.spectra - ds.pixels[t], axis=1)
            assert dists.min() < 1e-12
            row = ds.reference_fractions[t]
            assert sorted(row)[-1] == pytest.approx(1.0)
            assert np.count_nonzero(row) == 1

    def test_fractions_sum_to_one(self):
        _, ds = synth_scene(SynthConfig(n_pixels=50, seed=2))
        np.testing.assert_allclose(ds.reference_fractions.sum(axis=1),
                                   np.ones(50), atol=1e-12)

    def test_round_robin_labels(self):
        lib, _ = synth_scene(SynthConfig(n_endmembers=10, n_classes=4, seed=3))
        assert lib.class_ids[:5] == ("impervious", "vegetation", "soil",
                                     "water", "impervious")

    def test_passes_validator(self):
        _, ds = synth_scene(SynthConfig(n_pixels=40, noise_sigma=0.01, seed=4))
        assert validate_dataset(ds) == []

    def test_spectra_in_unit_interval(self):
        lib, ds = synth_scene(SynthConfig(seed=5, n_pixels=30,
                                          noise_sigma=0.02))
        assert lib.spectra.min() >= 0.0
        assert lib.spectra.max() <= 1.0
        assert ds.pixels.min() >= 0.0

    def test_noiseless_scene_recovers_exactly(self):
        cfg = SynthConfig(n_endmembers=10, n_bands=40, n_pixels=40,
                          sparsity=3, noise_sigma=0.0, seed=6)
        lib, ds = synth_scene(cfg)
        results = unmix_batch(lib, ds, SolverConfig(sparsity=3))
        coeff = np.vstack([r.coefficients for r in results])
        est, names = aggregate_fraction_matrix(coeff, lib)
        assert names == ds.fraction_classes
        _, _, overall = mae(ds.reference_fractions, est)
        assert overall < 1e-6

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(sparsity=30, n_endmembers=20)
        with pytest.raises(ValueError):
            SynthConfig(n_classes=30, n_endmembers=20)
        with pytest.raises(ValueError):
            SynthConfig(noise_sigma=-0.1)
