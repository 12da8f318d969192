"""Sparse-representation sub-pixel quantification of spectral imagery.

The pipeline: generate or load a spectral library and a raster, optionally
filter outliers (:mod:`specmix.preprocess`), select archetypes
(:mod:`specmix.archetypes`), optimize the library subset
(:mod:`specmix.mcmc`), unmix every pixel under a simplex constraint with a
sparsity cap (:mod:`specmix.solver`), and evaluate the estimated class
fractions (:mod:`specmix.metrics`). File formats and the synthetic scene
generator live in :mod:`specmix.io`; the command line front end in
:mod:`specmix.cli`.
"""

from .archetypes import (ArchetypeSet, SivmArchetypes, SivmConfig,
                         accumulate_runs, distance, label_archetypes,
                         sigma_heuristic, sivm_select)
from .io import (RasterHeader, SynthConfig, read_fraction_map, read_labels,
                 read_library, read_raster, synth_scene, write_fraction_map,
                 write_labels, write_library, write_raster)
from .mcmc import (McmcConfig, McmcState, McmcTrace, Proposal,
                   acceptance_probability, energy, propose, run_rjmcmc)
from .metrics import (EvaluationReport, UsageHistogram, aggregate_fractions,
                      aggregate_fraction_matrix, elbow_scan,
                      evaluate_fractions, find_elbow, mae, r_squared_and_line,
                      rmse, scatter_data, usage_histogram)
from .preprocess import (LofConfig, LofOutlierFilter, lof_filter, lof_scores,
                         score_threshold)
from .solver import (SimplexUnmixer, SolverConfig, UnmixResult,
                     coefficient_matrix, solve_simplex_nnls, sparsify_backward,
                     stacked_residual_norm, unmix_batch, unmix_pixel)
from .types import (DEFAULT_CLASS_NAMES, Dataset, LabeledSpectrum,
                    SpectralLibrary, default_class_names)
from .validation import validate_dataset

__all__ = [
    "ArchetypeSet",
    "DEFAULT_CLASS_NAMES",
    "Dataset",
    "EvaluationReport",
    "LabeledSpectrum",
    "LofConfig",
    "LofOutlierFilter",
    "McmcConfig",
    "McmcState",
    "McmcTrace",
    "Proposal",
    "RasterHeader",
    "SimplexUnmixer",
    "SivmArchetypes",
    "SivmConfig",
    "SolverConfig",
    "SpectralLibrary",
    "SynthConfig",
    "UnmixResult",
    "UsageHistogram",
    "acceptance_probability",
    "accumulate_runs",
    "aggregate_fraction_matrix",
    "aggregate_fractions",
    "coefficient_matrix",
    "default_class_names",
    "distance",
    "elbow_scan",
    "energy",
    "evaluate_fractions",
    "find_elbow",
    "label_archetypes",
    "lof_filter",
    "lof_scores",
    "mae",
    "propose",
    "r_squared_and_line",
    "read_fraction_map",
    "read_labels",
    "read_library",
    "read_raster",
    "rmse",
    "run_rjmcmc",
    "scatter_data",
    "score_threshold",
    "sigma_heuristic",
    "sivm_select",
    "solve_simplex_nnls",
    "sparsify_backward",
    "stacked_residual_norm",
    "synth_scene",
    "unmix_batch",
    "unmix_pixel",
    "usage_histogram",
    "validate_dataset",
    "write_fraction_map",
    "write_labels",
    "write_library",
    "write_raster",
]

__version__ = "0.1.0"
