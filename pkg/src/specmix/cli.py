"""Command line pipeline: synthesize, extract, optimize, unmix, evaluate.

Subcommands
-----------
synth      generate a synthetic scene (library, raster, reference fractions)
extract    archetype selection from a raster (outlier filter + greedy pick)
optimize   annealed subset search over a library pool
unmix      per-pixel class fractions for a raster against a library
evaluate   agreement report between estimated and reference fraction maps

A JSON config file may supply defaults for any flag; explicit command line
flags override it. Full schema (every key optional):

    {
      "seed": 0,              base seed; repeat r of a stage uses seed + r
      "run_repeats": 10,      repeats for stages with a random component
      "synth":      {"n_endmembers": 20, "n_classes": 4, "n_bands": 111,
                     "n_pixels": 500, "sparsity": 3, "noise_sigma": 0.0,
                     "dirichlet_alpha": 1.0, "rows": 1},
      "preprocess": {"neighbors_k": 10, "quantile": 0.95},
      "archetypes": {"n_archetypes": 40, "mode": "linear-mean",
                     "sigma": "heuristic", "runs": null},
      "mcmc":       {"prior_lambda": 75.0, "max_elements": 150,
                     "iterations": 10000, "initial_temperature": "auto",
                     "cooling_factor": 0.995, "sparsity": 7,
                     "tolerance": 1e-10, "require_class_coverage": false},
      "solver":     {"sparsity": 7, "tolerance": 1e-10}
    }

Every output embeds the resolved settings in its provenance block, so any
artifact records how to regenerate it. Outputs are deterministic: the same
command with the same seed writes byte-identical files. Exit code is 0 on
success and nonzero with a diagnostic on standard error otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .archetypes import SivmConfig, accumulate_runs, sivm_select
from .io import (SynthConfig, library_provenance_json, read_fraction_map,
                 read_labels, read_library, read_raster, synth_scene,
                 write_fraction_map, write_labels, write_library, write_raster)
from .mcmc import McmcConfig, run_rjmcmc
from .metrics import (aggregate_fraction_matrix, evaluate_fractions, mae,
                      usage_histogram)
from .preprocess import LofConfig, lof_filter
from .solver import SolverConfig, coefficient_matrix, unmix_batch
from .types import Dataset

_SECTIONS = {
    "synth": {"n_endmembers", "n_classes", "n_bands", "n_pixels", "sparsity",
              "noise_sigma", "dirichlet_alpha", "rows"},
    "preprocess": {"neighbors_k", "quantile"},
    "archetypes": {"n_archetypes", "mode", "sigma", "runs"},
    "mcmc": {"prior_lambda", "max_elements", "iterations",
             "initial_temperature", "cooling_factor", "sparsity", "tolerance",
             "require_class_coverage"},
    "solver": {"sparsity", "tolerance"},
}

_MODES = ("linear-mean", "kernel-mean", "kernel-random", "kernel-accumulate")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    for key, value in config.items():
        if key in ("seed", "run_repeats"):
            continue
        if key not in _SECTIONS:
            raise ValueError(f"{path}: unknown config section {key!r}")
        if not isinstance(value, dict):
            raise ValueError(f"{path}: section {key!r} must be an object")
        unknown = set(value) - _SECTIONS[key]
        if unknown:
            raise ValueError(f"{path}: unknown key {sorted(unknown)[0]!r} "
                             f"in section {key!r}")
    return config


def _pick(flag_value, config: dict, section: str, key: str, default):
    """Resolution order: explicit flag, config file entry, built-in default."""
    if flag_value is not None:
        return flag_value
    value = config.get(section, {}).get(key)
    return default if value is None else value


def _base_seed(args, config: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(config.get("seed", 0))


def _run_repeats(args, config: dict) -> int:
    repeats = getattr(args, "repeats", None)
    if repeats is None:
        repeats = int(config.get("run_repeats", 10))
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    return repeats


def _with_provenance(provenance: str, body: str) -> str:
    lines = "".join(f"# provenance: {line}\n"
                    for line in provenance.splitlines())
    return lines + body


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _auto_or_float(text: str):
    return text if text == "auto" else float(text)


def _heuristic_or_float(text: str):
    return text if text == "heuristic" else float(text)


def cmd_synth(args) -> None:
    config = _load_config(args.config)

    def section(key, default):
        return _pick(getattr(args, key), config, "synth", key, default)

    synth = SynthConfig(
        n_endmembers=int(section("n_endmembers", 20)),
        n_classes=int(section("n_classes", 4)),
        n_bands=int(section("n_bands", 111)),
        n_pixels=int(section("n_pixels", 500)),
        sparsity=int(section("sparsity", 3)),
        noise_sigma=float(section("noise_sigma", 0.0)),
        dirichlet_alpha=float(section("dirichlet_alpha", 1.0)),
        seed=_base_seed(args, config))
    rows = int(section("rows", 1))
    if rows < 1 or synth.n_pixels % rows != 0:
        raise ValueError(f"rows ({rows}) must divide n_pixels "
                         f"({synth.n_pixels})")
    cols = synth.n_pixels // rows

    library, scene = synth_scene(synth)
    provenance = library_provenance_json({
        "command": "synth", "seed": synth.seed,
        "n_endmembers": synth.n_endmembers, "n_classes": synth.n_classes,
        "n_bands": synth.n_bands, "n_pixels": synth.n_pixels,
        "sparsity": synth.sparsity, "noise_sigma": synth.noise_sigma,
        "dirichlet_alpha": synth.dirichlet_alpha, "rows": rows, "cols": cols})
    write_library(args.library_out, library, provenance)
    print(f"wrote {args.library_out}")
    write_raster(args.raster_out, scene, rows, cols, provenance=provenance)
    print(f"wrote {args.raster_out}")
    write_fraction_map(args.fractions_out, scene.reference_fractions,
                       scene.fraction_classes, rows, cols, provenance)
    print(f"wrote {args.fractions_out}")
    if args.labels_out:
        # the label format has no comment syntax, so no provenance block
        write_labels(args.labels_out, scene.labels)
        print(f"wrote {args.labels_out}")


def cmd_extract(args) -> None:
    config = _load_config(args.config)
    k = int(_pick(args.archetypes, config, "archetypes", "n_archetypes", 40))
    sigma = _pick(args.sigma, config, "archetypes", "sigma", "heuristic")
    neighbors_k = int(_pick(args.neighbors_k, config, "preprocess",
                            "neighbors_k", 10))
    quantile = float(_pick(args.quantile, config, "preprocess",
                           "quantile", 0.95))
    seed = _base_seed(args, config)
    default_runs = _run_repeats(args, config) \
        if args.mode == "kernel-accumulate" else 1
    runs = int(_pick(args.runs, config, "archetypes", "runs", default_runs))
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if args.mode in ("linear-mean", "kernel-mean") and runs != 1:
        raise ValueError(f"mode {args.mode} is deterministic; runs must be 1")

    dataset, _ = read_raster(args.raster)
    if args.labels:
        labels = read_labels(args.labels)
        if len(labels) != dataset.n_pixels:
            raise ValueError(f"{args.labels}: {len(labels)} labels for "
                             f"{dataset.n_pixels} pixels")
        dataset = Dataset(dataset.pixels, labels=labels)
    kept, _ = lof_filter(dataset, LofConfig(neighbors_k, quantile))

    if args.mode == "linear-mean":
        selection = sivm_select(kept, SivmConfig(k, space="linear",
                                                 init="mean"))
    elif args.mode == "kernel-mean":
        selection = sivm_select(kept, SivmConfig(k, space="kernel",
                                                 init="mean", sigma=sigma))
    else:
        sets = [sivm_select(kept, SivmConfig(k, space="kernel", init="random",
                                             sigma=sigma, seed=seed + r))
                for r in range(runs)]
        selection = sets[0] if len(sets) == 1 else accumulate_runs(sets)

    provenance = library_provenance_json({
        "command": "extract", "mode": args.mode, "n_archetypes": k,
        "runs": runs, "seed": seed, "neighbors_k": neighbors_k,
        "quantile": quantile, "sigma": sigma})
    selection_line = library_provenance_json(dict(selection.provenance))
    write_library(args.out, selection.library,
                  provenance + "\n" + selection_line)
    print(f"wrote {args.out}")


def _optimize_config(args, config: dict, seed: int) -> McmcConfig:
    def section(key, default):
        return _pick(getattr(args, key), config, "mcmc", key, default)

    coverage = section("require_class_coverage", False)
    return McmcConfig(
        prior_lambda=float(section("prior_lambda", 75.0)),
        max_elements=int(section("max_elements", 150)),
        iterations=int(section("iterations", 10000)),
        initial_temperature=section("initial_temperature", "auto"),
        cooling_factor=float(section("cooling_factor", 0.995)),
        seed=seed,
        sparsity=int(section("sparsity", 7)),
        tolerance=float(section("tolerance", 1e-10)),
        require_class_coverage=bool(coverage))


def cmd_optimize(args) -> None:
    config = _load_config(args.config)
    base_seed = _base_seed(args, config)
    repeats = _run_repeats(args, config)
    pool = read_library(args.pool)
    dataset, _ = read_raster(args.raster)
    reference = None
    if args.reference:
        fractions, names, _ = read_fraction_map(args.reference)
        if fractions.shape[0] != dataset.n_pixels:
            raise ValueError(f"{args.reference}: {fractions.shape[0]} "
                             f"fraction rows for {dataset.n_pixels} pixels")
        reference = (fractions, names)

    template = _optimize_config(args, config, base_seed)
    provenance = library_provenance_json({
        "command": "optimize", "seed": base_seed, "run_repeats": repeats,
        "prior_lambda": template.prior_lambda,
        "max_elements": template.max_elements,
        "iterations": template.iterations,
        "initial_temperature": template.initial_temperature,
        "cooling_factor": template.cooling_factor,
        "sparsity": template.sparsity, "tolerance": template.tolerance,
        "require_class_coverage": template.require_class_coverage})

    libraries = []
    stats = []  # (seed, size, energy, mae or None)
    for r in range(repeats):
        run_config = _optimize_config(args, config, base_seed + r)
        library, trace = run_rjmcmc(pool, dataset, run_config)
        run_mae = None
        if reference is not None:
            results = unmix_batch(library, dataset,
                                  run_config.solver_config())
            estimated, _ = aggregate_fraction_matrix(
                coefficient_matrix(results), library, reference[1])
            run_mae = mae(reference[0], estimated)[2]
        libraries.append(library)
        stats.append((base_seed + r, len(library), trace.best_energy,
                      run_mae))
        run_line = library_provenance_json({
            "run": r, "seed": base_seed + r, "size": len(library),
            "energy": trace.best_energy})
        write_library(f"{args.out_prefix}_run{r}_library.csv", library,
                      provenance + "\n" + run_line)
        print(f"wrote {args.out_prefix}_run{r}_library.csv")
        _write_text(f"{args.out_prefix}_run{r}_trace.csv",
                    _with_provenance(provenance + "\n" + run_line,
                                     trace.to_csv()))

    energies = np.array([s[2] for s in stats])
    sizes = np.array([s[1] for s in stats], dtype=float)
    best_run = int(np.argmin(energies))
    best_line = library_provenance_json({
        "best_run": best_run, "seed": stats[best_run][0],
        "size": stats[best_run][1], "energy": stats[best_run][2]})
    write_library(f"{args.out_prefix}_best_library.csv", libraries[best_run],
                  provenance + "\n" + best_line)
    print(f"wrote {args.out_prefix}_best_library.csv")

    def fmt(value) -> str:
        return "" if value is None else f"{value:.17g}"

    rows = ["run,seed,size,energy,mae"]
    for r, (seed_r, size, energy_r, mae_r) in enumerate(stats):
        rows.append(f"{r},{seed_r},{size},{energy_r:.17g},{fmt(mae_r)}")
    maes = [s[3] for s in stats]
    mean_mae = None if reference is None else float(np.mean(maes))
    rows.append(f"mean,,{sizes.mean():.17g},{energies.mean():.17g},"
                f"{fmt(mean_mae)}")
    if repeats > 1:
        std_mae = None if reference is None else float(np.std(maes))
        rows.append(f"std,,{sizes.std():.17g},{energies.std():.17g},"
                    f"{fmt(std_mae)}")
    _write_text(f"{args.out_prefix}_summary.csv",
                _with_provenance(provenance, "\n".join(rows) + "\n"))


def cmd_unmix(args) -> None:
    config = _load_config(args.config)
    sparsity = int(_pick(args.sparsity, config, "solver", "sparsity", 7))
    tolerance = float(_pick(args.tolerance, config, "solver", "tolerance",
                            1e-10))
    library = read_library(args.library)
    dataset, header = read_raster(args.raster)
    results = unmix_batch(library, dataset, SolverConfig(sparsity, tolerance))
    classes = args.classes.split(",") if args.classes else None
    fractions, names = aggregate_fraction_matrix(coefficient_matrix(results),
                                                 library, classes)
    provenance = library_provenance_json({
        "command": "unmix", "sparsity": sparsity, "tolerance": tolerance,
        "classes": list(names)})
    write_fraction_map(args.out, fractions, names, header.rows, header.cols,
                       provenance)
    print(f"wrote {args.out}")
    if args.histogram_out:
        histogram = usage_histogram(results, library)
        _write_text(args.histogram_out,
                    _with_provenance(provenance, histogram.to_csv()))


def cmd_evaluate(args) -> None:
    estimated, est_names, est_shape = read_fraction_map(args.estimate)
    reference, ref_names, ref_shape = read_fraction_map(args.reference)
    if est_shape != ref_shape:
        raise ValueError(f"pixel-set mismatch: estimate "
                         f"{est_shape[0]}x{est_shape[1]}, reference "
                         f"{ref_shape[0]}x{ref_shape[1]}")
    if est_names != ref_names:
        raise ValueError(f"class mismatch: estimate {list(est_names)}, "
                         f"reference {list(ref_names)}")
    report = evaluate_fractions(reference, estimated, ref_names)
    provenance = library_provenance_json({
        "command": "evaluate", "classes": list(ref_names),
        "pixels": report.pixel_count})
    _write_text(args.out, _with_provenance(provenance, report.to_csv()))
    if args.text_out:
        _write_text(args.text_out,
                    _with_provenance(provenance, report.to_text()))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specmix",
        description="Sparse spectral unmixing pipeline (see subcommands).")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--config", help="JSON config file with defaults")
        sub.add_argument("--seed", type=int, help="base seed")

    synth = commands.add_parser("synth", help="generate a synthetic scene")
    common(synth)
    for flag in ("n_endmembers", "n_classes", "n_bands", "n_pixels",
                 "sparsity", "rows"):
        synth.add_argument("--" + flag.replace("_", "-"), dest=flag, type=int)
    synth.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    synth.add_argument("--dirichlet-alpha", dest="dirichlet_alpha",
                       type=float)
    synth.add_argument("--library-out", required=True)
    synth.add_argument("--raster-out", required=True)
    synth.add_argument("--fractions-out", required=True)
    synth.add_argument("--labels-out")
    synth.set_defaults(handler=cmd_synth)

    extract = commands.add_parser("extract",
                                  help="select archetypes from a raster")
    common(extract)
    extract.add_argument("--raster", required=True)
    extract.add_argument("--labels", help="per-pixel class labels")
    extract.add_argument("--mode", required=True, choices=_MODES)
    extract.add_argument("--archetypes", type=int,
                         help="number of archetypes to select")
    extract.add_argument("--runs", type=int,
                         help="random selections to accumulate")
    extract.add_argument("--sigma", type=_heuristic_or_float,
                         help="kernel width or 'heuristic'")
    extract.add_argument("--neighbors-k", dest="neighbors_k", type=int)
    extract.add_argument("--quantile", type=float)
    extract.add_argument("--out", required=True)
    extract.set_defaults(handler=cmd_extract)

    optimize = commands.add_parser("optimize",
                                   help="subset search over a library pool")
    common(optimize)
    optimize.add_argument("--pool", required=True, help="pool library file")
    optimize.add_argument("--raster", required=True, help="evaluation raster")
    optimize.add_argument("--reference",
                          help="reference fraction map (adds MAE reporting)")
    optimize.add_argument("--repeats", type=int, help="independent chains")
    optimize.add_argument("--prior-lambda", dest="prior_lambda", type=float)
    optimize.add_argument("--max-elements", dest="max_elements", type=int)
    optimize.add_argument("--iterations", type=int)
    optimize.add_argument("--initial-temperature", dest="initial_temperature",
                          type=_auto_or_float)
    optimize.add_argument("--cooling-factor", dest="cooling_factor",
                          type=float)
    optimize.add_argument("--sparsity", type=int)
    optimize.add_argument("--tolerance", type=float)
    optimize.add_argument("--require-class-coverage",
                          dest="require_class_coverage", action="store_true",
                          default=None)
    optimize.add_argument("--out-prefix", required=True)
    optimize.set_defaults(handler=cmd_optimize)

    unmix = commands.add_parser("unmix",
                                help="estimate per-pixel class fractions")
    common(unmix)
    unmix.add_argument("--library", required=True)
    unmix.add_argument("--raster", required=True)
    unmix.add_argument("--sparsity", type=int)
    unmix.add_argument("--tolerance", type=float)
    unmix.add_argument("--classes", help="comma-separated class order")
    unmix.add_argument("--out", required=True, help="fraction map path")
    unmix.add_argument("--histogram-out", help="per-atom usage histogram")
    unmix.set_defaults(handler=cmd_unmix)

    evaluate = commands.add_parser("evaluate",
                                   help="compare estimate against reference")
    evaluate.add_argument("--estimate", required=True)
    evaluate.add_argument("--reference", required=True)
    evaluate.add_argument("--out", required=True, help="report CSV path")
    evaluate.add_argument("--text-out", help="human-readable report path")
    evaluate.set_defaults(handler=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
