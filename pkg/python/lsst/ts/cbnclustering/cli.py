# This file is part of ts_cbnclustering.
#
# Developed for the Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = [
    "cmd_baseline",
    "cmd_cluster",
    "cmd_evaluate",
    "cmd_generate",
    "cmd_ingest",
    "main",
    "make_parser",
]

import argparse
import json
import logging
import math
import pathlib
import sys
import types
import typing

import jsonschema
import numpy as np
import pandas as pd
import yaml

from .baselines import (
    BaselineConfig,
    DbscanParams,
    HierarchicalParams,
    KMeansParams,
    run_baseline,
)
from .cbn import (
    QUARTILE_METHOD,
    CbnResult,
    TuningParams,
    relative_change_summary,
    run_cbn,
)
from .config import default_threads, load_config, merge_config
from .core import (
    FLOAT_FORMAT,
    ID_COLUMN,
    DistanceSpec,
    read_point_cloud,
    write_point_cloud,
)
from .enums import (
    BaselineAlgorithm,
    ComponentMode,
    DistanceKind,
    ExitCode,
    Linkage,
    OutputFormat,
    Subcommand,
)
from .evaluation import evaluate, read_partition, write_partition
from .exceptions import InputFormatError, ProcessingError
from .homology import SUMMARY_STATISTICS, ThresholdGrid, betti_dynamics_summary
from .ingest import ColumnMapping, MonthWindow, run_ingest, write_imputation_report
from .schemas import registry, schema_defaults
from .synth import benchmark13, generate, read_layout

PROGRAM_NAME = "run_cbn_clustering"

AUTO = "auto"

# Files written by ``cluster --diagnostics``.
PROFILES_FILE = "betti_profiles.csv"
SUMMARY_FILE = "betti_summary.csv"
TAUS_FILE = "taus.json"


def _tau(text: str) -> float | str:
    if text == AUTO:
        return AUTO
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is neither a number nor {AUTO!r}.")
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"tau must be >= 0; got {text}.")
    return value


def _round(value: typing.Any) -> typing.Any:
    """Round floats to the output precision; non-finite floats become
    None."""
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return None
        return float(FLOAT_FORMAT % value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _print_report(report: dict[str, typing.Any], output_format: OutputFormat) -> None:
    report = {key: _round(value) for key, value in report.items()}
    if output_format == OutputFormat.JSON:
        print(json.dumps(report, indent=2))
    else:
        frame = pd.DataFrame([report])
        print(
            frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"),
            end="",
        )


def make_parser() -> argparse.ArgumentParser:
    """Make the command line parser.

    Options default to None so that values from a ``--config`` file can
    be told apart from values given on the command line; the effective
    defaults come from the configuration schemas and are shown in the
    help.
    """
    parser = argparse.ArgumentParser(
        prog=PROGRAM_NAME,
        description="Clustering using Betti numbers, with baselines and tools.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level; log messages go to stderr (default: WARNING).",
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    defaults = schema_defaults("config_generate")
    generate_parser = subparsers.add_parser(
        Subcommand.GENERATE, help="Generate a synthetic benchmark dataset."
    )
    generate_parser.add_argument("--output", required=True, type=pathlib.Path)
    layout_group = generate_parser.add_mutually_exclusive_group()
    layout_group.add_argument(
        "--benchmark13",
        action="store_const",
        const=True,
        default=None,
        help="Use the built-in 13-shape layout.",
    )
    layout_group.add_argument("--layout", help="YAML shape layout file.")
    generate_parser.add_argument(
        "--noise",
        type=int,
        help=f"Number of uniform noise points (default: {defaults['noise']}).",
    )
    generate_parser.add_argument(
        "--seed", type=int, help=f"Random seed (default: {defaults['seed']})."
    )
    generate_parser.add_argument("--config", help="YAML configuration file.")

    defaults = schema_defaults("config_cluster")
    cluster_parser = subparsers.add_parser(
        Subcommand.CLUSTER, help="Cluster a point cloud with CBN."
    )
    cluster_parser.add_argument("--input", required=True, type=pathlib.Path)
    cluster_parser.add_argument("--output", required=True, type=pathlib.Path)
    cluster_parser.add_argument(
        "--k",
        type=int,
        help=f"Neighborhood size, center included (default: {defaults['k']}).",
    )
    for name in ("tau0", "tau1"):
        cluster_parser.add_argument(
            f"--{name}",
            type=_tau,
            help=f"Relative change bound, a number or {AUTO!r} "
            f"(default: {defaults[name]}).",
        )
    cluster_parser.add_argument(
        "--mode",
        choices=[mode.value for mode in ComponentMode],
        help=f"Component mode (default: {defaults['mode']}).",
    )
    reassign_group = cluster_parser.add_mutually_exclusive_group()
    reassign_group.add_argument(
        "--min-cluster-size",
        type=int,
        help="Reassign clusters smaller than this (default: no reassignment).",
    )
    reassign_group.add_argument(
        "--min-clusters",
        type=int,
        help="Keep only the largest clusters (default: no reassignment).",
    )
    cluster_parser.add_argument(
        "--grid-size",
        type=int,
        help=f"Number of filtration thresholds (default: {defaults['grid_size']}).",
    )
    cluster_parser.add_argument(
        "--distance",
        choices=[
            kind.value for kind in DistanceKind if kind != DistanceKind.PRECOMPUTED
        ],
        help=f"Distance function (default: {defaults['distance']}).",
    )
    cluster_parser.add_argument(
        "--no-refine",
        dest="refine",
        action="store_false",
        default=None,
        help="Skip the Betti number refinement.",
    )
    cluster_parser.add_argument(
        "--subsample",
        type=int,
        help="Cluster a random subset of this size (default: all points).",
    )
    cluster_parser.add_argument(
        "--seed", type=int, help=f"Subset seed (default: {defaults['seed']})."
    )
    cluster_parser.add_argument(
        "--threads",
        type=int,
        help="Parallelism degree (default: $CBN_THREADS or 1).",
    )
    cluster_parser.add_argument(
        "--diagnostics",
        type=pathlib.Path,
        help="Directory for Betti profiles, summaries and tau statistics.",
    )
    cluster_parser.add_argument(
        "--format",
        choices=[output_format.value for output_format in OutputFormat],
        help=f"Report format (default: {defaults['format']}).",
    )
    cluster_parser.add_argument("--config", help="YAML configuration file.")

    defaults = schema_defaults("config_baseline")
    baseline_parser = subparsers.add_parser(
        Subcommand.BASELINE, help="Cluster a point cloud with a baseline algorithm."
    )
    baseline_parser.add_argument("--input", required=True, type=pathlib.Path)
    baseline_parser.add_argument("--output", required=True, type=pathlib.Path)
    baseline_parser.add_argument(
        "--algorithm",
        choices=[algorithm.value for algorithm in BaselineAlgorithm],
        help=f"Algorithm (default: {defaults['algorithm']}).",
    )
    baseline_parser.add_argument(
        "--k", type=int, help=f"K-means clusters (default: {defaults['k']})."
    )
    baseline_parser.add_argument(
        "--seed", type=int, help=f"K-means seed (default: {defaults['seed']})."
    )
    baseline_parser.add_argument(
        "--max-iterations",
        type=int,
        help=f"K-means iterations (default: {defaults['max_iterations']}).",
    )
    baseline_parser.add_argument(
        "--linkage",
        choices=[linkage.value for linkage in Linkage],
        help=f"Hierarchical linkage (default: {defaults['linkage']}).",
    )
    cut_group = baseline_parser.add_mutually_exclusive_group()
    cut_group.add_argument(
        "--cut-height",
        type=float,
        help="Dendrogram cut height (default: middle of the largest gap).",
    )
    cut_group.add_argument(
        "--n-clusters", type=int, help="Number of hierarchical clusters."
    )
    baseline_parser.add_argument(
        "--eps", type=float, help=f"DBSCAN radius (default: {defaults['eps']})."
    )
    baseline_parser.add_argument(
        "--min-pts",
        type=int,
        help=f"DBSCAN core point threshold (default: {defaults['min_pts']}).",
    )
    baseline_parser.add_argument("--config", help="YAML configuration file.")

    evaluate_parser = subparsers.add_parser(
        Subcommand.EVALUATE, help="Compare two partitions by pair counting."
    )
    evaluate_parser.add_argument("--reference", required=True, type=pathlib.Path)
    evaluate_parser.add_argument("--candidate", required=True, type=pathlib.Path)
    evaluate_parser.add_argument(
        "--format",
        choices=[output_format.value for output_format in OutputFormat],
        default=OutputFormat.JSON.value,
        help="Report format (default: json).",
    )

    defaults = schema_defaults("config_ingest")
    ingest_parser = subparsers.add_parser(
        Subcommand.INGEST, help="Turn station observations into a point cloud."
    )
    ingest_parser.add_argument("--input", required=True, type=pathlib.Path)
    ingest_parser.add_argument("--output", required=True, type=pathlib.Path)
    ingest_parser.add_argument(
        "--window",
        help=f"Months YYYY-MM:YYYY-MM (default: {defaults['window']}).",
    )
    ingest_parser.add_argument(
        "--report", type=pathlib.Path, help="Imputation report CSV file."
    )
    for name in ("station", "date", "value", "lat", "lon"):
        ingest_parser.add_argument(
            f"--col-{name}",
            help=f"Column name (default: {defaults['col_' + name]}).",
        )
    ingest_parser.add_argument(
        "--delimiter", help=f"Field delimiter (default: {defaults['delimiter']!r})."
    )
    ingest_parser.add_argument("--config", help="YAML configuration file.")
    return parser


def _configure(
    args: argparse.Namespace, schema_name: str, keys: typing.Iterable[str]
) -> types.SimpleNamespace:
    """Merge command line values over a configuration file and validate
    the result."""
    config = load_config(schema_name, args.config)
    merged = merge_config(config, {key: getattr(args, key) for key in keys})
    jsonschema.validate(vars(merged), registry[schema_name])
    return merged


def _write_diagnostics(
    result: CbnResult,
    point_ids: typing.Sequence[str],
    grid: ThresholdGrid,
    directory: pathlib.Path,
) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    threshold_columns = [f"t{i}" for i in range(len(grid))]
    owners = [
        point_ids[
            profile.owner if result.sample is None else result.sample[profile.owner]
        ]
        for profile in result.profiles
    ]
    rows = []
    for owner, profile in zip(owners, result.profiles):
        rows.append([owner, 0, *profile.beta0])
        rows.append([owner, 1, *profile.beta1])
    pd.DataFrame(rows, columns=[ID_COLUMN, "dimension", *threshold_columns]).to_csv(
        directory / PROFILES_FILE, index=False, lineterminator="\n"
    )

    summary = betti_dynamics_summary(result.profiles)
    rows = [
        [dimension, name, *summary.statistic(dimension, name)]
        for dimension in (0, 1)
        for name in SUMMARY_STATISTICS
    ]
    pd.DataFrame(rows, columns=["dimension", "statistic", *threshold_columns]).to_csv(
        directory / SUMMARY_FILE,
        index=False,
        float_format=FLOAT_FORMAT,
        lineterminator="\n",
    )

    taus: dict[str, typing.Any] = dict(
        tau0=_round(result.tau0),
        tau1=_round(result.tau1),
        auto_tau0=result.auto_taus[0],
        auto_tau1=result.auto_taus[1],
        quartile_method=QUARTILE_METHOD,
    )
    for name, changes in (("beta0", result.changes0), ("beta1", result.changes1)):
        try:
            statistics = relative_change_summary(changes)
        except ValueError:
            taus[name] = None
        else:
            taus[name] = {key: _round(value) for key, value in statistics.items()}
    with open(directory / TAUS_FILE, "w") as f:
        json.dump(taus, f, indent=2)
        f.write("\n")


def cmd_generate(args: argparse.Namespace, log: logging.Logger) -> ExitCode:
    """Write a synthetic dataset."""
    config = _configure(
        args, "config_generate", ("benchmark13", "layout", "noise", "seed")
    )
    if config.benchmark13 and config.layout is not None:
        log.error("Use either --benchmark13 or --layout, not both.")
        return ExitCode.INVALID_ARGUMENTS
    if config.benchmark13:
        dataset = benchmark13(seed=config.seed, noise_count=config.noise)
    elif config.layout is not None:
        box, specs = read_layout(config.layout)
        dataset = generate(specs, config.noise, box, config.seed, log=log)
    else:
        log.error("Need --benchmark13 or --layout.")
        return ExitCode.INVALID_ARGUMENTS
    dataset.write_csv(args.output)
    return ExitCode.SUCCESS


def cmd_cluster(args: argparse.Namespace, log: logging.Logger) -> ExitCode:
    """Run CBN, write the partition and print the tau report."""
    config = _configure(
        args,
        "config_cluster",
        (
            "k",
            "tau0",
            "tau1",
            "mode",
            "min_cluster_size",
            "min_clusters",
            "grid_size",
            "distance",
            "refine",
            "subsample",
            "seed",
            "threads",
            "format",
        ),
    )
    threads = getattr(config, "threads", None) or default_threads()
    params = TuningParams(
        tau0=None if config.tau0 == AUTO else config.tau0,
        tau1=None if config.tau1 == AUTO else config.tau1,
        mode=ComponentMode(config.mode),
        min_cluster_size=config.min_cluster_size,
        min_clusters=config.min_clusters,
        refine=config.refine,
    )
    grid = ThresholdGrid.uniform(config.grid_size)
    cloud = read_point_cloud(args.input, log=log)
    result = run_cbn(
        cloud,
        spec=DistanceSpec(kind=DistanceKind(config.distance)),
        k=config.k,
        params=params,
        grid=grid,
        threads=threads,
        subsample=config.subsample,
        seed=config.seed,
        log=log,
    )
    point_ids = cloud.point_ids()
    write_partition(point_ids, result.partition, args.output)
    if args.diagnostics is not None:
        _write_diagnostics(result, point_ids, grid, args.diagnostics)
    _print_report(
        dict(
            tau0=result.tau0,
            tau1=result.tau1,
            auto_tau0=result.auto_taus[0],
            auto_tau1=result.auto_taus[1],
            quartile_method=QUARTILE_METHOD,
            n_clusters=result.partition.n_clusters,
        ),
        OutputFormat(config.format),
    )
    return ExitCode.SUCCESS


def cmd_baseline(args: argparse.Namespace, log: logging.Logger) -> ExitCode:
    """Run a baseline algorithm and write the partition."""
    config = _configure(
        args,
        "config_baseline",
        (
            "algorithm",
            "k",
            "seed",
            "max_iterations",
            "linkage",
            "cut_height",
            "n_clusters",
            "eps",
            "min_pts",
        ),
    )
    algorithm = BaselineAlgorithm(config.algorithm)
    match algorithm:
        case BaselineAlgorithm.KMEANS:
            baseline_config = BaselineConfig(
                algorithm=algorithm,
                kmeans=KMeansParams(
                    n_clusters=config.k,
                    max_iterations=config.max_iterations,
                    seed=config.seed,
                ),
            )
        case BaselineAlgorithm.HIERARCHICAL:
            baseline_config = BaselineConfig(
                algorithm=algorithm,
                hierarchical=HierarchicalParams(
                    linkage=Linkage(config.linkage),
                    cut_height=config.cut_height,
                    n_clusters=config.n_clusters,
                ),
            )
        case BaselineAlgorithm.DBSCAN:
            baseline_config = BaselineConfig(
                algorithm=algorithm,
                dbscan=DbscanParams(eps=config.eps, min_pts=config.min_pts),
            )
    cloud = read_point_cloud(args.input, log=log)
    partition = run_baseline(cloud, baseline_config, log=log)
    write_partition(cloud.point_ids(), partition, args.output)
    return ExitCode.SUCCESS


def cmd_evaluate(args: argparse.Namespace, log: logging.Logger) -> ExitCode:
    """Print the pair counts, Rand and Jaccard indices of two partition
    files."""
    reference_ids, reference = read_partition(args.reference, log=log)
    candidate_ids, candidate = read_partition(args.candidate, log=log)
    if sorted(reference_ids) != sorted(candidate_ids) or len(
        set(reference_ids)
    ) != len(reference_ids):
        raise InputFormatError(
            f"Point ids of {args.reference} and {args.candidate} do not match."
        )
    position = {point_id: i for i, point_id in enumerate(candidate_ids)}
    order = [position[point_id] for point_id in reference_ids]
    report = evaluate(reference, candidate.labels[order])
    _print_report(report, OutputFormat(args.format))
    return ExitCode.SUCCESS


def cmd_ingest(args: argparse.Namespace, log: logging.Logger) -> ExitCode:
    """Write the station point cloud and the imputation report."""
    config = _configure(
        args,
        "config_ingest",
        (
            "window",
            "col_station",
            "col_date",
            "col_value",
            "col_lat",
            "col_lon",
            "delimiter",
        ),
    )
    columns = ColumnMapping(
        station=config.col_station,
        date=config.col_date,
        value=config.col_value,
        latitude=config.col_lat,
        longitude=config.col_lon,
    )
    try:
        window = MonthWindow.parse(config.window)
    except ValueError as e:
        log.error(f"Invalid --window: {e}")
        return ExitCode.INVALID_ARGUMENTS
    result = run_ingest(
        args.input,
        window,
        columns=columns,
        delimiter=config.delimiter,
        log=log,
    )
    write_point_cloud(result.cloud, args.output, columns=result.months)
    if args.report is not None:
        write_imputation_report(result.imputations, args.report)
    return ExitCode.SUCCESS


COMMANDS = {
    Subcommand.GENERATE: cmd_generate,
    Subcommand.CLUSTER: cmd_cluster,
    Subcommand.BASELINE: cmd_baseline,
    Subcommand.EVALUATE: cmd_evaluate,
    Subcommand.INGEST: cmd_ingest,
}


def main(argv: typing.Sequence[str] | None = None) -> int:
    """Run the command line interface.

    Parameters
    ----------
    argv : sequence of `str` or `None`, optional
        Arguments without the program name; ``sys.argv[1:]`` if None.

    Returns
    -------
    exit_code : `int`
        0 on success, 2 for invalid arguments or configuration, 3 for
        unreadable input and 4 if the algorithm cannot proceed.
    """
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(levelname)s:%(name)s:%(message)s",
    )
    log = logging.getLogger(PROGRAM_NAME)
    command = COMMANDS[Subcommand(args.subcommand)]
    try:
        return int(command(args, log))
    except (jsonschema.ValidationError, yaml.YAMLError) as e:
        log.error(f"Invalid configuration: {e}")
        return ExitCode.INVALID_ARGUMENTS
    except (InputFormatError, OSError) as e:
        log.error(f"Cannot read input: {e}")
        return ExitCode.INPUT_ERROR
    except (ProcessingError, ValueError) as e:
        log.error(f"Clustering failed: {e}")
        return ExitCode.ALGORITHM_ERROR
    except Exception:
        log.exception(f"Unexpected failure of {args.subcommand}.")
        return ExitCode.ALGORITHM_ERROR
