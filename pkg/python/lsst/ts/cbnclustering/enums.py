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
    "NOISE_LABEL",
    "BaselineAlgorithm",
    "ComponentMode",
    "DistanceKind",
    "ExitCode",
    "Linkage",
    "OutputFormat",
    "ShapeKind",
    "Subcommand",
]

import enum

# Label reserved for noise points in partitions and ground truth.
NOISE_LABEL = -1


class DistanceKind(enum.StrEnum):
    """Enum containing the supported distance functions."""

    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"
    CHEBYSHEV = "chebyshev"
    PRECOMPUTED = "precomputed"


class ComponentMode(enum.StrEnum):
    """Enum containing the ways clusters are read off the neighborhood
    graph."""

    STRONG = "strong"
    WEAK = "weak"


class Linkage(enum.StrEnum):
    """Enum containing the agglomerative linkage methods."""

    SINGLE = "single"
    COMPLETE = "complete"
    AVERAGE = "average"


class BaselineAlgorithm(enum.StrEnum):
    """Enum containing the baseline clustering algorithms."""

    KMEANS = "kmeans"
    HIERARCHICAL = "hierarchical"
    DBSCAN = "dbscan"


class ShapeKind(enum.StrEnum):
    """Enum containing the synthetic cluster shapes."""

    DISK = "disk"
    ANNULUS = "annulus"
    RECTANGLE = "rectangle"
    CRESCENT = "crescent"
    SINE_STRIP = "sine_strip"


class OutputFormat(enum.StrEnum):
    CSV = "csv"
    JSON = "json"


class Subcommand(enum.StrEnum):
    """Enum containing all command line subcommands."""

    GENERATE = "generate"
    CLUSTER = "cluster"
    BASELINE = "baseline"
    EVALUATE = "evaluate"
    INGEST = "ingest"


class ExitCode(enum.IntEnum):
    """Process exit codes of the command line interface."""

    SUCCESS = 0
    INVALID_ARGUMENTS = 2
    INPUT_ERROR = 3
    ALGORITHM_ERROR = 4
