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
    "FLOAT_FORMAT",
    "SYMMETRY_TOLERANCE",
    "DistanceSpec",
    "EcdfTransform",
    "Neighborhood",
    "PointCloud",
    "build_distance_matrix",
    "fit_ecdf",
    "knn_neighborhoods",
    "read_point_cloud",
    "transform_distances",
    "write_point_cloud",
]

import dataclasses
import logging
import pathlib
import typing

import numpy as np
import pandas as pd
from scipy.spatial import distance

from .enums import DistanceKind
from .exceptions import InputFormatError

# Tolerance on the asymmetry of a precomputed distance matrix.
SYMMETRY_TOLERANCE = 1e-9

# Format of all floats written to CSV files (9 significant digits).
FLOAT_FORMAT = "%.9g"

# Column names of a point cloud CSV file that do not hold coordinates.
ID_COLUMN = "id"
IGNORED_COLUMNS = frozenset({"label", "is_noise"})

# scipy metric name for each computed distance kind.
SCIPY_METRICS = {
    DistanceKind.EUCLIDEAN: "euclidean",
    DistanceKind.MANHATTAN: "cityblock",
    DistanceKind.CHEBYSHEV: "chebyshev",
}


@dataclasses.dataclass(frozen=True)
class PointCloud:
    """An ordered, finite set of points.

    Parameters
    ----------
    points : `numpy.ndarray` or sequence of sequences of `float`
        Coordinates, one row per point; shape (n, m).
    ids : sequence of `str` or `None`, optional
        Unique point identifiers, one per point.

    Raises
    ------
    ValueError
        If the points have mixed dimensions, there are no points, or the
        identifiers are not unique or have the wrong length.
    """

    points: np.ndarray
    ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.points, np.ndarray):
            try:
                dimensions = sorted({len(point) for point in self.points})
            except TypeError as e:
                raise ValueError("Points must be coordinate vectors.") from e
            if len(dimensions) > 1:
                raise ValueError(f"Points have mixed dimensions {dimensions}.")
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise ValueError(
                f"Points must be a non-empty (n, m) array; got shape {points.shape}."
            )
        if not np.all(np.isfinite(points)):
            raise ValueError("Points must have finite coordinates.")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        if self.ids is not None:
            ids = tuple(str(point_id) for point_id in self.ids)
            if len(ids) != points.shape[0]:
                raise ValueError(f"Got {len(ids)} ids for {points.shape[0]} points.")
            if len(set(ids)) != len(ids):
                raise ValueError("Point ids must be unique.")
            object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        """Number of points."""
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        """Dimension of each point."""
        return self.points.shape[1]

    def point_ids(self) -> tuple[str, ...]:
        """Return the identifiers, defaulting to the row indices."""
        if self.ids is not None:
            return self.ids
        return tuple(str(i) for i in range(self.n))

    def subset(self, indices: typing.Sequence[int] | np.ndarray) -> "PointCloud":
        """Return the cloud restricted to ``indices``, in that order."""
        indices = np.asarray(indices, dtype=np.intp)
        ids = None if self.ids is None else tuple(self.ids[i] for i in indices)
        return PointCloud(points=self.points[indices], ids=ids)


@dataclasses.dataclass(frozen=True)
class DistanceSpec:
    """The distance function of a point cloud.

    Parameters
    ----------
    kind : `DistanceKind`, optional
        The distance function.
    matrix : `numpy.ndarray` or `None`, optional
        The distance matrix; required for `DistanceKind.PRECOMPUTED` and
        forbidden otherwise. It must be square, nonnegative, symmetric
        within `SYMMETRY_TOLERANCE` and have a zero diagonal.
    """

    kind: DistanceKind = DistanceKind.EUCLIDEAN
    matrix: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DistanceKind(self.kind))
        if self.kind != DistanceKind.PRECOMPUTED:
            if self.matrix is not None:
                raise ValueError(f"{self.kind=} does not accept a matrix.")
            return
        if self.matrix is None:
            raise ValueError("A precomputed distance needs a matrix.")
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Distance matrix must be square; got {matrix.shape}.")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            raise ValueError("Distance matrix must be finite and nonnegative.")
        asymmetry = float(np.max(np.abs(matrix - matrix.T), initial=0.0))
        if asymmetry > SYMMETRY_TOLERANCE:
            raise ValueError(
                f"Distance matrix is not symmetric: {asymmetry=} > {SYMMETRY_TOLERANCE}."
            )
        if np.any(np.diag(matrix) != 0):
            raise ValueError("Distance matrix must have a zero diagonal.")
        # Remove rounding asymmetry so that d(i, j) == d(j, i) exactly.
        matrix = np.minimum(matrix, matrix.T)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)


@dataclasses.dataclass(frozen=True)
class Neighborhood:
    """The k nearest points of a center point, center included.

    Attributes
    ----------
    center : `int`
        Index of the center point.
    members : `numpy.ndarray`
        Indices of the k members, nearest first; the center comes first.
    pair_distances : `numpy.ndarray`
        Distances of the k(k-1)/2 unordered member pairs, in
        `numpy.triu_indices` order of ``members``.
    """

    center: int
    members: np.ndarray
    pair_distances: np.ndarray

    @property
    def k(self) -> int:
        return len(self.members)


class EcdfTransform:
    """Empirical cumulative distribution function of pooled distances.

    F(t) = (number of pooled values <= t) / (pool size).

    Parameters
    ----------
    pooled : `numpy.ndarray`
        The pooled distances, duplicates included. Need not be sorted.
    """

    def __init__(self, pooled: np.ndarray) -> None:
        values = np.sort(np.asarray(pooled, dtype=np.float64).ravel())
        if values.size == 0:
            raise ValueError("Cannot fit an empirical CDF to zero values.")
        values.setflags(write=False)
        self.sorted_values = values

    @property
    def size(self) -> int:
        return self.sorted_values.size

    def counts(self, t: np.ndarray | float) -> np.ndarray:
        """Return the number of pooled values <= t."""
        return np.searchsorted(self.sorted_values, t, side="right")

    def __call__(self, t: np.ndarray | float) -> np.ndarray:
        return self.counts(t) / self.size


def build_distance_matrix(
    cloud: PointCloud, spec: DistanceSpec | None = None
) -> np.ndarray:
    """Compute the symmetric matrix of pairwise distances.

    Parameters
    ----------
    cloud : `PointCloud`
        The points.
    spec : `DistanceSpec` or `None`, optional
        The distance function; Euclidean if None.

    Returns
    -------
    matrix : `numpy.ndarray`
        Shape (n, n); symmetric with a zero diagonal.
    """
    if spec is None:
        spec = DistanceSpec()
    if spec.kind == DistanceKind.PRECOMPUTED:
        assert spec.matrix is not None
        if spec.matrix.shape[0] != cloud.n:
            raise ValueError(
                f"Precomputed matrix has shape {spec.matrix.shape} for {cloud.n} points."
            )
        return np.array(spec.matrix)
    if cloud.n == 1:
        return np.zeros((1, 1))
    # squareform of the condensed form is exactly symmetric.
    condensed = distance.pdist(cloud.points, metric=SCIPY_METRICS[spec.kind])
    return distance.squareform(condensed)


def _validate_square(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"Distance matrix must be square; got {matrix.shape}.")
    return matrix


def knn_neighborhoods(matrix: np.ndarray, k: int) -> list[Neighborhood]:
    """Return the k-nearest-point neighborhood of every point.

    Members are sorted by nondecreasing distance to the center, ties broken
    by ascending point index; the center itself always comes first.

    Parameters
    ----------
    matrix : `numpy.ndarray`
        Distance matrix, shape (n, n).
    k : `int`
        Neighborhood size, center included; 1 <= k <= n.

    Returns
    -------
    neighborhoods : `list` [`Neighborhood`]
        One neighborhood per point, in point order.
    """
    matrix = _validate_square(matrix)
    n = matrix.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"Need 1 <= k <= n; got {k=} and {n=}.")
    keys = matrix.copy()
    np.fill_diagonal(keys, -np.inf)
    members = np.argsort(keys, axis=1, kind="stable")[:, :k]
    rows, cols = np.triu_indices(k, 1)
    neighborhoods = []
    for center in range(n):
        nb_members = members[center]
        pair_distances = matrix[nb_members[rows], nb_members[cols]]
        neighborhoods.append(
            Neighborhood(
                center=center, members=nb_members, pair_distances=pair_distances
            )
        )
    return neighborhoods


def fit_ecdf(neighborhoods: typing.Sequence[Neighborhood]) -> EcdfTransform:
    """Fit the empirical CDF of the distances pooled over all
    neighborhoods.

    A distance occurring in several neighborhoods is counted once per
    occurrence.
    """
    if len(neighborhoods) == 0:
        raise ValueError("Need at least one neighborhood.")
    pooled = np.concatenate([nb.pair_distances for nb in neighborhoods])
    if pooled.size == 0:
        raise ValueError("All neighborhoods have empty pair distances (k=1).")
    return EcdfTransform(pooled)


def transform_distances(matrix: np.ndarray, ecdf: EcdfTransform) -> np.ndarray:
    """Map every distance through the empirical CDF.

    The diagonal is forced to zero.
    """
    matrix = _validate_square(matrix)
    transformed = ecdf(matrix)
    np.fill_diagonal(transformed, 0.0)
    return transformed


def read_point_cloud(
    path: str | pathlib.Path, log: logging.Logger | None = None
) -> PointCloud:
    """Read a point cloud CSV file.

    An ``id`` column, when present, holds the point identifiers; ``label``
    and ``is_noise`` columns are ignored; all other columns are
    coordinates.

    Raises
    ------
    InputFormatError
        If the file is empty, has no coordinate columns or holds
        non-numeric coordinates.
    """
    log = log or logging.getLogger(__name__)
    try:
        frame = pd.read_csv(path, dtype={ID_COLUMN: str})
    except pd.errors.EmptyDataError as e:
        raise InputFormatError(f"Point file {path} is empty.") from e
    except pd.errors.ParserError as e:
        raise InputFormatError(f"Cannot parse point file {path}: {e}") from e
    coordinate_columns = [
        column
        for column in frame.columns
        if column != ID_COLUMN and column not in IGNORED_COLUMNS
    ]
    if not coordinate_columns or len(frame) == 0:
        raise InputFormatError(f"Point file {path} has no coordinates.")
    try:
        points = frame[coordinate_columns].to_numpy(dtype=np.float64)
    except ValueError as e:
        raise InputFormatError(f"Non-numeric coordinates in {path}: {e}") from e
    if not np.all(np.isfinite(points)):
        raise InputFormatError(f"Missing or infinite coordinates in {path}.")
    ids = None
    if ID_COLUMN in frame.columns:
        ids = tuple(frame[ID_COLUMN].astype(str))
        if len(set(ids)) != len(ids):
            raise InputFormatError(f"Duplicate point ids in {path}.")
    log.debug(f"Read {len(points)} points of dimension {points.shape[1]} from {path}.")
    return PointCloud(points=points, ids=ids)


def write_point_cloud(
    cloud: PointCloud,
    path: str | pathlib.Path,
    columns: typing.Sequence[str] | None = None,
) -> None:
    """Write a point cloud as CSV: ``id`` then one column per coordinate.

    Parameters
    ----------
    cloud : `PointCloud`
        The points.
    path : `str` or `pathlib.Path`
        Output file.
    columns : sequence of `str` or `None`, optional
        Coordinate column names; ``x0``, ``x1``, ... if None.
    """
    if columns is None:
        columns = [f"x{i}" for i in range(cloud.dimension)]
    if len(columns) != cloud.dimension:
        raise ValueError(f"Got {len(columns)} column names for {cloud.dimension=}.")
    frame = pd.DataFrame(cloud.points, columns=list(columns))
    frame.insert(0, ID_COLUMN, list(cloud.point_ids()))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
