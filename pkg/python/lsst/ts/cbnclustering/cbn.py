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
    "QUARTILE_METHOD",
    "CbnResult",
    "NeighborhoodGraph",
    "Partition",
    "TuningParams",
    "assign_to_nearest",
    "default_taus",
    "extract_clusters",
    "mahalanobis_depth",
    "neighborhood_changes",
    "reassign_small_clusters",
    "refine_neighborhoods",
    "relabel_by_first_appearance",
    "relative_change",
    "relative_change_summary",
    "resolve_taus",
    "run_cbn",
    "upper_whisker",
]

import dataclasses
import logging
import typing

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .core import (
    DistanceSpec,
    Neighborhood,
    PointCloud,
    build_distance_matrix,
    fit_ecdf,
    knn_neighborhoods,
    transform_distances,
)
from .enums import NOISE_LABEL, ComponentMode
from .exceptions import ProcessingError
from .homology import BettiProfile, ThresholdGrid, compute_profiles

# Quartile convention of the default tau rule, reported by the CLI.
QUARTILE_METHOD = "linear (type 7)"

# Relative size of the ridge added to a singular covariance.
COVARIANCE_RIDGE = 1e-9


def relabel_by_first_appearance(
    labels: np.ndarray | typing.Sequence[int],
) -> np.ndarray:
    """Renumber labels 0, 1, ... in order of the first point carrying
    each label.

    `NOISE_LABEL` is left unchanged.
    """
    labels = np.asarray(labels, dtype=np.int64)
    relabeled = np.full_like(labels, NOISE_LABEL)
    clustered = labels != NOISE_LABEL
    if not np.any(clustered):
        return relabeled
    _, first_index, inverse = np.unique(
        labels[clustered], return_index=True, return_inverse=True
    )
    rank = np.empty(first_index.size, dtype=np.int64)
    rank[np.argsort(first_index)] = np.arange(first_index.size)
    relabeled[clustered] = rank[inverse.ravel()]
    return relabeled


@dataclasses.dataclass(frozen=True)
class Partition:
    """A cluster label per point.

    Labels are 0..c-1, each used at least once; points carrying
    `NOISE_LABEL` belong to no cluster.
    """

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError(f"Labels must be one-dimensional; got {labels.shape}.")
        used = np.unique(labels[labels != NOISE_LABEL])
        if np.any(labels < NOISE_LABEL) or not np.array_equal(
            used, np.arange(used.size)
        ):
            raise ValueError("Cluster labels must be contiguous from 0.")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, labels: np.ndarray | typing.Sequence[int]) -> "Partition":
        """Make a partition from arbitrary integer labels."""
        return cls(labels=relabel_by_first_appearance(labels))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def n_clusters(self) -> int:
        """Number of clusters, noise excluded."""
        return int(np.max(self.labels, initial=NOISE_LABEL)) + 1

    def sizes(self) -> np.ndarray:
        """Return the number of points of each cluster."""
        return np.bincount(
            self.labels[self.labels != NOISE_LABEL], minlength=self.n_clusters
        )

    def members(self, label: int) -> np.ndarray:
        """Return the indices of the points with ``label``."""
        return np.flatnonzero(self.labels == label)


@dataclasses.dataclass(frozen=True)
class TuningParams:
    """Tuning parameters of CBN.

    Parameters
    ----------
    tau0, tau1 : `float` or `None`
        Upper bounds on the relative change of the Betti-0 and Betti-1
        sequences; None selects the boxplot upper whisker of all
        observed relative changes.
    mode : `ComponentMode`, optional
        Strongly or weakly connected components.
    min_cluster_size : `int` or `None`, optional
        Reassign the points of clusters smaller than this by depth.
    min_clusters : `int` or `None`, optional
        Keep the ``min_clusters`` largest clusters and reassign the others
        by depth. Mutually exclusive with ``min_cluster_size``.
    refine : `bool`, optional
        Refine the neighborhoods by Betti sequence similarity. False skips
        the refinement and clusters the plain k-nearest-neighbor graph.
    """

    tau0: float | None = None
    tau1: float | None = None
    mode: ComponentMode = ComponentMode.STRONG
    min_cluster_size: int | None = None
    min_clusters: int | None = None
    refine: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ComponentMode(self.mode))
        for name in ("tau0", "tau1"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise ValueError(f"{name}={value} must be >= 0.")
        if self.min_cluster_size is not None and self.min_clusters is not None:
            raise ValueError("Set at most one of min_cluster_size and min_clusters.")
        for name in ("min_cluster_size", "min_clusters"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name}={value} must be >= 1.")

    @property
    def resolved(self) -> bool:
        return self.tau0 is not None and self.tau1 is not None


@dataclasses.dataclass(frozen=True)
class NeighborhoodGraph:
    """Directed graph with an edge i -> j iff j is in the refined
    neighborhood of i.

    Attributes
    ----------
    adjacency : `scipy.sparse.csr_matrix`
        Boolean n x n adjacency matrix with a full diagonal.
    """

    adjacency: sparse.csr_matrix

    def __post_init__(self) -> None:
        if not np.all(self.adjacency.diagonal()):
            raise ValueError("Every point must be in its own neighborhood.")

    @classmethod
    def from_members(
        cls, members: np.ndarray, retained: np.ndarray
    ) -> "NeighborhoodGraph":
        """Build the graph from (n, k) member indices and a retention
        mask."""
        n, k = members.shape
        rows = np.repeat(np.arange(n), k)[retained.ravel()]
        cols = members.ravel()[retained.ravel()]
        adjacency = sparse.csr_matrix(
            (np.ones(rows.size, dtype=bool), (rows, cols)), shape=(n, n)
        )
        return cls(adjacency=adjacency)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.count_nonzero())

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])


@dataclasses.dataclass(frozen=True)
class CbnResult:
    """Outcome of `run_cbn` with its diagnostics.

    Attributes
    ----------
    partition : `Partition`
        Cluster label of every input point.
    tau0, tau1 : `float`
        The tuning parameters actually used.
    auto_taus : `tuple` [`bool`, `bool`]
        Whether tau0 and tau1 were selected automatically.
    profiles : `list` [`BettiProfile`]
        Betti profile of every clustered point.
    graph : `NeighborhoodGraph`
        The refined neighborhood graph.
    changes0, changes1 : `numpy.ndarray`
        Pooled relative changes over ordered pairs (i, j), j in N(i),
        j != i; NaN marks undefined changes.
    sample : `numpy.ndarray` or `None`
        Indices of the clustered subset, or None if all points were
        clustered.
    """

    partition: Partition
    tau0: float
    tau1: float
    auto_taus: tuple[bool, bool]
    profiles: list[BettiProfile]
    graph: NeighborhoodGraph
    changes0: np.ndarray
    changes1: np.ndarray
    sample: np.ndarray | None = None


def relative_change(
    ref: np.ndarray | typing.Sequence[float],
    other: np.ndarray | typing.Sequence[float],
) -> float | None:
    """Return ||other - ref|| / ||ref|| in the Euclidean norm.

    Returns
    -------
    change : `float` or `None`
        0 when both vectors are zero; None (undefined, rejected by any
        tau) when only ``ref`` is zero.
    """
    ref = np.asarray(ref, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    if ref.shape != other.shape:
        raise ValueError(f"Length mismatch: {ref.shape} != {other.shape}.")
    numerator = float(np.linalg.norm(other - ref))
    denominator = float(np.linalg.norm(ref))
    if denominator == 0:
        return 0.0 if numerator == 0 else None
    return numerator / denominator


def _betti_arrays(
    profiles: typing.Sequence[BettiProfile], n: int
) -> tuple[np.ndarray, np.ndarray]:
    owners = [profile.owner for profile in profiles]
    if sorted(owners) != list(range(n)):
        raise ValueError(f"Profiles must cover the {n} points exactly once.")
    order = np.argsort(owners)
    beta0 = np.stack([profiles[i].beta0 for i in order]).astype(np.float64)
    beta1 = np.stack([profiles[i].beta1 for i in order]).astype(np.float64)
    return beta0, beta1


def _vector_changes(betti: np.ndarray, members: np.ndarray) -> np.ndarray:
    numerator = np.linalg.norm(betti[members] - betti[:, np.newaxis, :], axis=2)
    denominator = np.broadcast_to(
        np.linalg.norm(betti, axis=1)[:, np.newaxis], numerator.shape
    )
    changes = np.full(numerator.shape, np.nan)
    nonzero = denominator > 0
    changes[nonzero] = numerator[nonzero] / denominator[nonzero]
    changes[~nonzero & (numerator == 0)] = 0.0
    return changes


def neighborhood_changes(
    neighborhoods: typing.Sequence[Neighborhood],
    profiles: typing.Sequence[BettiProfile],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Compute the relative Betti changes from every point to each of
    its neighbors.

    Returns
    -------
    members : `numpy.ndarray`
        (n, k) neighborhood member indices.
    changes0, changes1 : `numpy.ndarray`
        (n, k) relative changes of the Betti-0 and Betti-1 sequences of
        ``members[i, j]`` with respect to point i; NaN where undefined.
    """
    members = np.stack([nb.members for nb in neighborhoods])
    beta0, beta1 = _betti_arrays(profiles, len(neighborhoods))
    return members, _vector_changes(beta0, members), _vector_changes(beta1, members)


def upper_whisker(values: np.ndarray | typing.Sequence[float]) -> float:
    """Return the largest value <= Q3 + 1.5 IQR.

    Non-finite values are dropped first; quartiles use linear
    interpolation between order statistics.
    """
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise ValueError("No finite relative changes to select tau from.")
    q1, q3 = np.percentile(values, [25, 75])
    fence = q3 + 1.5 * (q3 - q1)
    return float(np.max(values[values <= fence]))


def default_taus(
    changes0: np.ndarray | typing.Sequence[float],
    changes1: np.ndarray | typing.Sequence[float],
) -> tuple[float, float]:
    """Return the default (tau0, tau1): the boxplot upper whiskers of the
    relative changes in Betti-0 and Betti-1."""
    return upper_whisker(changes0), upper_whisker(changes1)


def relative_change_summary(
    values: np.ndarray | typing.Sequence[float],
) -> dict[str, float | int]:
    """Return the boxplot statistics of a set of relative changes."""
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise ValueError("No finite relative changes to summarize.")
    q1, median, q3 = np.percentile(finite, [25, 50, 75])
    whisker = upper_whisker(finite)
    return dict(
        count=int(finite.size),
        undefined=int(values.size - finite.size),
        min=float(finite.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        upper_whisker=whisker,
        max=float(finite.max()),
        outliers=int(np.count_nonzero(finite > whisker)),
    )


def _pooled(members: np.ndarray, changes: np.ndarray) -> np.ndarray:
    centers = np.arange(members.shape[0])[:, np.newaxis]
    return changes[members != centers]


def _with_default_taus(
    params: TuningParams, pooled0: np.ndarray, pooled1: np.ndarray
) -> TuningParams:
    auto0 = upper_whisker(pooled0) if params.tau0 is None else params.tau0
    auto1 = upper_whisker(pooled1) if params.tau1 is None else params.tau1
    return dataclasses.replace(params, tau0=auto0, tau1=auto1)


def resolve_taus(
    neighborhoods: typing.Sequence[Neighborhood],
    profiles: typing.Sequence[BettiProfile],
    params: TuningParams,
) -> TuningParams:
    """Return ``params`` with automatic taus replaced by `default_taus`.

    The defaults are computed from the relative changes pooled over all
    ordered pairs (i, j) with j in N(i) and j != i.
    """
    if params.resolved:
        return params
    members, changes0, changes1 = neighborhood_changes(neighborhoods, profiles)
    return _with_default_taus(
        params, _pooled(members, changes0), _pooled(members, changes1)
    )


def refine_neighborhoods(
    neighborhoods: typing.Sequence[Neighborhood],
    profiles: typing.Sequence[BettiProfile],
    params: TuningParams,
) -> NeighborhoodGraph:
    """Keep j in N(i) iff both relative Betti changes are within the
    taus.

    Undefined changes fail the test; the center is always kept. With
    ``params.refine`` False every neighbor is kept.
    """
    members, changes0, changes1 = neighborhood_changes(neighborhoods, profiles)
    if params.refine:
        if not params.resolved:
            raise ValueError("Resolve automatic taus before refining.")
        # NaN compares False.
        retained = (changes0 <= params.tau0) & (changes1 <= params.tau1)
    else:
        retained = np.ones(members.shape, dtype=bool)
    retained |= members == np.arange(members.shape[0])[:, np.newaxis]
    return NeighborhoodGraph.from_members(members, retained)


def extract_clusters(
    graph: NeighborhoodGraph, mode: ComponentMode = ComponentMode.STRONG
) -> Partition:
    """Return the strongly or weakly connected components as clusters.

    Labels are numbered in order of the first point of each cluster.
    """
    connection = "strong" if ComponentMode(mode) == ComponentMode.STRONG else "weak"
    _, labels = csgraph.connected_components(
        graph.adjacency, directed=True, connection=connection
    )
    return Partition.from_labels(labels)


def _inverse_covariance(
    points: np.ndarray, log: logging.Logger
) -> np.ndarray:
    dimension = points.shape[1]
    if len(points) < 2:
        covariance = np.zeros((dimension, dimension))
    else:
        covariance = np.atleast_2d(np.cov(points, rowvar=False))
    if np.linalg.matrix_rank(covariance) < dimension:
        trace = float(np.trace(covariance))
        ridge = COVARIANCE_RIDGE * (trace / dimension if trace > 0 else 1.0)
        log.warning(f"Singular covariance of {len(points)} points; adding {ridge=}.")
        covariance = covariance + ridge * np.eye(dimension)
    return np.linalg.inv(covariance)


def mahalanobis_depth(
    points: np.ndarray, mean: np.ndarray, inverse_covariance: np.ndarray
) -> np.ndarray:
    """Return 1 / (1 + squared Mahalanobis distance) of every point."""
    diff = np.atleast_2d(points) - mean
    squared = np.einsum("ij,jk,ik->i", diff, inverse_covariance, diff)
    return 1.0 / (1.0 + np.maximum(squared, 0.0))


def reassign_small_clusters(
    partition: Partition,
    cloud: PointCloud,
    min_size: int | None = None,
    min_clusters: int | None = None,
    log: logging.Logger | None = None,
) -> Partition:
    """Move the points of small clusters to the deepest surviving cluster.

    A cluster is small if it has fewer than ``min_size`` points or, with
    ``min_clusters``, if it is not among the ``min_clusters`` largest
    (ties: lower label). Each point of a small cluster joins the surviving
    cluster that maximizes its Mahalanobis depth, ties going to the lower
    label. Cluster statistics are computed before any point moves.

    Raises
    ------
    ProcessingError
        If no surviving cluster has at least dimension + 1 points.
    """
    log = log or logging.getLogger(__name__)
    if min_size is not None and min_clusters is not None:
        raise ValueError("Set at most one of min_size and min_clusters.")
    if partition.n != cloud.n:
        raise ValueError(f"{partition.n=} != {cloud.n=}.")
    sizes = partition.sizes()
    labels = np.arange(sizes.size)
    if min_size is not None:
        small = sizes < min_size
    elif min_clusters is not None:
        ranked = sorted(labels, key=lambda label: (-sizes[label], label))
        small = np.ones(sizes.size, dtype=bool)
        small[ranked[:min_clusters]] = False
    else:
        return partition
    if not np.any(small):
        return partition

    survivors = labels[~small]
    if not np.any(sizes[survivors] >= cloud.dimension + 1):
        raise ProcessingError(
            f"No surviving cluster has at least {cloud.dimension + 1} points."
        )
    depths = []
    for label in survivors:
        points = cloud.points[partition.members(label)]
        inverse = _inverse_covariance(points, log)
        depths.append(mahalanobis_depth(cloud.points, points.mean(axis=0), inverse))
    # argmax picks the first, i.e. lowest, surviving label on ties.
    deepest = survivors[np.argmax(np.stack(depths), axis=0)]

    new_labels = partition.labels.copy()
    moved = np.isin(new_labels, labels[small])
    new_labels[moved] = deepest[moved]
    log.info(
        f"Reassigned {np.count_nonzero(moved)} points of "
        f"{np.count_nonzero(small)} small clusters."
    )
    return Partition.from_labels(new_labels)


def assign_to_nearest(
    matrix: np.ndarray, sample: np.ndarray, sample_labels: np.ndarray
) -> np.ndarray:
    """Label every point like its nearest sample point.

    Parameters
    ----------
    matrix : `numpy.ndarray`
        Full (n, n) distance matrix.
    sample : `numpy.ndarray`
        Indices of the labeled points.
    sample_labels : `numpy.ndarray`
        Label of each sample point.

    Returns
    -------
    labels : `numpy.ndarray`
        Label of every point; sample points keep their own label and ties
        go to the lower sample index.
    """
    nearest = np.argmin(matrix[:, sample], axis=1)
    labels = np.asarray(sample_labels)[nearest]
    labels[sample] = sample_labels
    return labels


def run_cbn(
    cloud: PointCloud,
    spec: DistanceSpec | None = None,
    k: int = 12,
    params: TuningParams | None = None,
    grid: ThresholdGrid | None = None,
    threads: int = 1,
    subsample: int | None = None,
    seed: int = 0,
    log: logging.Logger | None = None,
) -> CbnResult:
    """Cluster a point cloud with CBN.

    The steps are: k-nearest-point neighborhoods, empirical CDF distance
    transform, Vietoris-Rips filtration over the threshold grid, Betti
    profiles, neighborhood refinement, connected components and optional
    depth-based reassignment of small clusters.

    Parameters
    ----------
    cloud : `PointCloud`
        The points.
    spec : `DistanceSpec` or `None`, optional
        Distance function; Euclidean if None.
    k : `int`, optional
        Neighborhood size, center included; at least 2.
    params : `TuningParams` or `None`, optional
        Tuning parameters; automatic taus if None.
    grid : `ThresholdGrid` or `None`, optional
        Filtration thresholds; `ThresholdGrid.uniform` if None.
    threads : `int`, optional
        Parallelism degree for the Betti profiles. Does not affect the
        result.
    subsample : `int` or `None`, optional
        Cluster a random subset of this many points and give every other
        point the label of its nearest subset point.
    seed : `int`, optional
        Seed of the subset selection.
    log : `logging.Logger` or `None`, optional
        Logger.

    Returns
    -------
    result : `CbnResult`
        The partition and diagnostics.
    """
    log = log or logging.getLogger(__name__)
    params = params or TuningParams()
    grid = grid or ThresholdGrid.uniform()
    if k < 2:
        raise ValueError(f"Need {k=} >= 2.")

    matrix = build_distance_matrix(cloud, spec)
    sample = None
    working_cloud, working_matrix = cloud, matrix
    if subsample is not None and subsample < cloud.n:
        rng = np.random.default_rng(seed)
        sample = np.sort(rng.choice(cloud.n, size=subsample, replace=False))
        working_cloud = cloud.subset(sample)
        working_matrix = matrix[np.ix_(sample, sample)]
        log.debug(f"Clustering a subset of {subsample} of {cloud.n} points.")
    if k > working_cloud.n:
        raise ProcessingError(f"Need {k=} <= number of points {working_cloud.n}.")

    neighborhoods = knn_neighborhoods(working_matrix, k)
    ecdf = fit_ecdf(neighborhoods)
    log.debug(f"Fitted the distance CDF on {ecdf.size} pooled distances.")
    transformed = transform_distances(working_matrix, ecdf)
    profiles = compute_profiles(
        neighborhoods, transformed, grid, threads=threads, log=log
    )

    members, changes0, changes1 = neighborhood_changes(neighborhoods, profiles)
    pooled0 = _pooled(members, changes0)
    pooled1 = _pooled(members, changes1)
    auto_taus = (params.tau0 is None, params.tau1 is None)
    if params.refine and not params.resolved:
        params = _with_default_taus(params, pooled0, pooled1)
    tau0 = float("inf") if params.tau0 is None else params.tau0
    tau1 = float("inf") if params.tau1 is None else params.tau1
    log.info(f"Using {tau0=}, {tau1=} ({auto_taus=}).")

    graph = refine_neighborhoods(neighborhoods, profiles, params)
    partition = extract_clusters(graph, params.mode)
    log.debug(f"Found {partition.n_clusters} components in {graph.edge_count} edges.")
    if params.min_cluster_size is not None or params.min_clusters is not None:
        partition = reassign_small_clusters(
            partition,
            working_cloud,
            min_size=params.min_cluster_size,
            min_clusters=params.min_clusters,
            log=log,
        )

    if sample is not None:
        labels = assign_to_nearest(matrix, sample, partition.labels)
        partition = Partition.from_labels(labels)
    log.info(f"CBN found {partition.n_clusters} clusters in {cloud.n} points.")
    return CbnResult(
        partition=partition,
        tau0=tau0,
        tau1=tau1,
        auto_taus=auto_taus,
        profiles=profiles,
        graph=graph,
        changes0=pooled0,
        changes1=pooled1,
        sample=sample,
    )
