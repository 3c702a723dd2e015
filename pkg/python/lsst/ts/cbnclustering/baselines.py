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
    "BaselineConfig",
    "DbscanParams",
    "HierarchicalParams",
    "HierarchicalResult",
    "KMeansParams",
    "KMeansResult",
    "dbscan",
    "gap_cut_height",
    "hierarchical",
    "kmeans",
    "kmeans_best_of",
    "run_baseline",
]

import dataclasses
import logging
import typing

import numpy as np
from scipy.sparse import csgraph

from .cbn import Partition, relabel_by_first_appearance
from .core import PointCloud, build_distance_matrix
from .enums import NOISE_LABEL, BaselineAlgorithm, Linkage
from .homology import UnionFind


@dataclasses.dataclass(frozen=True)
class KMeansParams:
    n_clusters: int
    max_iterations: int = 300
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_clusters < 1 or self.max_iterations < 1:
            raise ValueError(f"Invalid K-means parameters {self}.")


@dataclasses.dataclass(frozen=True)
class HierarchicalParams:
    """Agglomerative clustering parameters.

    At most one of ``cut_height`` and ``n_clusters`` may be set; with
    neither the dendrogram is cut in its largest height gap.
    """

    linkage: Linkage = Linkage.SINGLE
    cut_height: float | None = None
    n_clusters: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "linkage", Linkage(self.linkage))
        if self.cut_height is not None and self.n_clusters is not None:
            raise ValueError("Set at most one of cut_height and n_clusters.")
        if self.cut_height is not None and self.cut_height < 0:
            raise ValueError(f"{self.cut_height=} must be >= 0.")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ValueError(f"{self.n_clusters=} must be >= 1.")


@dataclasses.dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self) -> None:
        if not self.eps > 0 or self.min_pts < 1:
            raise ValueError(f"Need eps > 0 and min_pts >= 1; got {self}.")


@dataclasses.dataclass(frozen=True)
class BaselineConfig:
    """Choice of baseline algorithm and its parameters.

    Exactly the parameter block of ``algorithm`` must be set.
    """

    algorithm: BaselineAlgorithm
    kmeans: KMeansParams | None = None
    hierarchical: HierarchicalParams | None = None
    dbscan: DbscanParams | None = None

    def __post_init__(self) -> None:
        algorithm = BaselineAlgorithm(self.algorithm)
        object.__setattr__(self, "algorithm", algorithm)
        populated = [
            name
            for name in ("kmeans", "hierarchical", "dbscan")
            if getattr(self, name) is not None
        ]
        if populated != [algorithm.value]:
            raise ValueError(
                f"{algorithm=} needs exactly its own parameters; got {populated}."
            )


@dataclasses.dataclass(frozen=True)
class KMeansResult:
    """K-means outcome.

    Attributes
    ----------
    partition : `Partition`
        Cluster of every point.
    centroids : `numpy.ndarray`
        (K, m) final centroids, in cluster label order of the Lloyd run.
    objective_history : `list` [`float`]
        Sum of squared distances to the assigned centroid after each
        assignment step.
    """

    partition: Partition
    centroids: np.ndarray
    objective_history: list[float]

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


@dataclasses.dataclass(frozen=True)
class HierarchicalResult:
    """Agglomerative clustering outcome.

    Attributes
    ----------
    partition : `Partition`
        Clusters after cutting the dendrogram.
    dendrogram : `numpy.ndarray`
        (n-1, 4) merges in nondecreasing height order, in the layout of
        `scipy.cluster.hierarchy.linkage`: the two merged cluster ids
        (points are 0..n-1, merge i creates id n+i), the merge height and
        the size of the new cluster.
    cut_height : `float` or `None`
        The height used to cut, if cut by height.
    """

    partition: Partition
    dendrogram: np.ndarray
    cut_height: float | None


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((points[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2, axis=2)


def _kmeans_plus_plus(
    points: np.ndarray, n_clusters: int, rng: np.random.Generator
) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, n_clusters):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(n, p=closest / total))
        else:
            index = int(rng.integers(n))
        chosen.append(index)
        closest = np.minimum(closest, np.sum((points - points[index]) ** 2, axis=1))
    return points[chosen].copy()


def kmeans(
    cloud: PointCloud,
    n_clusters: int,
    seed: int = 0,
    max_iterations: int = 300,
    log: logging.Logger | None = None,
) -> KMeansResult:
    """Lloyd's K-means from k-means++ seeding.

    Iterates until the assignment no longer changes or ``max_iterations``
    is reached. A cluster that becomes empty is re-seeded at the point
    farthest from its assigned centroid.
    """
    log = log or logging.getLogger(__name__)
    if n_clusters < 1 or n_clusters > cloud.n:
        raise ValueError(f"Need 1 <= K <= n; got K={n_clusters}, n={cloud.n}.")
    if max_iterations < 1:
        raise ValueError(f"Need {max_iterations=} >= 1.")
    points = cloud.points
    rng = np.random.default_rng(seed)
    centroids = _kmeans_plus_plus(points, n_clusters, rng)
    assignment: np.ndarray | None = None
    history: list[float] = []
    for iteration in range(max_iterations):
        squared = _squared_distances(points, centroids)
        new_assignment = np.argmin(squared, axis=1)
        point_costs = squared[np.arange(len(points)), new_assignment]
        history.append(float(point_costs.sum()))
        if assignment is not None and np.array_equal(assignment, new_assignment):
            break
        assignment = new_assignment
        counts = np.bincount(assignment, minlength=n_clusters)
        for label in range(n_clusters):
            if counts[label] > 0:
                centroids[label] = points[assignment == label].mean(axis=0)
        for label in np.flatnonzero(counts == 0):
            farthest = int(np.argmax(point_costs))
            centroids[label] = points[farthest]
            point_costs[farthest] = -1.0
    log.debug(f"K-means stopped after {iteration + 1} iterations at {history[-1]}.")
    assert assignment is not None
    return KMeansResult(
        partition=Partition.from_labels(assignment),
        centroids=centroids,
        objective_history=history,
    )


def kmeans_best_of(
    cloud: PointCloud,
    n_clusters: int,
    seeds: typing.Iterable[int],
    max_iterations: int = 300,
) -> KMeansResult:
    """Return the K-means run with the lowest objective over ``seeds``
    (ties: first seed)."""
    best: KMeansResult | None = None
    for seed in seeds:
        result = kmeans(cloud, n_clusters, seed=seed, max_iterations=max_iterations)
        if best is None or result.objective < best.objective:
            best = result
    if best is None:
        raise ValueError("Need at least one seed.")
    return best


def _nearest_neighbor_chain(
    matrix: np.ndarray, linkage: Linkage
) -> list[tuple[int, int, float]]:
    """Return the merges (representative a, representative b, height) of
    agglomerative clustering, in discovery order.

    Clusters are represented by the lowest point index they contain.
    """
    n = matrix.shape[0]
    distances = np.array(matrix, dtype=np.float64)
    np.fill_diagonal(distances, np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges: list[tuple[int, int, float]] = []
    chain: list[int] = []
    while len(merges) < n - 1:
        if not chain:
            chain.append(int(np.flatnonzero(active)[0]))
        a = chain[-1]
        b = int(np.argmin(distances[a]))
        if len(chain) > 1 and distances[a, chain[-2]] <= distances[a, b]:
            b = chain[-2]
        if len(chain) < 2 or b != chain[-2]:
            chain.append(b)
            continue
        chain.pop()
        chain.pop()
        keep, drop = min(a, b), max(a, b)
        height = float(distances[a, b])
        merges.append((keep, drop, height))
        row_keep, row_drop = distances[keep], distances[drop]
        match linkage:
            case Linkage.SINGLE:
                updated = np.minimum(row_keep, row_drop)
            case Linkage.COMPLETE:
                updated = np.maximum(row_keep, row_drop)
            case Linkage.AVERAGE:
                updated = (sizes[keep] * row_keep + sizes[drop] * row_drop) / (
                    sizes[keep] + sizes[drop]
                )
            case _:
                raise ValueError(f"Unknown {linkage=}.")
        sizes[keep] += sizes[drop]
        active[drop] = False
        updated[~active] = np.inf
        updated[keep] = np.inf
        distances[keep, :] = updated
        distances[:, keep] = updated
        distances[drop, :] = np.inf
        distances[:, drop] = np.inf
    return merges


def _dendrogram(n: int, merges: list[tuple[int, int, float]]) -> np.ndarray:
    """Sort merges by height and give clusters their dendrogram ids."""
    ordered = sorted(merges, key=lambda merge: merge[2])
    union_find = UnionFind(n)
    cluster_id = {i: i for i in range(n)}
    sizes = {i: 1 for i in range(n)}
    rows = []
    for step, (a, b, height) in enumerate(ordered):
        root_a, root_b = union_find.find(a), union_find.find(b)
        id_a, id_b = sorted((cluster_id[root_a], cluster_id[root_b]))
        size = sizes[root_a] + sizes[root_b]
        union_find.union(root_a, root_b)
        root = union_find.find(root_a)
        cluster_id[root] = n + step
        sizes[root] = size
        rows.append((id_a, id_b, height, size))
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def _cut(n: int, dendrogram: np.ndarray, merge_count: int) -> np.ndarray:
    """Labels after applying the first ``merge_count`` merges."""
    union_find = UnionFind(2 * n - 1)
    for step in range(merge_count):
        a, b = int(dendrogram[step, 0]), int(dendrogram[step, 1])
        union_find.union(n + step, a)
        union_find.union(n + step, b)
    return np.array([union_find.find(i) for i in range(n)])


def gap_cut_height(dendrogram: np.ndarray) -> float:
    """Return the midpoint of the largest gap between consecutive merge
    heights; above every merge if there are fewer than two."""
    heights = dendrogram[:, 2]
    if heights.size < 2:
        return float(np.inf)
    gaps = np.diff(heights)
    index = int(np.argmax(gaps))
    return float((heights[index] + heights[index + 1]) / 2)


def hierarchical(
    data: PointCloud | np.ndarray,
    linkage: Linkage = Linkage.SINGLE,
    cut_height: float | None = None,
    n_clusters: int | None = None,
) -> HierarchicalResult:
    """Agglomerative hierarchical clustering.

    Uses the nearest-neighbor chain algorithm with Lance-Williams updates.
    Merges with height strictly below ``cut_height`` are applied; with
    ``n_clusters`` the lowest n - n_clusters merges are applied; with
    neither the cut height is `gap_cut_height`.

    Parameters
    ----------
    data : `PointCloud` or `numpy.ndarray`
        The points (Euclidean distance) or a distance matrix.
    linkage : `Linkage`, optional
        Linkage method.
    cut_height : `float` or `None`, optional
        Cut height, >= 0.
    n_clusters : `int` or `None`, optional
        Target number of clusters, 1..n.
    """
    params = HierarchicalParams(
        linkage=linkage, cut_height=cut_height, n_clusters=n_clusters
    )
    matrix = _as_matrix(data)
    n = matrix.shape[0]
    if params.n_clusters is not None and params.n_clusters > n:
        raise ValueError(f"Need n_clusters <= {n}; got {params.n_clusters}.")
    dendrogram = _dendrogram(n, _nearest_neighbor_chain(matrix, params.linkage))
    if params.n_clusters is not None:
        used_height = None
        merge_count = n - params.n_clusters
    else:
        used_height = (
            params.cut_height
            if params.cut_height is not None
            else gap_cut_height(dendrogram)
        )
        merge_count = int(np.count_nonzero(dendrogram[:, 2] < used_height))
    labels = _cut(n, dendrogram, merge_count)
    return HierarchicalResult(
        partition=Partition.from_labels(labels),
        dendrogram=dendrogram,
        cut_height=used_height,
    )


def dbscan(data: PointCloud | np.ndarray, eps: float, min_pts: int) -> Partition:
    """DBSCAN density-based clustering.

    A point is a core point if at least ``min_pts`` points, itself
    included, lie within distance ``eps``. Clusters are the connected
    components of core points; a non-core point within ``eps`` of core
    points joins the lowest-labeled of their clusters; the rest is noise
    (`NOISE_LABEL`). The result does not depend on point order beyond
    the label numbering.
    """
    params = DbscanParams(eps=eps, min_pts=min_pts)
    matrix = _as_matrix(data)
    within = matrix <= params.eps
    core = np.count_nonzero(within, axis=1) >= params.min_pts
    labels = np.full(matrix.shape[0], NOISE_LABEL, dtype=np.int64)
    if not np.any(core):
        return Partition(labels=labels)
    core_indices = np.flatnonzero(core)
    _, core_labels = csgraph.connected_components(
        within[np.ix_(core_indices, core_indices)], directed=False
    )
    labels[core_indices] = relabel_by_first_appearance(core_labels)
    for point in np.flatnonzero(~core):
        claiming = labels[core_indices[within[point, core_indices]]]
        if claiming.size > 0:
            labels[point] = claiming.min()
    return Partition(labels=labels)


def _as_matrix(data: PointCloud | np.ndarray) -> np.ndarray:
    if isinstance(data, PointCloud):
        return build_distance_matrix(data)
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"Distance matrix must be square; got {matrix.shape}.")
    return matrix


def run_baseline(
    cloud: PointCloud, config: BaselineConfig, log: logging.Logger | None = None
) -> Partition:
    """Run the baseline algorithm selected by ``config``."""
    log = log or logging.getLogger(__name__)
    log.debug(f"Running baseline {config=}.")
    match config.algorithm:
        case BaselineAlgorithm.KMEANS:
            assert config.kmeans is not None
            return kmeans(
                cloud,
                config.kmeans.n_clusters,
                seed=config.kmeans.seed,
                max_iterations=config.kmeans.max_iterations,
                log=log,
            ).partition
        case BaselineAlgorithm.HIERARCHICAL:
            assert config.hierarchical is not None
            return hierarchical(
                cloud,
                linkage=config.hierarchical.linkage,
                cut_height=config.hierarchical.cut_height,
                n_clusters=config.hierarchical.n_clusters,
            ).partition
        case BaselineAlgorithm.DBSCAN:
            assert config.dbscan is not None
            return dbscan(cloud, config.dbscan.eps, config.dbscan.min_pts)
        case _:
            raise ValueError(f"Unknown {config.algorithm=}.")
