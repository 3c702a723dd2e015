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
    "SUMMARY_STATISTICS",
    "BettiProfile",
    "BettiSummary",
    "FiltrationState",
    "ThresholdGrid",
    "UnionFind",
    "betti_dynamics_summary",
    "betti_sequences",
    "compute_profiles",
]

import concurrent.futures
import dataclasses
import logging
import typing

import numpy as np

from .core import Neighborhood

# Rows of a `BettiSummary` table.
SUMMARY_STATISTICS = ("min", "q1", "median", "q3", "max")

# Number of neighborhoods handed to one worker at a time.
CHUNK_SIZE = 256


class UnionFind:
    """Disjoint-set forest over the integers 0..size-1.

    Uses union by rank and path halving.
    """

    def __init__(self, size: int) -> None:
        self.parents = list(range(size))
        self.ranks = [0] * size
        self.num_sets = size

    def find(self, a: int) -> int:
        """Return the representative of the set containing ``a``."""
        parents = self.parents
        while parents[a] != a:
            parents[a] = parents[parents[a]]
            a = parents[a]
        return a

    def union(self, a: int, b: int) -> bool:
        """Merge the sets of ``a`` and ``b``.

        Returns
        -------
        merged : `bool`
            True if two different sets were merged, False if ``a`` and
            ``b`` already were in the same set.
        """
        root_a = self.find(a)
        root_b = self.find(b)
        if root_a == root_b:
            return False
        if self.ranks[root_a] < self.ranks[root_b]:
            root_a, root_b = root_b, root_a
        self.parents[root_b] = root_a
        if self.ranks[root_a] == self.ranks[root_b]:
            self.ranks[root_a] += 1
        self.num_sets -= 1
        return True


@dataclasses.dataclass(frozen=True)
class ThresholdGrid:
    """Strictly increasing filtration thresholds in [0, 1].

    Parameters
    ----------
    thresholds : `numpy.ndarray`
        At least two strictly increasing values in [0, 1].
    """

    thresholds: np.ndarray

    def __post_init__(self) -> None:
        thresholds = np.array(self.thresholds, dtype=np.float64)
        if thresholds.ndim != 1 or thresholds.size < 2:
            raise ValueError(f"Need at least 2 thresholds; got {thresholds.size}.")
        if np.any(np.diff(thresholds) <= 0):
            raise ValueError("Thresholds must be strictly increasing.")
        if thresholds[0] < 0 or thresholds[-1] > 1:
            raise ValueError(
                f"Thresholds must lie in [0, 1]; got {thresholds[0]}..{thresholds[-1]}."
            )
        thresholds.setflags(write=False)
        object.__setattr__(self, "thresholds", thresholds)

    @classmethod
    def uniform(cls, size: int = 100) -> "ThresholdGrid":
        """Return the grid (j - 1) / size for j = 1..size.

        The default is 0.00, 0.01, ..., 0.99.
        """
        if size < 2:
            raise ValueError(f"Need {size=} >= 2.")
        return cls(thresholds=np.arange(size) / size)

    def __len__(self) -> int:
        return self.thresholds.size


class FiltrationState:
    """Vietoris-Rips filtration of a neighborhood, capped at dimension one.

    The complex at threshold eps has every member as a vertex and every
    member pair with transformed distance <= eps as an edge. Edges are
    inserted in distance order through a `UnionFind`; each insertion
    either merges two components or closes one independent cycle.

    Parameters
    ----------
    neighborhood : `Neighborhood`
        The vertices.
    transformed : `numpy.ndarray`
        Transformed distance matrix indexed by point index.
    """

    def __init__(self, neighborhood: Neighborhood, transformed: np.ndarray) -> None:
        members = neighborhood.members
        self.vertex_count = len(members)
        rows, cols = np.triu_indices(self.vertex_count, 1)
        distances = transformed[members[rows], members[cols]]
        order = np.argsort(distances, kind="stable")
        self.edges = np.column_stack((rows[order], cols[order]))
        self.distances = distances[order]
        union_find = UnionFind(self.vertex_count)
        merges = np.array(
            [union_find.union(int(a), int(b)) for a, b in self.edges], dtype=np.int64
        )
        # merge_counts[e] = number of component merges among the first e
        # edges.
        self.merge_counts = np.concatenate(([0], np.cumsum(merges)))

    def active_edge_count(self, eps: np.ndarray | float) -> np.ndarray:
        """Return the number of edges with distance <= eps."""
        return np.searchsorted(self.distances, eps, side="right")

    def betti(self, eps: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
        """Return (beta0, beta1) of the complex at threshold(s) eps."""
        edge_count = self.active_edge_count(eps)
        beta0 = self.vertex_count - self.merge_counts[edge_count]
        beta1 = edge_count - self.vertex_count + beta0
        return beta0, beta1


@dataclasses.dataclass(frozen=True)
class BettiProfile:
    """Betti-0 and Betti-1 sequences of one point over a threshold grid."""

    owner: int
    beta0: np.ndarray
    beta1: np.ndarray


@dataclasses.dataclass(frozen=True)
class BettiSummary:
    """Per-threshold distribution of Betti numbers over many profiles.

    Attributes
    ----------
    beta0 : `numpy.ndarray`
        Shape (5, l); rows are `SUMMARY_STATISTICS`.
    beta1 : `numpy.ndarray`
        Shape (5, l); rows are `SUMMARY_STATISTICS`.
    """

    beta0: np.ndarray
    beta1: np.ndarray

    def statistic(self, dimension: int, name: str) -> np.ndarray:
        """Return one row, e.g. ``statistic(0, "max")``."""
        table = self.beta0 if dimension == 0 else self.beta1
        return table[SUMMARY_STATISTICS.index(name)]


def betti_sequences(
    neighborhood: Neighborhood,
    transformed: np.ndarray,
    grid: ThresholdGrid,
    max_dimension: int = 1,
) -> BettiProfile:
    """Compute the Betti-0 and Betti-1 sequences of a neighborhood.

    Parameters
    ----------
    neighborhood : `Neighborhood`
        The neighborhood.
    transformed : `numpy.ndarray`
        Transformed distance matrix.
    grid : `ThresholdGrid`
        Thresholds; an edge is active at eps when its distance <= eps.
    max_dimension : `int`, optional
        Highest simplex dimension of the complexes. Only 1 is supported.

    Returns
    -------
    profile : `BettiProfile`
        The sequences, one value per threshold.
    """
    if max_dimension != 1:
        raise NotImplementedError(
            f"Only complexes of dimension one are supported; got {max_dimension=}."
        )
    filtration = FiltrationState(neighborhood, transformed)
    beta0, beta1 = filtration.betti(grid.thresholds)
    return BettiProfile(owner=neighborhood.center, beta0=beta0, beta1=beta1)


def _profile_chunk(
    neighborhoods: typing.Sequence[Neighborhood],
    transformed: np.ndarray,
    grid: ThresholdGrid,
) -> list[BettiProfile]:
    return [betti_sequences(nb, transformed, grid) for nb in neighborhoods]


def compute_profiles(
    neighborhoods: typing.Sequence[Neighborhood],
    transformed: np.ndarray,
    grid: ThresholdGrid,
    threads: int = 1,
    log: logging.Logger | None = None,
) -> list[BettiProfile]:
    """Compute the Betti profile of every neighborhood.

    The work is split into fixed chunks that are mapped over a thread
    pool; the result is in neighborhood order whatever ``threads`` is.
    """
    log = log or logging.getLogger(__name__)
    if threads < 1:
        raise ValueError(f"Need {threads=} >= 1.")
    chunks = [
        neighborhoods[start : start + CHUNK_SIZE]
        for start in range(0, len(neighborhoods), CHUNK_SIZE)
    ]
    log.debug(f"Computing {len(neighborhoods)} Betti profiles with {threads=}.")
    if threads == 1:
        results = [_profile_chunk(chunk, transformed, grid) for chunk in chunks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(
                executor.map(
                    _profile_chunk,
                    chunks,
                    [transformed] * len(chunks),
                    [grid] * len(chunks),
                )
            )
    return [profile for chunk in results for profile in chunk]


def betti_dynamics_summary(profiles: typing.Sequence[BettiProfile]) -> BettiSummary:
    """Summarize Betti numbers per threshold over a set of profiles.

    Quartiles use linear interpolation between order statistics.

    Raises
    ------
    ValueError
        If there are no profiles or the profiles differ in length.
    """
    if len(profiles) == 0:
        raise ValueError("Need at least one profile.")
    lengths = {len(profile.beta0) for profile in profiles}
    if len(lengths) != 1:
        raise ValueError(f"Profiles have mixed grid lengths {sorted(lengths)}.")
    percentiles = [0, 25, 50, 75, 100]
    beta0 = np.stack([profile.beta0 for profile in profiles])
    beta1 = np.stack([profile.beta1 for profile in profiles])
    return BettiSummary(
        beta0=np.percentile(beta0, percentiles, axis=0),
        beta1=np.percentile(beta1, percentiles, axis=0),
    )
