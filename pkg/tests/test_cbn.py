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

import logging
import math
import unittest

import numpy as np
import pytest
from lsst.ts import cbnclustering


def two_blobs(
    seed: int = 0, count: int = 80
) -> tuple[cbnclustering.PointCloud, np.ndarray]:
    """Two uniform squares of side 1, 10 apart."""
    rng = np.random.default_rng(seed)
    points = np.concatenate(
        [rng.uniform(0, 1, size=(count, 2)), rng.uniform(10, 11, size=(count, 2))]
    )
    truth = np.repeat([0, 1], count)
    return cbnclustering.PointCloud(points=points), truth


def profile(
    owner: int, beta0: list[int], beta1: list[int]
) -> cbnclustering.BettiProfile:
    return cbnclustering.BettiProfile(
        owner=owner, beta0=np.array(beta0), beta1=np.array(beta1)
    )


def neighborhood(center: int, members: list[int]) -> cbnclustering.Neighborhood:
    k = len(members)
    return cbnclustering.Neighborhood(
        center=center,
        members=np.array(members),
        pair_distances=np.zeros(k * (k - 1) // 2),
    )


class PartitionTestCase(unittest.TestCase):
    def test_relabel(self) -> None:
        np.testing.assert_array_equal(
            cbnclustering.relabel_by_first_appearance([5, 5, 2, -1, 7, 2]),
            [0, 0, 1, -1, 2, 1],
        )
        np.testing.assert_array_equal(
            cbnclustering.relabel_by_first_appearance([-1, -1]), [-1, -1]
        )

    def test_partition(self) -> None:
        partition = cbnclustering.Partition(labels=np.array([0, 1, 1, -1]))
        assert partition.n == 4
        assert partition.n_clusters == 2
        np.testing.assert_array_equal(partition.sizes(), [1, 2])
        np.testing.assert_array_equal(partition.members(1), [1, 2])
        assert cbnclustering.Partition(labels=np.array([-1])).n_clusters == 0

    def test_invalid(self) -> None:
        for labels in ([0, 2], [1], [0, -2]):
            with self.subTest(labels=labels):
                with pytest.raises(ValueError):
                    cbnclustering.Partition(labels=np.array(labels))


class RelativeChangeTestCase(unittest.TestCase):
    def test_relative_change(self) -> None:
        assert cbnclustering.relative_change([5, 3, 1], [5, 3, 1]) == 0.0
        assert math.isclose(
            cbnclustering.relative_change([4, 2, 1], [4, 2, 3]), 2 / math.sqrt(21)
        )
        assert cbnclustering.relative_change([0, 0, 0], [0, 0, 0]) == 0.0
        assert cbnclustering.relative_change([0, 0, 0], [0, 1, 0]) is None
        with pytest.raises(ValueError):
            cbnclustering.relative_change([1, 2], [1, 2, 3])

    def test_neighborhood_changes(self) -> None:
        neighborhoods = [neighborhood(0, [0, 1]), neighborhood(1, [1, 0])]
        profiles = [profile(0, [4, 2, 1], [0, 0, 0]), profile(1, [4, 2, 3], [0, 1, 0])]
        members, changes0, changes1 = cbnclustering.neighborhood_changes(
            neighborhoods, profiles
        )
        np.testing.assert_array_equal(members, [[0, 1], [1, 0]])
        assert changes0[0, 0] == 0
        assert math.isclose(changes0[0, 1], 2 / math.sqrt(21))
        assert changes1[0, 0] == 0
        assert np.isnan(changes1[0, 1])
        assert changes1[1, 1] == 1.0


class TausTestCase(unittest.TestCase):
    def test_upper_whisker(self) -> None:
        assert cbnclustering.upper_whisker([1, 2, 3, 4, 100]) == 4
        assert cbnclustering.upper_whisker([0.3] * 6) == 0.3
        assert cbnclustering.upper_whisker([1, 2, np.nan, 3]) == 3
        with pytest.raises(ValueError):
            cbnclustering.upper_whisker([np.nan])

    def test_default_taus(self) -> None:
        assert cbnclustering.default_taus([1, 2, 3, 4, 100], [0.5, 0.5]) == (4, 0.5)

    def test_summary(self) -> None:
        summary = cbnclustering.relative_change_summary([1, 2, 3, 4, 100, np.nan])
        assert summary["count"] == 5
        assert summary["undefined"] == 1
        assert summary["q1"] == 2
        assert summary["median"] == 3
        assert summary["q3"] == 4
        assert summary["upper_whisker"] == 4
        assert summary["max"] == 100
        assert summary["outliers"] == 1

    def test_resolve_taus(self) -> None:
        neighborhoods = [neighborhood(0, [0, 1]), neighborhood(1, [1, 0])]
        profiles = [profile(0, [2, 1], [0, 0]), profile(1, [2, 1], [0, 0])]
        params = cbnclustering.resolve_taus(
            neighborhoods, profiles, cbnclustering.TuningParams(tau1=0.7)
        )
        assert params.tau0 == 0.0
        assert params.tau1 == 0.7
        assert params.resolved


class TuningParamsTestCase(unittest.TestCase):
    def test_invalid(self) -> None:
        for kwargs in (
            dict(tau0=-1.0),
            dict(tau1=float("nan")),
            dict(min_cluster_size=0),
            dict(min_cluster_size=2, min_clusters=2),
        ):
            with self.subTest(kwargs=kwargs):
                with pytest.raises(ValueError):
                    cbnclustering.TuningParams(**kwargs)


class RefinementTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.neighborhoods = [
            neighborhood(0, [0, 1, 2]),
            neighborhood(1, [1, 0, 2]),
            neighborhood(2, [2, 1, 0]),
        ]
        self.profiles = [
            profile(0, [4, 2, 1], [0, 1, 0]),
            profile(1, [4, 2, 3], [0, 1, 0]),
            profile(2, [4, 2, 1], [0, 1, 0]),
        ]

    def test_threshold(self) -> None:
        graph = cbnclustering.refine_neighborhoods(
            self.neighborhoods,
            self.profiles,
            cbnclustering.TuningParams(tau0=0.42, tau1=0.5),
        )
        assert not graph.has_edge(0, 1)
        assert graph.has_edge(0, 2)
        assert graph.has_edge(2, 0)
        assert all(graph.has_edge(i, i) for i in range(3))

    def test_zero_taus(self) -> None:
        graph = cbnclustering.refine_neighborhoods(
            self.neighborhoods,
            self.profiles,
            cbnclustering.TuningParams(tau0=0.0, tau1=0.0),
        )
        assert graph.edge_count == 3 + 2

    def test_infinite_taus(self) -> None:
        graph = cbnclustering.refine_neighborhoods(
            self.neighborhoods,
            self.profiles,
            cbnclustering.TuningParams(tau0=math.inf, tau1=math.inf),
        )
        unrefined = cbnclustering.refine_neighborhoods(
            self.neighborhoods,
            self.profiles,
            cbnclustering.TuningParams(refine=False),
        )
        assert graph.edge_count == 9
        assert (graph.adjacency != unrefined.adjacency).nnz == 0

    def test_undefined_change_is_rejected(self) -> None:
        profiles = [profile(0, [1, 1], [0, 0]), profile(1, [1, 1], [1, 0])]
        graph = cbnclustering.refine_neighborhoods(
            [neighborhood(0, [0, 1]), neighborhood(1, [1, 0])],
            profiles,
            cbnclustering.TuningParams(tau0=math.inf, tau1=math.inf),
        )
        assert not graph.has_edge(0, 1)
        assert graph.has_edge(1, 0)

    def test_monotone_in_taus(self) -> None:
        rng = np.random.default_rng(13)
        cloud = cbnclustering.PointCloud(points=rng.normal(size=(150, 2)))
        matrix = cbnclustering.build_distance_matrix(cloud)
        neighborhoods = cbnclustering.knn_neighborhoods(matrix, 6)
        transformed = cbnclustering.transform_distances(
            matrix, cbnclustering.fit_ecdf(neighborhoods)
        )
        profiles = cbnclustering.compute_profiles(
            neighborhoods, transformed, cbnclustering.ThresholdGrid.uniform()
        )
        taus = [0.0, 0.1, 0.25, 0.5, 1.0, math.inf]
        adjacency = {
            (tau0, tau1): cbnclustering.refine_neighborhoods(
                neighborhoods,
                profiles,
                cbnclustering.TuningParams(tau0=tau0, tau1=tau1),
            ).adjacency.toarray()
            for tau0 in taus
            for tau1 in taus
        }
        for (tau0, tau1), edges in adjacency.items():
            for (larger0, larger1), larger_edges in adjacency.items():
                if larger0 >= tau0 and larger1 >= tau1:
                    with self.subTest(taus=(tau0, tau1), larger=(larger0, larger1)):
                        assert not np.any(edges & ~larger_edges)

    def test_unresolved(self) -> None:
        with pytest.raises(ValueError):
            cbnclustering.refine_neighborhoods(
                self.neighborhoods, self.profiles, cbnclustering.TuningParams()
            )


class ExtractClustersTestCase(unittest.TestCase):
    def test_modes(self) -> None:
        # Edges 0->1 and 1->0; point 2 only has its self-loop.
        graph = cbnclustering.NeighborhoodGraph.from_members(
            np.array([[0, 1], [1, 0], [2, 2]]), np.ones((3, 2), dtype=bool)
        )
        # The same with an extra edge 1->2.
        graph_with_bridge = cbnclustering.NeighborhoodGraph.from_members(
            np.array([[0, 1, 0], [1, 0, 2], [2, 2, 2]]), np.ones((3, 3), dtype=bool)
        )
        np.testing.assert_array_equal(
            cbnclustering.extract_clusters(graph).labels, [0, 0, 1]
        )
        np.testing.assert_array_equal(
            cbnclustering.extract_clusters(
                graph_with_bridge, cbnclustering.ComponentMode.STRONG
            ).labels,
            [0, 0, 1],
        )
        np.testing.assert_array_equal(
            cbnclustering.extract_clusters(
                graph_with_bridge, cbnclustering.ComponentMode.WEAK
            ).labels,
            [0, 0, 0],
        )

    def test_strong_refines_weak(self) -> None:
        rng = np.random.default_rng(14)
        n, k = 40, 4
        for trial in range(100):
            members = np.array(
                [
                    [i, *rng.choice(np.delete(np.arange(n), i), k - 1, replace=False)]
                    for i in range(n)
                ]
            )
            retained = rng.uniform(size=(n, k)) < 0.6
            retained[:, 0] = True
            graph = cbnclustering.NeighborhoodGraph.from_members(members, retained)
            strong = cbnclustering.extract_clusters(
                graph, cbnclustering.ComponentMode.STRONG
            )
            weak = cbnclustering.extract_clusters(
                graph, cbnclustering.ComponentMode.WEAK
            )
            with self.subTest(trial=trial):
                assert strong.n_clusters >= weak.n_clusters
                for label in range(strong.n_clusters):
                    assert np.unique(weak.labels[strong.members(label)]).size == 1

    def test_isolated(self) -> None:
        members = np.arange(4)[:, np.newaxis]
        graph = cbnclustering.NeighborhoodGraph.from_members(
            members, np.ones((4, 1), dtype=bool)
        )
        assert cbnclustering.extract_clusters(graph).n_clusters == 4

    def test_missing_self_loop(self) -> None:
        with pytest.raises(ValueError):
            cbnclustering.NeighborhoodGraph.from_members(
                np.array([[0, 1], [1, 0]]), np.array([[True, True], [False, True]])
            )


class DepthTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.log = logging.getLogger(type(self).__name__)

    def test_depth(self) -> None:
        depth = cbnclustering.mahalanobis_depth(
            np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros(2), np.eye(2)
        )
        np.testing.assert_allclose(depth, [1.0, 0.5])

    def test_unchanged(self) -> None:
        cloud, _ = two_blobs()
        partition = cbnclustering.Partition.from_labels(np.arange(cloud.n) % 3)
        result = cbnclustering.reassign_small_clusters(
            partition, cloud, min_size=1, log=self.log
        )
        np.testing.assert_array_equal(result.labels, partition.labels)

    def test_reassign(self) -> None:
        cloud, truth = two_blobs()
        labels = truth.copy()
        # Split off two points of each blob.
        labels[[0, 1]] = 2
        labels[[100, 101]] = 3
        partition = cbnclustering.Partition.from_labels(labels)
        result = cbnclustering.reassign_small_clusters(
            partition, cloud, min_size=5, log=self.log
        )
        np.testing.assert_array_equal(result.labels, truth)

        by_count = cbnclustering.reassign_small_clusters(
            partition, cloud, min_clusters=2, log=self.log
        )
        np.testing.assert_array_equal(by_count.labels, truth)

    def test_degenerate_survivor(self) -> None:
        # The surviving cluster lies on a line; its covariance is singular.
        points = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 0.1]])
        cloud = cbnclustering.PointCloud(points=points)
        partition = cbnclustering.Partition(labels=np.array([0, 0, 0, 1]))
        with self.assertLogs(self.log, level=logging.WARNING):
            result = cbnclustering.reassign_small_clusters(
                partition, cloud, min_size=2, log=self.log
            )
        np.testing.assert_array_equal(result.labels, [0, 0, 0, 0])

    def test_no_survivor(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0, 0.0], [5.0, 5.0]])
        partition = cbnclustering.Partition(labels=np.array([0, 1]))
        with pytest.raises(cbnclustering.ProcessingError):
            cbnclustering.reassign_small_clusters(partition, cloud, min_size=2)


class AssignToNearestTestCase(unittest.TestCase):
    def test_assign(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0], [1.0], [4.0], [5.0], [2.5]])
        matrix = cbnclustering.build_distance_matrix(cloud)
        labels = cbnclustering.assign_to_nearest(
            matrix, np.array([0, 3]), np.array([7, 9])
        )
        # Point 4 is equally near to both; the lower sample index wins.
        np.testing.assert_array_equal(labels, [7, 7, 9, 9, 7])


class RunCbnTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.log = logging.getLogger(type(self).__name__)

    def test_two_blobs(self) -> None:
        cloud, truth = two_blobs()
        result = cbnclustering.run_cbn(cloud, k=8, log=self.log)
        assert result.auto_taus == (True, True)
        assert 0 <= result.tau0 and 0 <= result.tau1
        assert len(result.profiles) == cloud.n
        # No cluster spans both blobs.
        for label in range(result.partition.n_clusters):
            assert len(set(truth[result.partition.members(label)])) == 1
        # A stray small component joins its blob by depth.
        reassigned = cbnclustering.run_cbn(
            cloud, k=8, params=cbnclustering.TuningParams(min_cluster_size=5)
        )
        assert reassigned.partition.n_clusters == 2
        np.testing.assert_array_equal(reassigned.partition.labels, truth)

        weak = cbnclustering.run_cbn(
            cloud,
            k=8,
            params=cbnclustering.TuningParams(
                tau0=math.inf, tau1=math.inf, mode=cbnclustering.ComponentMode.WEAK
            ),
        )
        np.testing.assert_array_equal(weak.partition.labels, truth)
        assert weak.auto_taus == (False, False)

    def test_refined_clusters_refine_unrefined(self) -> None:
        cloud, _ = two_blobs(seed=1)
        refined = cbnclustering.run_cbn(cloud, k=8)
        unrefined = cbnclustering.run_cbn(
            cloud, k=8, params=cbnclustering.TuningParams(refine=False)
        )
        assert math.isinf(unrefined.tau0)
        assert refined.partition.n_clusters >= unrefined.partition.n_clusters
        for label in range(refined.partition.n_clusters):
            members = refined.partition.members(label)
            assert len(set(unrefined.partition.labels[members])) == 1

    def test_global_neighborhood(self) -> None:
        rng = np.random.default_rng(8)
        cloud = cbnclustering.PointCloud(points=rng.normal(size=(10, 2)))
        result = cbnclustering.run_cbn(cloud, k=10)
        assert result.partition.n_clusters == 1
        assert result.tau0 == 0

    def test_deterministic(self) -> None:
        cloud, _ = two_blobs(seed=2, count=150)
        single = cbnclustering.run_cbn(cloud, k=6, threads=1)
        multi = cbnclustering.run_cbn(cloud, k=6, threads=3)
        np.testing.assert_array_equal(single.partition.labels, multi.partition.labels)
        assert single.tau0 == multi.tau0 and single.tau1 == multi.tau1

    def test_permutation_invariant(self) -> None:
        rng = np.random.default_rng(15)
        points = np.concatenate(
            [rng.normal(center, 0.5, size=(40, 2)) for center in (0, 4, 8)]
        )
        result = cbnclustering.run_cbn(cbnclustering.PointCloud(points=points), k=8)
        for trial in range(3):
            order = rng.permutation(len(points))
            shuffled = cbnclustering.run_cbn(
                cbnclustering.PointCloud(points=points[order]), k=8
            )
            # Back to the original point order.
            labels = shuffled.partition.labels[np.argsort(order)]
            with self.subTest(trial=trial):
                assert shuffled.tau0 == result.tau0
                assert shuffled.tau1 == result.tau1
                np.testing.assert_array_equal(
                    cbnclustering.relabel_by_first_appearance(labels),
                    result.partition.labels,
                )

    def test_min_clusters(self) -> None:
        cloud, truth = two_blobs(seed=3)
        result = cbnclustering.run_cbn(
            cloud,
            k=8,
            params=cbnclustering.TuningParams(
                tau0=math.inf,
                tau1=math.inf,
                mode=cbnclustering.ComponentMode.WEAK,
                min_clusters=2,
            ),
        )
        np.testing.assert_array_equal(result.partition.labels, truth)

    def test_subsample(self) -> None:
        cloud, truth = two_blobs(seed=4)
        params = cbnclustering.TuningParams(
            tau0=math.inf, tau1=math.inf, mode=cbnclustering.ComponentMode.WEAK
        )
        result = cbnclustering.run_cbn(
            cloud, k=8, params=params, subsample=100, seed=1
        )
        assert result.sample is not None and result.sample.size == 100
        assert len(result.profiles) == 100
        assert result.partition.n == cloud.n
        assert result.partition.n_clusters == 2
        for label in range(2):
            assert len(set(truth[result.partition.members(label)])) == 1

    def test_errors(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0, 0.0]])
        with pytest.raises(cbnclustering.ProcessingError):
            cbnclustering.run_cbn(cloud)
        cloud, _ = two_blobs()
        with pytest.raises(ValueError):
            cbnclustering.run_cbn(cloud, k=1)
