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
import unittest

import numpy as np
import pytest
from lsst.ts import cbnclustering
from scipy import sparse
from scipy.cluster import hierarchy
from scipy.sparse import csgraph
from scipy.spatial import distance


def three_blobs(seed: int = 0) -> tuple[cbnclustering.PointCloud, np.ndarray]:
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
    points = np.concatenate([center + rng.normal(size=(30, 2)) for center in centers])
    return cbnclustering.PointCloud(points=points), np.repeat([0, 1, 2], 30)


class KMeansTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.log = logging.getLogger(type(self).__name__)

    def test_blobs(self) -> None:
        cloud, truth = three_blobs()
        result = cbnclustering.kmeans(cloud, 3, seed=1, log=self.log)
        counts = cbnclustering.pair_counts(truth, result.partition)
        assert counts.fp == 0 and counts.fn == 0
        assert result.centroids.shape == (3, 2)
        assert np.all(np.diff(result.objective_history) <= 1e-9)

    def test_deterministic(self) -> None:
        cloud, _ = three_blobs(seed=2)
        a = cbnclustering.kmeans(cloud, 4, seed=5)
        b = cbnclustering.kmeans(cloud, 4, seed=5)
        np.testing.assert_array_equal(a.partition.labels, b.partition.labels)
        assert a.objective_history == b.objective_history

    def test_single_cluster(self) -> None:
        cloud, _ = three_blobs()
        result = cbnclustering.kmeans(cloud, 1)
        assert result.partition.n_clusters == 1
        np.testing.assert_allclose(result.centroids[0], cloud.points.mean(axis=0))

    def test_identical_points(self) -> None:
        cloud = cbnclustering.PointCloud(points=np.zeros((5, 2)))
        result = cbnclustering.kmeans(cloud, 2)
        assert result.objective == 0

    def test_invalid(self) -> None:
        cloud = cbnclustering.PointCloud(points=np.zeros((3, 2)))
        for n_clusters in (0, 4):
            with self.subTest(n_clusters=n_clusters):
                with pytest.raises(ValueError):
                    cbnclustering.kmeans(cloud, n_clusters)
        with pytest.raises(ValueError):
            cbnclustering.kmeans(cloud, 2, max_iterations=0)

    def test_best_of(self) -> None:
        cloud, _ = three_blobs(seed=3)
        seeds = range(5)
        best = cbnclustering.kmeans_best_of(cloud, 3, seeds)
        objectives = [cbnclustering.kmeans(cloud, 3, seed=s).objective for s in seeds]
        assert best.objective == min(objectives)
        with pytest.raises(ValueError):
            cbnclustering.kmeans_best_of(cloud, 3, [])


class HierarchicalTestCase(unittest.TestCase):
    def test_heights_match_scipy(self) -> None:
        rng = np.random.default_rng(4)
        points = rng.uniform(size=(25, 2))
        cloud = cbnclustering.PointCloud(points=points)
        condensed = distance.pdist(points)
        for linkage in cbnclustering.Linkage:
            with self.subTest(linkage=linkage):
                result = cbnclustering.hierarchical(cloud, linkage=linkage)
                expected = hierarchy.linkage(condensed, method=linkage.value)
                assert result.dendrogram.shape == (24, 4)
                np.testing.assert_allclose(
                    result.dendrogram[:, 2], expected[:, 2], rtol=1e-10
                )
                assert result.dendrogram[-1, 3] == 25

    def test_cuts_match_scipy(self) -> None:
        rng = np.random.default_rng(6)
        points = rng.uniform(size=(30, 2))
        cloud = cbnclustering.PointCloud(points=points)
        expected = hierarchy.linkage(distance.pdist(points), method="single")
        for n_clusters in (1, 4, 30):
            with self.subTest(n_clusters=n_clusters):
                result = cbnclustering.hierarchical(cloud, n_clusters=n_clusters)
                reference = hierarchy.fcluster(
                    expected, n_clusters, criterion="maxclust"
                )
                counts = cbnclustering.pair_counts(reference, result.partition)
                assert result.partition.n_clusters == n_clusters
                assert counts.fp == 0 and counts.fn == 0

    def test_cut_height(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0], [1.0], [3.0], [10.0]])
        np.testing.assert_array_equal(
            cbnclustering.hierarchical(cloud, cut_height=2.5).partition.labels,
            [0, 0, 0, 1],
        )
        # Merges at exactly the cut height are not applied.
        np.testing.assert_array_equal(
            cbnclustering.hierarchical(cloud, cut_height=2.0).partition.labels,
            [0, 0, 1, 2],
        )
        np.testing.assert_array_equal(
            cbnclustering.hierarchical(cloud, cut_height=0.0).partition.labels,
            [0, 1, 2, 3],
        )

    def test_single_linkage_is_threshold_graph(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0], [1.0], [5.0]])
        result = cbnclustering.hierarchical(cloud, cut_height=2.0)
        np.testing.assert_array_equal(result.partition.labels, [0, 0, 1])
        rng = np.random.default_rng(9)
        points = rng.uniform(size=(40, 2))
        matrix = distance.squareform(distance.pdist(points))
        for height in (0.05, 0.1, 0.2):
            with self.subTest(height=height):
                result = cbnclustering.hierarchical(
                    cbnclustering.PointCloud(points=points), cut_height=height
                )
                _, components = csgraph.connected_components(
                    sparse.csr_matrix(np.triu(matrix < height, 1))
                )
                counts = cbnclustering.pair_counts(components, result.partition)
                assert counts.fp == 0 and counts.fn == 0

    def test_gap_cut(self) -> None:
        cloud, truth = three_blobs()
        result = cbnclustering.hierarchical(cloud)
        counts = cbnclustering.pair_counts(truth, result.partition)
        assert counts.fp == 0 and counts.fn == 0
        heights = result.dendrogram[:, 2]
        assert heights[-3] < result.cut_height < heights[-2]

    def test_small(self) -> None:
        single = cbnclustering.PointCloud(points=[[1.0, 1.0]])
        result = cbnclustering.hierarchical(single)
        assert result.dendrogram.shape == (0, 4)
        assert result.partition.n_clusters == 1
        pair = cbnclustering.PointCloud(points=[[0.0], [1.0]])
        assert cbnclustering.hierarchical(pair).partition.n_clusters == 1

    def test_precomputed_matrix(self) -> None:
        matrix = np.array(
            [
                [0.0, 1.0, 5.0, 6.0],
                [1.0, 0.0, 5.0, 6.0],
                [5.0, 5.0, 0.0, 1.5],
                [6.0, 6.0, 1.5, 0.0],
            ]
        )
        result = cbnclustering.hierarchical(
            matrix, linkage=cbnclustering.Linkage.COMPLETE, n_clusters=2
        )
        np.testing.assert_array_equal(result.partition.labels, [0, 0, 1, 1])
        np.testing.assert_allclose(result.dendrogram[:, 2], [1.0, 1.5, 6.0])

    def test_invalid(self) -> None:
        cloud = cbnclustering.PointCloud(points=np.zeros((3, 1)))
        with pytest.raises(ValueError):
            cbnclustering.hierarchical(cloud, cut_height=1.0, n_clusters=2)
        with pytest.raises(ValueError):
            cbnclustering.hierarchical(cloud, n_clusters=4)
        with pytest.raises(ValueError):
            cbnclustering.hierarchical(cloud, cut_height=-1.0)
        with pytest.raises(ValueError):
            cbnclustering.hierarchical(np.zeros((2, 3)))


class DbscanTestCase(unittest.TestCase):
    def test_core_border_noise(self) -> None:
        cloud = cbnclustering.PointCloud(
            points=[[0.0], [0.5], [1.0], [1.8], [10.0]]
        )
        partition = cbnclustering.dbscan(cloud, eps=1.0, min_pts=3)
        # 1.8 is a border point and 10 is noise.
        np.testing.assert_array_equal(partition.labels, [0, 0, 0, 0, -1])

    def test_border_joins_lowest_label(self) -> None:
        cloud = cbnclustering.PointCloud(
            points=[[0.0], [0.1], [0.2], [0.3], [1.1], [1.9], [2.0], [2.1], [2.2]]
        )
        # 1.1 is a border point of both clusters.
        partition = cbnclustering.dbscan(cloud, eps=0.85, min_pts=4)
        np.testing.assert_array_equal(partition.labels, [0, 0, 0, 0, 0, 1, 1, 1, 1])
        reversed_partition = cbnclustering.dbscan(
            cbnclustering.PointCloud(points=cloud.points[::-1]), eps=0.85, min_pts=4
        )
        np.testing.assert_array_equal(
            reversed_partition.labels, [0, 0, 0, 0, 0, 1, 1, 1, 1]
        )

    def test_all_noise(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0], [5.0], [10.0]])
        partition = cbnclustering.dbscan(cloud, eps=1.0, min_pts=2)
        np.testing.assert_array_equal(partition.labels, [-1, -1, -1])
        assert partition.n_clusters == 0

    def test_min_pts_one(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0], [5.0]])
        partition = cbnclustering.dbscan(cloud, eps=1.0, min_pts=1)
        np.testing.assert_array_equal(partition.labels, [0, 1])

    def test_blobs(self) -> None:
        cloud, truth = three_blobs()
        partition = cbnclustering.dbscan(cloud, eps=3.0, min_pts=4)
        counts = cbnclustering.pair_counts(truth, partition)
        assert counts.fp == 0

    def test_invalid(self) -> None:
        cloud = cbnclustering.PointCloud(points=[[0.0]])
        with pytest.raises(ValueError):
            cbnclustering.dbscan(cloud, eps=0.0, min_pts=2)
        with pytest.raises(ValueError):
            cbnclustering.dbscan(cloud, eps=1.0, min_pts=0)


class RunBaselineTestCase(unittest.TestCase):
    def test_dispatch(self) -> None:
        cloud, truth = three_blobs()
        configs = [
            cbnclustering.BaselineConfig(
                algorithm=cbnclustering.BaselineAlgorithm.KMEANS,
                kmeans=cbnclustering.KMeansParams(n_clusters=3, seed=1),
            ),
            cbnclustering.BaselineConfig(
                algorithm=cbnclustering.BaselineAlgorithm.HIERARCHICAL,
                hierarchical=cbnclustering.HierarchicalParams(n_clusters=3),
            ),
            cbnclustering.BaselineConfig(
                algorithm=cbnclustering.BaselineAlgorithm.DBSCAN,
                dbscan=cbnclustering.DbscanParams(eps=3.0, min_pts=4),
            ),
        ]
        for config in configs:
            with self.subTest(algorithm=config.algorithm):
                partition = cbnclustering.run_baseline(cloud, config)
                assert partition.n == cloud.n
                assert cbnclustering.pair_counts(truth, partition).fp == 0

    def test_invalid_config(self) -> None:
        with pytest.raises(ValueError):
            cbnclustering.BaselineConfig(
                algorithm=cbnclustering.BaselineAlgorithm.KMEANS
            )
        with pytest.raises(ValueError):
            cbnclustering.BaselineConfig(
                algorithm=cbnclustering.BaselineAlgorithm.DBSCAN,
                kmeans=cbnclustering.KMeansParams(n_clusters=2),
            )
