import numpy as np
import pytest

from pclabel import (
    PointCloud,
    SuperpointPartition,
    build_index,
    oversegment,
    partition_stats,
)
from pclabel.superpoint import load_partition_json, save_partition_json

from conftest import make_cloud


def plane_cloud(rng, n=200):
    pos = np.zeros((n, 3))
    pos[:, :2] = rng.random((n, 2))
    return PointCloud(pos, np.zeros((n, 3), dtype=np.uint8))


def assert_valid_partition(partition, n):
    assert len(partition) == n
    u = partition.segment_count
    ids = np.unique(partition.assignment)
    assert np.array_equal(ids, np.arange(u))
    sizes = np.array([len(s) for s in partition.segments()])
    assert sizes.sum() == n


class TestPartitionType:
    def test_rejects_sparse_ids(self):
        with pytest.raises(ValueError, match="dense"):
            SuperpointPartition(np.array([0, 2, 2]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            SuperpointPartition(np.array([-1, 0]))

    def test_segments_cover(self):
        p = SuperpointPartition(np.array([0, 1, 0, 2, 1]))
        segs = p.segments()
        assert [s.tolist() for s in segs] == [[0, 2], [1, 4], [3]]


class TestOversegment:
    def test_single_plane_one_segment(self, rng):
        cloud = plane_cloud(rng)
        normals = np.tile([0.0, 0.0, 1.0], (cloud.count, 1))
        part = oversegment(cloud, normals, build_index(cloud), 10.0, 8, 1)
        assert part.segment_count == 1

    def test_two_perpendicular_planes(self):
        # grid on z=0 for x in (0.05..1) and grid on x=0 for z in (0.05..1);
        # 10 degree threshold separates them exactly.
        ticks = np.arange(0.05, 1.0, 0.05)
        ys = np.arange(0.0, 1.0, 0.05)
        fx, fy = np.meshgrid(ticks, ys)
        floor = np.stack([fx.ravel(), fy.ravel(), np.zeros(fx.size)], axis=1)
        wz, wy = np.meshgrid(ticks, ys)
        wall = np.stack([np.zeros(wz.size), wy.ravel(), wz.ravel()], axis=1)
        pos = np.vstack([floor, wall])
        normals = np.vstack([
            np.tile([0.0, 0.0, 1.0], (len(floor), 1)),
            np.tile([1.0, 0.0, 0.0], (len(wall), 1)),
        ])
        cloud = PointCloud(pos, np.zeros((len(pos), 3), dtype=np.uint8))
        part = oversegment(cloud, normals, build_index(cloud), 10.0, 8, 1)
        assert part.segment_count == 2
        floor_ids = part.assignment[: len(floor)]
        wall_ids = part.assignment[len(floor):]
        assert len(np.unique(floor_ids)) == 1
        assert len(np.unique(wall_ids)) == 1
        assert floor_ids[0] != wall_ids[0]

    def test_threshold_180_floods_connected_graph(self, rng):
        cloud = plane_cloud(rng, 100)
        normals = rng.standard_normal((100, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        part = oversegment(cloud, normals, build_index(cloud), 180.0, 8, 1)
        assert part.segment_count == 1

    def test_deterministic(self, rng):
        cloud = make_cloud(rng, 300)
        normals = rng.standard_normal((300, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        index = build_index(cloud)
        a = oversegment(cloud, normals, index, 25.0, 8, 5)
        b = oversegment(cloud, normals, index, 25.0, 8, 5)
        assert np.array_equal(a.assignment, b.assignment)

    def test_always_valid_partition(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 200))
            cloud = make_cloud(rng, n)
            normals = rng.standard_normal((n, 3))
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
            thr = float(rng.uniform(1, 180))
            part = oversegment(cloud, normals, build_index(cloud), thr, 6,
                               int(rng.integers(1, 10)))
            assert_valid_partition(part, n)

    def test_threshold_monotonicity(self, rng):
        # with min_size=1 (no merging), a larger angle floods a superset of
        # edges, so the segment count never increases
        for _ in range(50):
            n = int(rng.integers(20, 150))
            cloud = make_cloud(rng, n)
            normals = rng.standard_normal((n, 3))
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
            index = build_index(cloud)
            counts = [
                oversegment(cloud, normals, index, thr, 6, 1).segment_count
                for thr in (5.0, 20.0, 60.0, 180.0)
            ]
            assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_rigid_motion_invariance(self, rng):
        cloud, gt, mask, normals = _small_scene(rng)
        index = build_index(cloud)
        base = oversegment(cloud, normals, index, 15.0, 8, 5)
        theta = 0.7
        rot = np.array([
            [np.cos(theta), -np.sin(theta), 0],
            [np.sin(theta), np.cos(theta), 0],
            [0, 0, 1.0],
        ])
        moved = PointCloud(cloud.positions @ rot.T + 3.0, cloud.colors)
        moved_part = oversegment(moved, normals @ rot.T, build_index(moved),
                                 15.0, 8, 5)
        assert np.array_equal(base.assignment, moved_part.assignment)

    def test_min_size_merging(self, rng):
        cloud = make_cloud(rng, 400)
        normals = rng.standard_normal((400, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        part = oversegment(cloud, normals, build_index(cloud), 20.0, 8, 25)
        sizes = np.bincount(part.assignment)
        # any remaining under-sized segment must have no graph neighbor,
        # which cannot happen in a connected kNN graph of this density
        assert sizes.min() >= 25 or part.segment_count == 1

    def test_angle_range_validated(self, rng):
        cloud = make_cloud(rng, 10)
        normals = np.tile([0.0, 0.0, 1.0], (10, 1))
        with pytest.raises(ValueError):
            oversegment(cloud, normals, build_index(cloud), 0.0, 4, 1)
        with pytest.raises(ValueError):
            oversegment(cloud, normals, build_index(cloud), 181.0, 4, 1)

    def test_mismatched_normals(self, rng):
        cloud = make_cloud(rng, 10)
        with pytest.raises(ValueError, match="match"):
            oversegment(cloud, np.zeros((5, 3)), build_index(cloud), 10.0, 4, 1)


def _small_scene(rng):
    from pclabel import SceneSpec, generate_scene
    return generate_scene(SceneSpec(density=120.0, seed=int(rng.integers(100))))


class TestStats:
    def test_single_segment(self):
        p = SuperpointPartition(np.zeros(7, dtype=np.int64))
        stats = partition_stats(p)
        assert stats["segment_count"] == 1
        assert stats["size_histogram"] == {7: 1}

    def test_median(self):
        p = SuperpointPartition(np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 2]))
        assert partition_stats(p)["median_size"] == 3.0

    def test_sizes_sum_to_n(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 100))
            u = int(rng.integers(1, n + 1))
            assignment = rng.integers(0, u, n)
            assignment[:u] = np.arange(u)  # keep ids dense
            p = SuperpointPartition(assignment)
            stats = partition_stats(p)
            total = sum(size * count for size, count in stats["size_histogram"].items())
            assert total == n


class TestPartitionIO:
    def test_round_trip(self, tmp_path, rng):
        p = SuperpointPartition(rng.integers(0, 3, 20) % 3)
        path = tmp_path / "p.json"
        save_partition_json(p, path)
        back = load_partition_json(path)
        assert np.array_equal(back.assignment, p.assignment)

    def test_inconsistent_file_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"n": 5, "u": 1, "assignment": [0, 0, 0]}')
        with pytest.raises(ValueError, match="inconsistent"):
            load_partition_json(path)

    def test_ply_label_channel_round_trip(self, tmp_path, rng):
        from pclabel import load_labeled_ply, save_ply
        from pclabel.superpoint import partition_from_labels, partition_to_labels

        cloud = make_cloud(rng, 25)
        assignment = rng.integers(0, 4, 25)
        assignment[:4] = np.arange(4)
        p = SuperpointPartition(assignment)
        save_ply(cloud, tmp_path / "p.ply", labels=partition_to_labels(p))
        _, values = load_labeled_ply(tmp_path / "p.ply")
        back = partition_from_labels(values)
        assert np.array_equal(back.assignment, p.assignment)
