"""Geometric over-segmentation: region growing on the k-NN graph.

An edge of the neighbor graph is floodable when its endpoint normals agree
within the angle threshold and the edge is no longer than the 95th percentile
of all k-NN edge lengths (which keeps floods from jumping gaps between
parallel surfaces). Segments are the connected components of the floodable
graph, seeded in ascending point-index order; undersized segments merge into
the adjacent segment sharing the most graph edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .pointcloud import PointCloud, SpatialIndex

EDGE_LENGTH_PERCENTILE = 95.0


@dataclass(frozen=True)
class SuperpointPartition:
    """Disjoint cover of point indices by segment ids dense in [0, U)."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.assignment, dtype=np.int64))
        if a.ndim != 1:
            raise ValueError("assignment must be a 1-D id array")
        if a.size:
            ids = np.unique(a)
            expected = np.arange(ids.size)
            if ids[0] < 0 or not np.array_equal(ids, expected):
                raise ValueError("segment ids must be dense in [0, U)")
        object.__setattr__(self, "assignment", a)

    def __len__(self) -> int:
        return int(self.assignment.shape[0])

    @property
    def segment_count(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    def segments(self) -> List[np.ndarray]:
        """Member point indices per segment id."""
        order = np.argsort(self.assignment, kind="stable")
        sizes = np.bincount(self.assignment, minlength=self.segment_count)
        return np.split(order, np.cumsum(sizes)[:-1])


def _first_occurrence_relabel(labels: np.ndarray, count: int) -> np.ndarray:
    # Segment ids follow the order in which a segment's first point appears,
    # i.e. seeds processed in ascending point-index order.
    first = np.full(count, labels.size, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(labels.size))
    remap = np.empty(count, dtype=np.int64)
    remap[np.argsort(first, kind="stable")] = np.arange(count)
    return remap[labels]


def _merge_small_segments(
    labels: np.ndarray, src: np.ndarray, dst: np.ndarray, min_size: int
) -> np.ndarray:
    """Fold segments below min_size into their best graph neighbor.

    "Best" is the adjacent segment sharing the most (undirected, un-gated)
    k-NN graph edges, ties to the lower segment id. Repeats until every
    undersized segment is either merged or has no neighbor left; a merge
    product that is still undersized gets reconsidered.
    """
    count = int(labels.max()) + 1 if labels.size else 0
    if count == 0 or min_size <= 1:
        return labels
    sizes: Dict[int, int] = {
        s: int(c) for s, c in enumerate(np.bincount(labels, minlength=count))
    }
    # Unique undirected point edges, then per-segment-pair counts.
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    keep = lo != hi
    edges = np.unique(lo[keep] * labels.size + hi[keep])
    a = labels[edges // labels.size]
    b = labels[edges % labels.size]
    adj: Dict[int, Dict[int, int]] = {s: {} for s in range(count)}
    inter = a != b
    for sa, sb in zip(a[inter].tolist(), b[inter].tolist()):
        adj[sa][sb] = adj[sa].get(sb, 0) + 1
        adj[sb][sa] = adj[sb].get(sa, 0) + 1

    alias = {s: s for s in range(count)}
    while True:
        candidates = [
            s for s in sorted(sizes) if 0 < sizes[s] < min_size and adj[s]
        ]
        if not candidates:
            break
        s = candidates[0]
        target = max(adj[s].items(), key=lambda kv: (kv[1], -kv[0]))[0]
        for other, c in list(adj[s].items()):
            if other == target:
                continue
            adj[other][target] = adj[other].get(target, 0) + c
            del adj[other][s]
            adj[target][other] = adj[target].get(other, 0) + c
        del adj[target][s]
        del adj[s]
        sizes[target] += sizes[s]
        del sizes[s]
        alias[s] = target
    resolve = np.arange(count)
    for s in range(count):
        root = s
        while alias[root] != root:
            root = alias[root]
        resolve[s] = root
    merged = resolve[labels]
    survivors = np.unique(merged)
    dense = np.empty(count, dtype=np.int64)
    dense[survivors] = np.arange(survivors.size)
    return _first_occurrence_relabel(dense[merged], survivors.size)


def oversegment(
    cloud: PointCloud,
    normals: np.ndarray,
    index: SpatialIndex,
    angle_threshold: float = 15.0,
    adjacency_k: int = 10,
    min_size: int = 20,
) -> SuperpointPartition:
    """Partition a cloud into geometrically coherent segments.

    angle_threshold is in degrees (0, 180]; adjacency_k neighbors define the
    graph; segments smaller than min_size are folded into neighbors.
    Deterministic: identical inputs give identical partitions.
    """
    n = cloud.count
    normals = np.asarray(normals, dtype=np.float64)
    if normals.shape != (n, 3):
        raise ValueError(f"normals of {normals.shape} do not match cloud of {n}")
    if not 0.0 < angle_threshold <= 180.0:
        raise ValueError("angle_threshold must lie in (0, 180] degrees")
    if adjacency_k < 1:
        raise ValueError("adjacency_k must be >= 1")
    if n == 0:
        return SuperpointPartition(np.empty(0, dtype=np.int64))
    if n == 1:
        return SuperpointPartition(np.zeros(1, dtype=np.int64))

    idx, dist = index.k_nearest_batch(cloud.positions, min(adjacency_k + 1, n))
    not_self = idx != np.arange(n)[:, None]
    # Keep at most adjacency_k non-self neighbors per point.
    keep = np.cumsum(not_self, axis=1) <= adjacency_k
    take = not_self & keep
    src = np.repeat(np.arange(n), take.sum(axis=1))
    dst = idx[take]
    length = dist[take]

    max_len = np.percentile(length, EDGE_LENGTH_PERCENTILE)
    cos = np.einsum("ij,ij->i", normals[src], normals[dst])
    angle = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    passes = (angle <= angle_threshold) & (length <= max_len)

    graph = csr_matrix(
        (np.ones(int(passes.sum()), dtype=np.int8), (src[passes], dst[passes])),
        shape=(n, n),
    )
    count, labels = connected_components(graph, directed=False)
    labels = _first_occurrence_relabel(labels.astype(np.int64), count)
    labels = _merge_small_segments(labels, src, dst, min_size)
    return SuperpointPartition(labels)


def partition_stats(partition: SuperpointPartition) -> dict:
    """Segment count plus size histogram and min/median/max size."""
    u = partition.segment_count
    if u == 0:
        return {"segment_count": 0, "size_histogram": {}, "min_size": 0,
                "median_size": 0.0, "max_size": 0}
    sizes = np.bincount(partition.assignment, minlength=u)
    values, counts = np.unique(sizes, return_counts=True)
    return {
        "segment_count": u,
        "size_histogram": {int(v): int(c) for v, c in zip(values, counts)},
        "min_size": int(sizes.min()),
        "median_size": float(np.median(sizes)),
        "max_size": int(sizes.max()),
    }


def save_partition_json(partition: SuperpointPartition, path) -> None:
    """Write the {"n", "u", "assignment"} JSON form."""
    payload = {
        "n": len(partition),
        "u": partition.segment_count,
        "assignment": partition.assignment.tolist(),
    }
    with open(path, "w", encoding="ascii") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def partition_to_labels(partition: SuperpointPartition):
    """Segment ids as a label field (rides the 16-bit PLY label channel)."""
    from .labels import LabelField

    u = partition.segment_count
    if u >= 65535:
        raise ValueError(f"{u} segments do not fit a 16-bit channel")
    return LabelField(partition.assignment, max(u, 1))


def partition_from_labels(values) -> SuperpointPartition:
    """Rebuild a partition from a segment-id channel."""
    ids = values.values if hasattr(values, "values") else np.asarray(values)
    return SuperpointPartition(ids)


def load_partition_json(path) -> SuperpointPartition:
    with open(path, "r", encoding="ascii") as f:
        payload = json.load(f)
    assignment = np.asarray(payload["assignment"], dtype=np.int64)
    partition = SuperpointPartition(assignment)
    if len(partition) != payload["n"] or partition.segment_count != payload["u"]:
        raise ValueError(
            f"partition file {path} is inconsistent: declared n={payload['n']} "
            f"u={payload['u']}, found n={len(partition)} u={partition.segment_count}"
        )
    return partition
