"""Multi-view back-projection of pixel scores onto points and initial labels.

A posed view carries either a per-pixel logit map or a per-pixel embedding
map. Points are projected through the pinhole model z*[u,v,1]^T = K*(R*p+t),
payloads sampled at the nearest pixel are averaged over all views that see a
point, embeddings are turned into class logits against text prototypes, the
scene-level mask removes absent classes, and softmax ranking yields the
initial per-point labels with confidences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .labels import UNLABELED, LabelField
from .pointcloud import PointCloud

# Masked-out logit entries take the most-negative finite float; softmax over
# a row treats them as -inf (their weight underflows to exactly zero).
MASKED_LOGIT = float(np.finfo(np.float64).min)

# Camera-frame depths at or below this are "behind" the camera.
MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class CameraView:
    """Posed pinhole camera plus its per-pixel payload.

    Exactly one of pixel_logits (H, W, C) and pixel_embeddings (H, W, d) is
    present. rotation/translation map world points into the camera frame.
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    pixel_logits: Optional[np.ndarray] = None
    pixel_embeddings: Optional[np.ndarray] = None

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if k.shape != (3, 3) or r.shape != (3, 3):
            raise ValueError("intrinsics and rotation must be 3x3")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal within 1e-6")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("intrinsics must have positive focal entries")
        if k[1, 0] != 0 or k[2, 0] != 0:
            raise ValueError("intrinsics must have a zero bottom-left block")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image grid must be positive")
        if (self.pixel_logits is None) == (self.pixel_embeddings is None):
            raise ValueError("exactly one of pixel_logits/pixel_embeddings required")
        payload = self.pixel_logits if self.pixel_logits is not None else self.pixel_embeddings
        payload = np.asarray(payload)
        if payload.shape[:2] != (self.height, self.width) or payload.ndim != 3:
            raise ValueError(
                f"payload must be (H={self.height}, W={self.width}, channels), "
                f"got {payload.shape}"
            )
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if self.pixel_logits is not None:
            object.__setattr__(self, "pixel_logits", payload)
        else:
            object.__setattr__(self, "pixel_embeddings", payload)

    @property
    def payload(self) -> np.ndarray:
        return self.pixel_logits if self.pixel_logits is not None else self.pixel_embeddings

    @property
    def payload_kind(self) -> str:
        return "logits" if self.pixel_logits is not None else "embeddings"

    @property
    def channels(self) -> int:
        return int(self.payload.shape[2])


@dataclass(frozen=True)
class TextEmbeddings:
    """One prototype vector per class name."""

    vectors: np.ndarray
    class_names: Tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        names = tuple(self.class_names)
        if v.ndim != 2:
            raise ValueError("prototype vectors must be (C, d)")
        if v.shape[0] != len(names):
            raise ValueError(
                f"{v.shape[0]} prototype rows but {len(names)} class names"
            )
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "class_names", names)


def project_point(p, view: CameraView):
    """Project one world point; None when it lies at or behind the camera.

    Returns (u, v, depth) with continuous pixel coordinates and the
    camera-frame depth; callers discard points outside the image grid.
    """
    q = view.rotation @ np.asarray(p, dtype=np.float64).reshape(3) + view.translation
    if q[2] <= MIN_DEPTH:
        return None
    h = view.intrinsics @ q
    return float(h[0] / h[2]), float(h[1] / h[2]), float(q[2])


def project_with_pose(
    positions: np.ndarray,
    intrinsics: np.ndarray,
    rotation: np.ndarray,
    translation: np.ndarray,
):
    """Vectorized projection: (uv (N,2), depth (N,), in_front (N,) bool)."""
    q = positions @ np.asarray(rotation).T + np.asarray(translation).reshape(3)
    depth = q[:, 2]
    in_front = depth > MIN_DEPTH
    h = q @ np.asarray(intrinsics).T
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = h[:, :2] / h[:, 2:3]
    return uv, depth, in_front


def project_points(positions: np.ndarray, view: CameraView):
    """Vectorized projection through a posed view."""
    return project_with_pose(
        positions, view.intrinsics, view.rotation, view.translation
    )


def nearest_pixel(x: np.ndarray) -> np.ndarray:
    """Continuous pixel coordinate to index: round half away from zero."""
    return np.trunc(x + np.copysign(0.5, x)).astype(np.int64)


def aggregate_views(
    cloud: PointCloud,
    views: Sequence[CameraView],
    occlusion_tolerance: Optional[float] = None,
):
    """Average each point's payload over every view that sees it.

    Sampling is nearest-pixel; a point contributes in a view only when it is
    in front of the camera and its rounded pixel lies on the grid. With
    `occlusion_tolerance` set, a per-view depth buffer built from the cloud
    drops points deeper than the front surface by more than the tolerance
    (meters). Returns (aggregate (N, channels), hit_count (N,)); points with
    no correspondence get a zero row and hit_count 0.
    """
    if not views:
        raise ValueError("at least one view is required")
    kinds = {v.payload_kind for v in views}
    if len(kinds) != 1:
        raise ValueError(f"views mix payload kinds: {sorted(kinds)}")
    channels = {v.channels for v in views}
    if len(channels) != 1:
        raise ValueError(f"views disagree on channel count: {sorted(channels)}")
    n = cloud.count
    c = channels.pop()
    acc = np.zeros((n, c), dtype=np.float64)
    hits = np.zeros(n, dtype=np.int64)
    for view in views:
        uv, depth, in_front = project_points(cloud.positions, view)
        cols = np.zeros(n, dtype=np.int64)
        rows = np.zeros(n, dtype=np.int64)
        cols[in_front] = nearest_pixel(uv[in_front, 0])
        rows[in_front] = nearest_pixel(uv[in_front, 1])
        valid = (
            in_front
            & (cols >= 0) & (cols < view.width)
            & (rows >= 0) & (rows < view.height)
        )
        if occlusion_tolerance is not None:
            zbuf = np.full((view.height, view.width), np.inf)
            np.minimum.at(zbuf, (rows[valid], cols[valid]), depth[valid])
            visible = np.zeros(n, dtype=bool)
            visible[valid] = depth[valid] <= zbuf[rows[valid], cols[valid]] + occlusion_tolerance
            valid = visible
        acc[valid] += view.payload[rows[valid], cols[valid]]
        hits[valid] += 1
    seen = hits > 0
    acc[seen] /= hits[seen, None]
    return acc, hits


def compute_logits(embeddings: np.ndarray, text: TextEmbeddings) -> np.ndarray:
    """Class logits as inner products of point embeddings with prototypes."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != text.vectors.shape[1]:
        raise ValueError(
            f"embedding dim {emb.shape} does not match prototypes "
            f"{text.vectors.shape}"
        )
    return emb @ text.vectors.T


def apply_scene_mask(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Force classes absent from the scene to the masked sentinel."""
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if logits.ndim != 2 or mask.shape != (logits.shape[1],):
        raise ValueError(
            f"mask of {mask.shape} does not fit logits of {logits.shape}"
        )
    if not mask.any():
        raise ValueError("scene mask excludes every class")
    out = logits.copy()
    out[:, ~mask] = MASKED_LOGIT
    return out


def rank_to_pseudo_labels(filtered: np.ndarray) -> Tuple[LabelField, np.ndarray]:
    """Per-row softmax over unmasked classes: argmax label + max probability.

    Ties go to the lowest class id. Raises when a row is fully masked.
    """
    filtered = np.asarray(filtered, dtype=np.float64)
    if filtered.ndim != 2 or filtered.shape[1] == 0:
        raise ValueError(f"expected (N, C) logits, got {filtered.shape}")
    unmasked = filtered != MASKED_LOGIT
    dead = ~unmasked.any(axis=1)
    if dead.any():
        raise ValueError(f"row {int(np.flatnonzero(dead)[0])} is fully masked")
    scores = np.where(unmasked, filtered, -np.inf)
    rowmax = scores.max(axis=1, keepdims=True)
    weights = np.exp(scores - rowmax)
    probs = weights / weights.sum(axis=1, keepdims=True)
    labels = np.argmax(scores, axis=1)
    confidence = probs[np.arange(filtered.shape[0]), labels]
    return LabelField(labels, filtered.shape[1]), confidence


def pseudo_labels_from_logits(
    logits: np.ndarray, mask: Optional[np.ndarray] = None
) -> Tuple[LabelField, np.ndarray]:
    """Scene-mask filtering followed by ranking; mask None means all-true."""
    logits = np.asarray(logits, dtype=np.float64)
    if mask is None:
        mask = np.ones(logits.shape[1], dtype=bool)
    return rank_to_pseudo_labels(apply_scene_mask(logits, mask))


def pseudo_labels_from_views(
    cloud: PointCloud,
    views: Sequence[CameraView],
    mask: Optional[np.ndarray] = None,
    text: Optional[TextEmbeddings] = None,
    occlusion_tolerance: Optional[float] = None,
):
    """Full initial-label path: aggregate, (embed->logits), mask, rank.

    Points with no view correspondence come back UNLABELED with confidence 0.
    Returns (labels, confidence, hit_count).
    """
    aggregate, hits = aggregate_views(cloud, views, occlusion_tolerance)
    if views[0].payload_kind == "embeddings":
        if text is None:
            raise ValueError("embedding views require text prototypes")
        logits = compute_logits(aggregate, text)
    else:
        logits = aggregate
    labels, confidence = pseudo_labels_from_logits(logits, mask)
    values = labels.values.copy()
    values[hits == 0] = UNLABELED
    confidence = confidence.copy()
    confidence[hits == 0] = 0.0
    return labels.with_values(values), confidence, hits
