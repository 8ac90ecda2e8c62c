"""Self-training with label propagation.

Each round fits a classifier on the current pseudo labels, predicts
everywhere, merges predictions into the unlabeled gaps (previous labels are
retained verbatim; only gap positions may adopt new, per-class-filtered
predictions), and re-runs the superpoint vote. Inference predicts with the
fitted classifier and applies the superpoint vote as post-processing.

The classifier seat is a small behavioral contract; the bundled
KnnClassifier (distance-weighted vote over position-plus-color features) is
a deterministic desk-scale stand-in for a learned segmentation network.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .labels import UNLABELED, LabelField
from .metrics import confusion, labeled_rate, miou
from .pointcloud import PointCloud
from .refine import RefineParams, calr, galr
from .superpoint import SuperpointPartition


class PointClassifier(ABC):
    """Contract: fit on labeled points only; predict a label everywhere.

    predict must be deterministic for fixed inputs and configuration, return
    no UNLABELED values, and report confidences in [0, 1].
    """

    @abstractmethod
    def fit(self, cloud: PointCloud, labels: LabelField) -> "PointClassifier":
        ...

    @abstractmethod
    def predict(self, cloud: PointCloud) -> Tuple[LabelField, np.ndarray]:
        ...


class KnnClassifier(PointClassifier):
    """Distance-weighted k-NN vote in position (+) scaled-color space.

    Votes carry weight 1/(distance + smoothing). The smoothing radius (in
    feature units, i.e. meters) controls how strongly nearby exemplars
    outvote the rest of the neighborhood: near zero the closest exemplar
    dominates (memorization), at a few point spacings the vote behaves like
    a local majority and can denoise its own training labels.
    """

    def __init__(
        self,
        k: int = 15,
        color_weight: float = 0.5,
        smoothing: float = 0.05,
        confidence_scale: float = 0.1,
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if confidence_scale <= 0:
            raise ValueError("confidence_scale must be positive")
        self.k = k
        self.color_weight = float(color_weight)
        self.smoothing = float(smoothing)
        self.confidence_scale = float(confidence_scale)
        self._tree = None
        self._labels = None
        self._num_classes = 0

    def _features(self, cloud: PointCloud) -> np.ndarray:
        return np.hstack(
            [cloud.positions, self.color_weight * (cloud.colors / 255.0)]
        )

    def fit(self, cloud: PointCloud, labels: LabelField) -> "KnnClassifier":
        if len(labels) != cloud.count:
            raise ValueError(f"{len(labels)} labels for {cloud.count} points")
        keep = labels.labeled_mask
        if not keep.any():
            raise ValueError("cannot fit on a fully unlabeled field")
        self._tree = cKDTree(self._features(cloud)[keep])
        self._labels = labels.values[keep]
        self._num_classes = labels.num_classes
        return self

    def predict(self, cloud: PointCloud) -> Tuple[LabelField, np.ndarray]:
        if self._tree is None:
            raise RuntimeError("classifier is not fitted")
        n = cloud.count
        c = self._num_classes
        k = min(self.k, self._labels.size)
        dist, idx = self._tree.query(self._features(cloud), k=k)
        dist = dist.reshape(n, k)
        idx = idx.reshape(n, k)
        weights = 1.0 / (dist + self.smoothing + 1e-12)
        votes = np.bincount(
            (np.arange(n)[:, None] * c + self._labels[idx]).ravel(),
            weights=weights.ravel(),
            minlength=n * c,
        ).reshape(n, c)
        winners = votes.argmax(axis=1)
        fraction = votes[np.arange(n), winners] / votes.sum(axis=1)
        # Far from every exemplar the vote is an extrapolation, however
        # unanimous; damp confidence with the distance to the nearest one.
        confidence = fraction * np.exp(-dist[:, 0] / self.confidence_scale)
        return LabelField(winners, c), np.clip(confidence, 0.0, 1.0)


@dataclass(frozen=True)
class StlpConfig:
    """Round count, refinement parameters, and classifier settings."""

    rounds: int = 2
    refine: RefineParams = field(default_factory=RefineParams)
    knn_k: int = 15
    color_weight: float = 0.5
    knn_smoothing: float = 0.05
    knn_confidence_scale: float = 0.1
    seed: int = 0
    update: str = "retained"

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.update not in ("retained", "full"):
            raise ValueError(f"unknown update strategy {self.update!r}")

    def make_classifier(self) -> KnnClassifier:
        return KnnClassifier(
            k=self.knn_k,
            color_weight=self.color_weight,
            smoothing=self.knn_smoothing,
            confidence_scale=self.knn_confidence_scale,
        )


def label_update(
    prev: LabelField,
    pred: LabelField,
    pred_conf: np.ndarray,
    scene_mask: np.ndarray,
    top_v: float,
) -> LabelField:
    """Merge new predictions into the gaps of the previous label field.

    Previously labeled positions are retained verbatim. Gap positions adopt
    the prediction only if its class is present in the scene mask and it
    survives per-class top-V% selection computed over the gap positions.
    """
    if len(prev) != len(pred):
        raise ValueError(f"previous field has {len(prev)} points, prediction {len(pred)}")
    if prev.num_classes != pred.num_classes:
        raise ValueError("class counts differ between previous and predicted labels")
    if not pred.labeled_mask.all():
        raise ValueError("predictions must label every point")
    mask = np.asarray(scene_mask, dtype=bool)
    if mask.shape != (prev.num_classes,):
        raise ValueError(f"scene mask of {mask.shape} does not fit {prev.num_classes} classes")
    gaps = ~prev.labeled_mask
    candidates = np.where(gaps & mask[pred.values], pred.values, UNLABELED)
    filtered = calr(prev.with_values(candidates), pred_conf, top_v)
    return prev.with_values(np.where(gaps, filtered.values, prev.values))


def stlp_round(
    cloud: PointCloud,
    prev: LabelField,
    partition: SuperpointPartition,
    classifier: PointClassifier,
    config: StlpConfig,
    scene_mask: np.ndarray,
) -> Tuple[LabelField, PointClassifier]:
    """One train/predict/propagate cycle; returns the next label field."""
    if not prev.labeled_mask.any():
        raise ValueError("previous labels are entirely unlabeled")
    classifier.fit(cloud, prev)
    pred, conf = classifier.predict(cloud)
    if config.update == "full":
        mask = np.asarray(scene_mask, dtype=bool)
        candidates = np.where(mask[pred.values], pred.values, UNLABELED)
        merged = calr(prev.with_values(candidates), conf, config.refine.top_v)
    else:
        merged = label_update(prev, pred, conf, scene_mask, config.refine.top_v)
    return galr(merged, partition, config.refine.alpha), classifier


def stlp_run(
    cloud: PointCloud,
    y0: LabelField,
    partition: SuperpointPartition,
    config: StlpConfig,
    scene_mask: np.ndarray,
    gt: Optional[LabelField] = None,
) -> Tuple[LabelField, PointClassifier, List[dict]]:
    """Run `config.rounds` propagation rounds from the initial labels.

    Returns the final labels, a classifier fitted on them (for rounds=0 that
    is y0 untouched and a classifier fit on y0), and one report row per
    round: {"round", "labeled_rate"} plus mIoU fields when ground truth is
    supplied.
    """
    classifier = config.make_classifier()
    labels = y0
    report: List[dict] = []
    for t in range(1, config.rounds + 1):
        labels, classifier = stlp_round(
            cloud, labels, partition, classifier, config, scene_mask
        )
        row = {"round": t, "labeled_rate": labeled_rate(labels)}
        if gt is not None:
            mean_iou, per_class, macc = miou(confusion(labels, gt))
            row["miou"] = mean_iou
            row["macc"] = macc
            row["per_class_iou"] = [
                None if np.isnan(v) else float(v) for v in per_class
            ]
        report.append(row)
    classifier.fit(cloud, labels)
    return labels, classifier, report


def infer(
    cloud: PointCloud,
    classifier: PointClassifier,
    partition: SuperpointPartition,
    alpha: float,
    keep_rejected: bool = True,
) -> LabelField:
    """Predict everywhere and apply the superpoint vote as post-processing.

    Blocks failing the alpha test keep the raw per-point predictions so the
    output labels every point; pass keep_rejected=False to leave them
    unlabeled for analysis.
    """
    pred, _ = classifier.predict(cloud)
    voted = galr(pred, partition, alpha)
    if not keep_rejected:
        return voted
    return pred.with_values(
        np.where(voted.values == UNLABELED, pred.values, voted.values)
    )
