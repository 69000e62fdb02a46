"""
Volumetric segmentation metrics per tumor region: Dice, HD95, sensitivity, specificity.

Regions follow the BraTS label composition:
    ET = {4}    TC = {1, 4}    WT = {1, 2, 4}
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from fedsim.errors import ShapeMismatch, SpacingMismatch
from fedsim.evaluation.segvol import LabelVolume, volume_diagonal

# 6-connectivity: face neighbours only
_FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)


class Region(Enum):
    ET = frozenset({4})
    TC = frozenset({1, 4})
    WT = frozenset({1, 2, 4})

    @property
    def labels(self) -> frozenset[int]:
        return self.value


REGIONS = (Region.ET, Region.TC, Region.WT)

# Row labels of the final-metrics table, in display order.
METRIC_LABELS = {
    "dice": "DICE",
    "hd95": "Hausdorff (95%)",
    "sensitivity": "Sensitivity",
    "specificity": "Specificity",
}


def table_row_labels() -> list[str]:
    return [f"{label} {region.name}" for label in METRIC_LABELS.values() for region in REGIONS]


@dataclass(frozen=True)
class MetricRecord:
    region: str
    dice: float
    hd95: float
    sensitivity: float
    specificity: float
    # hd95 holds the volume diagonal when exactly one mask is empty
    hd95_undefined: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def labelled(self) -> dict[str, float]:
        """Metrics keyed by their table row label, e.g. ``"DICE ET"``."""
        return {f"{label} {self.region}": getattr(self, key) for key, label in METRIC_LABELS.items()}


def binarize(volume: LabelVolume, region: Region) -> np.ndarray:
    return np.isin(volume.voxels, sorted(region.labels))


def _check_shapes(pred: np.ndarray, ref: np.ndarray) -> None:
    if pred.shape != ref.shape:
        raise ShapeMismatch(f"mask shapes differ: {pred.shape} vs {ref.shape}")


def dice(pred: np.ndarray, ref: np.ndarray) -> float:
    _check_shapes(pred, ref)
    pred, ref = pred.astype(bool), ref.astype(bool)
    size = int(pred.sum()) + int(ref.sum())
    if size == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, ref).sum()) / size


def boundary(mask: np.ndarray) -> np.ndarray:
    """Mask voxels with a face neighbour outside the mask; voxels on the volume edge always count."""
    mask = mask.astype(bool)
    return mask & ~ndimage.binary_erosion(mask, structure=_FACE_STRUCTURE, border_value=0)


def directed_distances(src: np.ndarray, dst: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Distance from every boundary voxel of ``src`` to the nearest boundary voxel of ``dst``, in mm."""
    spacing = np.asarray(spacing, dtype=np.float64)
    src_pts = np.argwhere(boundary(src)) * spacing
    dst_pts = np.argwhere(boundary(dst)) * spacing
    distances, _ = cKDTree(dst_pts).query(src_pts, k=1)
    return np.asarray(distances, dtype=np.float64)


def hd95(pred: np.ndarray, ref: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> tuple[float, bool]:
    """Return (distance, undefined). ``undefined`` marks the one-mask-empty sentinel."""
    _check_shapes(pred, ref)
    pred, ref = pred.astype(bool), ref.astype(bool)
    pred_empty, ref_empty = not pred.any(), not ref.any()
    if pred_empty and ref_empty:
        return 0.0, False
    if pred_empty or ref_empty:
        return volume_diagonal(pred.shape, spacing), True
    forward = np.percentile(directed_distances(pred, ref, spacing), 95)
    backward = np.percentile(directed_distances(ref, pred, spacing), 95)
    return float(max(forward, backward)), False


def confusion_counts(pred: np.ndarray, ref: np.ndarray) -> dict[str, int]:
    _check_shapes(pred, ref)
    pred, ref = pred.astype(bool), ref.astype(bool)
    tp = int(np.logical_and(pred, ref).sum())
    fp = int(np.logical_and(pred, ~ref).sum())
    fn = int(np.logical_and(~pred, ref).sum())
    return {"tp": tp, "fp": fp, "fn": fn, "tn": int(pred.size) - tp - fp - fn}


def sensitivity_specificity(pred: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    c = confusion_counts(pred, ref)
    positives, negatives = c["tp"] + c["fn"], c["tn"] + c["fp"]
    sensitivity = c["tp"] / positives if positives else 1.0
    specificity = c["tn"] / negatives if negatives else 1.0
    return sensitivity, specificity


def evaluate_region(pred: LabelVolume, ref: LabelVolume, region: Region) -> MetricRecord:
    p, r = binarize(pred, region), binarize(ref, region)
    distance, undefined = hd95(p, r, ref.spacing)
    sens, spec = sensitivity_specificity(p, r)
    return MetricRecord(region.name, dice(p, r), distance, sens, spec, undefined)


def evaluate_volume_pair(pred: LabelVolume, ref: LabelVolume) -> list[MetricRecord]:
    if pred.dims != ref.dims:
        raise ShapeMismatch(f"volume dims differ: {pred.dims} vs {ref.dims}")
    if pred.spacing != ref.spacing:
        raise SpacingMismatch(f"volume spacing differs: {pred.spacing} vs {ref.spacing}")
    return [evaluate_region(pred, ref, region) for region in REGIONS]
