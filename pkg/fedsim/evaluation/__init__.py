from fedsim.evaluation.seg_metrics import (
    MetricRecord,
    Region,
    binarize,
    dice,
    evaluate_volume_pair,
    hd95,
    sensitivity_specificity,
)
from fedsim.evaluation.segvol import LabelVolume, read_segvol, write_segvol

__all__ = [
    "LabelVolume",
    "MetricRecord",
    "Region",
    "binarize",
    "dice",
    "evaluate_volume_pair",
    "hd95",
    "read_segvol",
    "sensitivity_specificity",
    "write_segvol",
]
