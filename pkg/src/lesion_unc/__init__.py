"""Lesion-scale structural uncertainty and its explanation by lesion features."""
__version__ = "0.1.0"

from .errors import LesionUncError  # noqa: E402
from .evaluation import detection_f1, iou, iou_adj, match_predictions  # noqa: E402
from .instance import LesionInstance, Source, connected_components, threshold  # noqa: E402
from .uncertainty import (  # noqa: E402
    LesionUncertainty,
    SampleSet,
    lesion_uncertainties,
    lsu,
    mean_prediction,
    voxel_entropy,
    voxel_mutual_information,
)
from .volio import Volume, read_nifti, read_table, write_nifti, write_table  # noqa: E402

__all__ = [
    "LesionInstance",
    "LesionUncError",
    "LesionUncertainty",
    "SampleSet",
    "Source",
    "Volume",
    "connected_components",
    "detection_f1",
    "iou",
    "iou_adj",
    "lesion_uncertainties",
    "lsu",
    "match_predictions",
    "mean_prediction",
    "read_nifti",
    "read_table",
    "threshold",
    "voxel_entropy",
    "voxel_mutual_information",
    "write_nifti",
    "write_table",
]
