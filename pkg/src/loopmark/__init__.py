"""Model-assisted annotation loop toolkit.

Seed a dataset with a small manually labeled set, let the current detector
pre-label each new batch, correct the predictions in the review UI (or with
the simulated annotator), merge the corrections, retrain, and track F1/mAP
and labor cost per iteration.
"""

__version__ = "0.1.0"

from .geometry import Affine2, AugmentationSpec, ImageDims, iou
from .labels import BoundingBox, LabelFormatError, LabelMap, Prediction
from .metrics import EvalReport, MatchConfig, average_precision, evaluate, f1
from .workspace import Workspace, WorkspaceError

__all__ = [
    "Affine2",
    "AugmentationSpec",
    "BoundingBox",
    "EvalReport",
    "ImageDims",
    "LabelFormatError",
    "LabelMap",
    "MatchConfig",
    "Prediction",
    "Workspace",
    "WorkspaceError",
    "average_precision",
    "evaluate",
    "f1",
    "iou",
    "__version__",
]
