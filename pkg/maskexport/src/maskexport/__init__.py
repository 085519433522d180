"""Offline instance-segmentation export for the tracking pipeline."""

from .config import ALL_CLASSES, COCO_CATEGORY_NAMES, ExportConfig
from .export import RawInstance, export, list_frames, load_torchvision_detector
from .validate import ValidationReport, validate

__all__ = [
    "ALL_CLASSES", "COCO_CATEGORY_NAMES", "ExportConfig", "RawInstance",
    "ValidationReport", "export", "list_frames", "load_torchvision_detector",
    "validate",
]
