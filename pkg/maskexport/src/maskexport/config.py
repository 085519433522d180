"""Export configuration and the COCO label set of the bundled detector."""

from __future__ import annotations

from dataclasses import dataclass

# torchvision's detection models emit COCO category ids 1..90; "N/A" marks
# ids the dataset never uses
COCO_CATEGORY_NAMES = [
    "__background__", "person", "bicycle", "car", "motorcycle", "airplane",
    "bus", "train", "truck", "boat", "traffic light", "fire hydrant", "N/A",
    "stop sign", "parking meter", "bench", "bird", "cat", "dog", "horse",
    "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "N/A", "backpack",
    "umbrella", "N/A", "N/A", "handbag", "tie", "suitcase", "frisbee", "skis",
    "snowboard", "sports ball", "kite", "baseball bat", "baseball glove",
    "skateboard", "surfboard", "tennis racket", "bottle", "N/A", "wine glass",
    "cup", "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich",
    "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake",
    "chair", "couch", "potted plant", "bed", "N/A", "dining table", "N/A",
    "N/A", "toilet", "N/A", "tv", "laptop", "mouse", "remote", "keyboard",
    "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator",
    "N/A", "book", "clock", "vase", "scissors", "teddy bear", "hair drier",
    "toothbrush",
]

ALL_CLASSES = tuple(n for n in COCO_CATEGORY_NAMES if n not in ("__background__", "N/A"))


@dataclass(frozen=True)
class ExportConfig:
    model: str = "torchvision-maskrcnn"
    weights: str = "none"  # "none" (random init), "pretrained", or a file path
    score_threshold: float = 0.7
    classes: tuple[str, ...] = ALL_CLASSES
    device: str = "cpu"
    max_detections: int = 20
    mask_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must lie in [0, 1]")
        if not self.classes:
            raise ValueError("class whitelist must not be empty")
        if self.max_detections < 1:
            raise ValueError("max_detections must be >= 1")
