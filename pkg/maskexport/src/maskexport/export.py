"""Run an instance-segmentation model over a sequence and emit JSON lines.

Output schema (one line per frame, 1-based indices)::

    {"frame": k, "detections": [{"score": s, "class": c,
                                 "mask_rle": {"size": [h, w], "counts": [...]}}]}

Masks are emitted rather than quads: the tracking pipeline owns the
deformed-box extraction, so all geometry decisions stay in one place.
Per-frame inference failures are logged and produce an empty detection list;
the consumer treats such frames as detection-free.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from .config import COCO_CATEGORY_NAMES, ExportConfig
from . import rle

log = logging.getLogger(__name__)

# a detector maps an RGB uint8 (h, w, 3) array to raw instances
Detector = Callable[[np.ndarray], "list[RawInstance]"]


@dataclass(frozen=True)
class RawInstance:
    score: float
    label: str
    mask: np.ndarray  # (h, w) bool


_FRAME_RE = re.compile(r"^(\d+)$")


def list_frames(seq_dir: Path | str) -> list[Path]:
    seq_dir = Path(seq_dir)
    if not seq_dir.is_dir():
        raise FileNotFoundError(f"sequence directory not found: {seq_dir}")
    frames = [(int(p.stem), p) for p in seq_dir.iterdir()
              if p.suffix.lower() in (".jpg", ".jpeg", ".png") and _FRAME_RE.match(p.stem)]
    if not frames:
        raise FileNotFoundError(f"no numbered frame images in {seq_dir}")
    frames.sort(key=lambda t: t[0])
    return [p for _, p in frames]


def load_torchvision_detector(cfg: ExportConfig) -> Detector:
    """Mask R-CNN from torchvision; weights per cfg ('none' = random init)."""
    import torch
    import torchvision

    torch.manual_seed(cfg.seed)
    if cfg.weights == "pretrained":
        model = torchvision.models.detection.maskrcnn_resnet50_fpn(weights="DEFAULT")
    else:
        model = torchvision.models.detection.maskrcnn_resnet50_fpn(
            weights=None, weights_backbone=None)
        if cfg.weights not in ("none", ""):
            state = torch.load(cfg.weights, map_location=cfg.device)
            model.load_state_dict(state)
    model.eval()
    model.to(cfg.device)

    def detect(image: np.ndarray) -> list[RawInstance]:
        tensor = torch.from_numpy(image.astype(np.float32) / 255.0).permute(2, 0, 1)
        with torch.no_grad():
            out = model([tensor.to(cfg.device)])[0]
        instances = []
        scores = out["scores"].cpu().numpy()
        labels = out["labels"].cpu().numpy()
        masks = out["masks"].cpu().numpy()  # (k, 1, h, w) soft masks
        for score, label_id, soft in zip(scores, labels, masks):
            name = COCO_CATEGORY_NAMES[label_id] if label_id < len(COCO_CATEGORY_NAMES) else "N/A"
            instances.append(RawInstance(score=float(score), label=name,
                                         mask=soft[0] > cfg.mask_threshold))
        return instances

    return detect


def _select(instances: Sequence[RawInstance], cfg: ExportConfig) -> list[RawInstance]:
    kept = [inst for inst in instances
            if inst.score >= cfg.score_threshold and inst.label in cfg.classes
            and inst.mask.any()]
    kept.sort(key=lambda inst: -inst.score)
    return kept[:cfg.max_detections]


def export(seq_dir: Path | str, cfg: ExportConfig, out: Path | str,
           detector: Detector | None = None) -> int:
    """Write one JSON line per frame; returns the process exit code."""
    frames = list_frames(seq_dir)
    if detector is None:
        detector = load_torchvision_detector(cfg)
    out = Path(out)
    lines = []
    for index, path in enumerate(frames, start=1):
        try:
            image = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
            instances = _select(detector(image), cfg)
        except Exception as exc:  # per-frame tolerance: the pipeline must not halt
            log.error("frame %d (%s): inference failed: %s", index, path.name, exc)
            instances = []
        dets = [{"score": round(inst.score, 6), "class": inst.label,
                 "mask_rle": {"size": [int(inst.mask.shape[0]), int(inst.mask.shape[1])],
                              "counts": rle.encode(inst.mask)}}
                for inst in instances]
        lines.append(json.dumps({"frame": index, "detections": dets}))
    out.write_text("\n".join(lines) + "\n")
    log.info("wrote %d frame entries to %s", len(lines), out)
    return 0
