"""Sequence/detection/result file formats and the run configuration.

External formats (all 1-based frame indices):

* sequence dir: zero-padded numbered ``.jpg``/``.png`` frames plus an optional
  ``groundtruth.txt`` with one ``x1,y1,x2,y2,x3,y3,x4,y4`` line per frame
* detections: JSON lines, one object per frame::

      {"frame": k, "detections": [{"score": s, "class": c,
                                   "quad": [8 floats]?,
                                   "mask_rle": {"size": [h, w], "counts": [...]}?}]}

* results: CSV ``frame,x1,...,y4,max_likelihood,dict_updated,detection_used``
* config: ``key = value`` text with ``#`` comments
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, FormatError
from .geometry import QuadBB, ellipse_from_mask, quad_from_ellipse
from .imaging import BinaryMask, Frame, rle_decode, to_grayscale

log = logging.getLogger(__name__)

RESULT_HEADER = ["frame", "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4",
                 "max_likelihood", "dict_updated", "detection_used"]

MODES = ("l1apg", "l1dpf", "l1dpf-m")


@dataclass
class Detection:
    """One detector output: score plus a quad and/or an RLE mask."""

    score: float
    class_label: str = "object"
    quad: QuadBB | None = None
    mask_rle: tuple[tuple[int, int], tuple[int, ...]] | None = None
    _mask: BinaryMask | None = field(default=None, repr=False, compare=False)
    _derived_quad: QuadBB | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.quad is None and self.mask_rle is None:
            raise FormatError("detection needs a quad or a mask")
        if not 0.0 <= self.score <= 1.0:
            raise FormatError(f"detection score {self.score} outside [0, 1]")

    def mask(self) -> BinaryMask | None:
        if self._mask is None and self.mask_rle is not None:
            size, counts = self.mask_rle
            self._mask = rle_decode(counts, size)
        return self._mask

    def bounding_quad(self) -> QuadBB:
        """The detection quad; derived from the mask ellipse when absent."""
        if self.quad is not None:
            return self.quad
        if self._derived_quad is None:
            self._derived_quad = quad_from_ellipse(ellipse_from_mask(self.mask()))
        return self._derived_quad


@dataclass
class Sequence:
    name: str
    frame_paths: list[Path]
    gt_quads: list[QuadBB] | None = None

    def __len__(self) -> int:
        return len(self.frame_paths)


def load_frame(path: Path | str) -> Frame:
    img = Image.open(path)
    if img.mode == "L":
        return Frame(np.asarray(img, dtype=np.float64) / 255.0)
    rgb = img.convert("RGB")
    arr = np.asarray(rgb, dtype=np.uint8)
    return to_grayscale(arr, rgb.width, rgb.height)


def parse_gt_line(line: str) -> QuadBB:
    """Parse one ground-truth polygon line of 8 comma-separated numbers."""
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) != 8:
        raise FormatError(f"expected 8 fields, got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"non-numeric field: {exc}") from exc
    quad = QuadBB.from_flat(vals)
    if not quad.is_convex():
        log.warning("ground-truth quad is not convex: %s", line.strip())
    return quad


_FRAME_RE = re.compile(r"^(\d+)$")


def load_sequence(directory: Path | str) -> Sequence:
    """Load a sequence directory: numbered frames plus optional groundtruth.txt."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"sequence directory not found: {directory}")
    frames = []
    for path in directory.iterdir():
        if path.suffix.lower() in (".jpg", ".jpeg", ".png") and _FRAME_RE.match(path.stem):
            frames.append((int(path.stem), path))
    if not frames:
        raise DataError(f"no numbered frame images in {directory}")
    frames.sort(key=lambda t: t[0])
    paths = [p for _, p in frames]

    gt_quads = None
    gt_file = directory / "groundtruth.txt"
    if gt_file.exists():
        gt_quads = []
        for lineno, line in enumerate(gt_file.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                gt_quads.append(parse_gt_line(line))
            except FormatError as exc:
                raise DataError(f"{gt_file}:{lineno}: {exc}") from exc
        if len(gt_quads) != len(paths):
            raise DataError(
                f"{gt_file}: {len(gt_quads)} ground-truth lines for {len(paths)} frames")
    return Sequence(name=directory.name, frame_paths=paths, gt_quads=gt_quads)


def _parse_detection_obj(obj: dict, lineno: int) -> Detection:
    if "score" not in obj:
        raise FormatError(f"line {lineno}: detection missing 'score'")
    quad = None
    mask_rle = None
    if obj.get("quad") is not None:
        vals = obj["quad"]
        if len(vals) != 8:
            raise FormatError(f"line {lineno}: quad needs 8 floats, got {len(vals)}")
        quad = QuadBB.from_flat([float(v) for v in vals])
    if obj.get("mask_rle") is not None:
        rle = obj["mask_rle"]
        if "size" not in rle or "counts" not in rle:
            raise FormatError(f"line {lineno}: mask_rle needs 'size' and 'counts'")
        h, w = (int(v) for v in rle["size"])
        counts = tuple(int(c) for c in rle["counts"])
        if sum(counts) != h * w:
            raise FormatError(
                f"line {lineno}: mask counts sum {sum(counts)} != {h}*{w}")
        mask_rle = ((h, w), counts)
    if quad is None and mask_rle is None:
        raise FormatError(f"line {lineno}: detection has neither quad nor mask")
    return Detection(score=float(obj["score"]),
                     class_label=str(obj.get("class", "object")),
                     quad=quad, mask_rle=mask_rle)


def load_detections(path: Path | str) -> dict[int, list[Detection]]:
    """Parse a JSON-lines detections file into a frame -> detections map."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"detections file not found: {path}")
    out: dict[int, list[Detection]] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if "frame" not in obj:
            raise FormatError(f"{path}:{lineno}: missing 'frame'")
        frame = int(obj["frame"])
        if frame < 1:
            raise FormatError(f"{path}:{lineno}: frame index {frame} < 1")
        if frame in out:
            raise FormatError(f"{path}:{lineno}: duplicate entry for frame {frame}")
        try:
            out[frame] = [_parse_detection_obj(d, lineno) for d in obj.get("detections", [])]
        except FormatError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return out


def write_results(results, path: Path | str) -> None:
    """Write FrameResult records as the fixed-schema CSV."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULT_HEADER)
            for res in results:
                flat = res.chosen_quad.flat()
                writer.writerow(
                    [res.frame_index]
                    + [f"{v:.4f}" for v in flat]
                    + [f"{res.max_likelihood:.4f}",
                       int(res.dict_updated), int(res.detection_used)])
    except OSError as exc:
        raise DataError(f"cannot write results to {path}: {exc}") from exc


def load_results(path: Path | str):
    """Read a results CSV back: (frames, quads, likelihoods, updated, det_used)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"results file not found: {path}")
    frames: list[int] = []
    quads: list[QuadBB] = []
    liks: list[float] = []
    updated: list[bool] = []
    det_used: list[bool] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_HEADER:
            raise FormatError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RESULT_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(RESULT_HEADER)} columns")
            frames.append(int(row[0]))
            quads.append(QuadBB.from_flat([float(v) for v in row[1:9]]))
            liks.append(float(row[9]))
            updated.append(row[10] == "1")
            det_used.append(row[11] == "1")
    return frames, quads, liks, updated, det_used


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse 'key = value' lines with # comments into a string map."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class RunConfig:
    """Flat run configuration; every key of the config file format."""

    template_side: int = 16
    n_templates: int = 10
    n_particles: int = 400
    lam: float = 0.01          # file key: lambda
    mu: float = 0.1
    alpha: float = 30.0
    max_apg_iters: int = 200
    apg_tol: float = 1e-6
    sigma_theta: float = 0.02
    sigma_tx: float = 4.0
    sigma_ty: float = 4.0
    sigma_s1: float = 0.02
    sigma_s2: float = 0.02
    sigma_sh1: float = 0.005
    sigma_sh2: float = 0.005
    sigma_a1: float = 0.02
    sigma_a2: float = 0.02
    sigma_a3: float = 0.02
    sigma_a4: float = 0.02
    mode: str = "l1dpf-m"
    dict_update: bool = True
    knn_k: int | None = None   # default: max(1, round(0.1 * n_particles))
    slow_update_threshold: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: unknown value {self.mode!r}, expected one of {MODES}")
        for key in ("template_side", "n_templates", "n_particles", "max_apg_iters"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1")
        if self.template_side < 2:
            raise ConfigError("template_side: must be >= 2")
        if self.lam < 0 or self.mu < 0:
            raise ConfigError("lambda/mu: must be non-negative")
        if self.alpha <= 0:
            raise ConfigError("alpha: must be positive")
        if self.apg_tol <= 0:
            raise ConfigError("apg_tol: must be positive")
        for f in fields(self):
            if f.name.startswith("sigma_") and getattr(self, f.name) < 0:
                raise ConfigError(f"{f.name}: must be non-negative")
        if not -1.0 <= self.slow_update_threshold <= 1.0:
            raise ConfigError("slow_update_threshold: must lie in [-1, 1]")
        if self.knn_k is not None and not 1 <= self.knn_k <= self.n_particles:
            raise ConfigError("knn_k: must satisfy 1 <= knn_k <= n_particles")
        if self.seed < 0:
            raise ConfigError("seed: must be non-negative")

    def resolved_knn_k(self) -> int:
        if self.knn_k is not None:
            return self.knn_k
        return max(1, round(0.1 * self.n_particles))

    def lines(self) -> list[str]:
        """Effective configuration, one 'key = value' line per key."""
        out = []
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            val = getattr(self, f.name)
            if f.name == "knn_k":
                val = self.resolved_knn_k()
            if isinstance(val, bool):
                val = "true" if val else "false"
            out.append(f"{key} = {val}")
        return out


_CONFIG_KEYS: dict[str, tuple[str, type]] = {}
for _f in fields(RunConfig):
    _key = "lambda" if _f.name == "lam" else _f.name
    _typ = {"template_side": int, "n_templates": int, "n_particles": int,
            "max_apg_iters": int, "knn_k": int, "seed": int,
            "mode": str, "dict_update": bool}.get(_f.name, float)
    _CONFIG_KEYS[_key] = (_f.name, _typ)


def _convert(key: str, value: str, typ: type):
    try:
        if typ is bool:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def config_from_mapping(kv: dict[str, str]) -> RunConfig:
    kwargs = {}
    for key, value in kv.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        name, typ = _CONFIG_KEYS[key]
        kwargs[name] = _convert(key, value, typ)
    return RunConfig(**kwargs)


def load_config(path: Path | str) -> RunConfig:
    """Load and validate a key = value config file; absent keys take defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return config_from_mapping(parse_kv_text(path.read_text(), source=str(path)))
