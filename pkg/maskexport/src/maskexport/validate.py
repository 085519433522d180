"""Schema validation for detections JSON-lines files.

Violations never raise; they are collected into a report so batch tooling can
inspect a whole file in one pass.  The checks mirror what the tracking
pipeline's loader rejects (duplicate frames, missing fields, bad run lengths).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    frames_covered: int = 0
    detection_count: int = 0
    class_histogram: Counter = field(default_factory=Counter)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [f"frames: {self.frames_covered}",
                 f"detections: {self.detection_count}"]
        for name, count in sorted(self.class_histogram.items()):
            lines.append(f"class {name}: {count}")
        lines.append("violations: " + (str(len(self.violations)) or "0"))
        lines.extend(self.violations)
        return "\n".join(lines)


def _check_detection(obj: dict, lineno: int, report: ValidationReport) -> None:
    if "score" not in obj:
        report.violations.append(f"line {lineno}: detection missing 'score'")
        return
    score = obj["score"]
    if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
        report.violations.append(f"line {lineno}: score {score!r} outside [0, 1]")
    has_quad = obj.get("quad") is not None
    has_mask = obj.get("mask_rle") is not None
    if not has_quad and not has_mask:
        report.violations.append(f"line {lineno}: detection has neither quad nor mask")
        return
    if has_quad and len(obj["quad"]) != 8:
        report.violations.append(f"line {lineno}: quad needs 8 numbers")
    if has_mask:
        mask = obj["mask_rle"]
        if "size" not in mask or "counts" not in mask:
            report.violations.append(f"line {lineno}: mask_rle needs 'size' and 'counts'")
            return
        h, w = mask["size"]
        counts = mask["counts"]
        if any(c < 0 for c in counts):
            report.violations.append(f"line {lineno}: negative run length")
        elif sum(counts) != h * w:
            report.violations.append(
                f"line {lineno}: run lengths sum to {sum(counts)}, expected {h * w}")
    report.detection_count += 1
    report.class_histogram[str(obj.get("class", "object"))] += 1


def validate(path: Path | str) -> ValidationReport:
    """Check every line of a detections file; returns the violation report."""
    path = Path(path)
    report = ValidationReport()
    seen: set[int] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            report.violations.append(f"line {lineno}: malformed JSON: {exc}")
            continue
        if "frame" not in obj:
            report.violations.append(f"line {lineno}: missing 'frame'")
            continue
        frame = obj["frame"]
        if not isinstance(frame, int) or frame < 1:
            report.violations.append(f"line {lineno}: bad frame index {frame!r}")
            continue
        if frame in seen:
            report.violations.append(f"line {lineno}: duplicate entry for frame {frame}")
            continue
        seen.add(frame)
        report.frames_covered += 1
        for det in obj.get("detections", []):
            _check_detection(det, lineno, report)
    return report
